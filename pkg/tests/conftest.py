import numpy as np
import pytest

from cmvlab.functionals import Functional, WeightPart
from cmvlab.gu_transform import GUPerturbation
from cmvlab.laurent_core import LaurentPoly

# shared perturbation data; zeros of LG sit away from the circle and from NODE
LG = LaurentPoly([1 + 0.2j, -(2.5 + 0.3j), 1], 1)
LC = LaurentPoly([0.7 - 0.2j, 3, 1 + 0.1j], 1)
LC2 = LaurentPoly([0.3, 0.2 - 0.1j, 4, 0.5j, 0.6], 2)
LG_DOUBLE = LaurentPoly.from_roots(1.0, [2 + 0.5j, 2 + 0.5j], 1)
NODE = 0.8 * np.exp(0.7j)

MASSES = {
    "none": {},
    "one": {(0, 0): [(NODE, 0, 0.2)]},
    "double": {(0, 0): [(NODE, 0, 0.2)], (0, 1): [(0.9 * np.exp(-1j), 1, 0.1)]},
}


def lebesgue():
    return Functional.lebesgue()


def weighted():
    # W = 0.25 z^-1 + 2 + 0.5 z: not Hermitian, so the two families differ
    return Functional(WeightPart.laurent(LaurentPoly([0.25, 2, 0.5], 1)))


def perturbation(kind: str, name: str) -> GUPerturbation:
    """Named test perturbations: none, one, double (double zero of L_gamma), nc2 (N_c = 2)."""
    if name == "double":
        return GUPerturbation(kind, LG_DOUBLE, LC, MASSES["double"])
    if name == "nc2":
        return GUPerturbation(kind, LG, LC2, {(1, 0): [(NODE, 0, 0.2)]})
    return GUPerturbation(kind, LG, LC, MASSES[name])


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# acceptance verdicts, printed once at the end of the session
ACCEPTANCE: dict = {}


@pytest.fixture
def record():
    def put(number: int, title: str, ok: bool, detail: str):
        ACCEPTANCE[number] = (title, ok, detail)
    return put


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        title, ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k} [{'PASS' if ok else 'FAIL'}] {title}: {detail}")
