import numpy as np
import pytest

from conftest import LC, LG, NODE, lebesgue, perturbation, weighted
from cmvlab.functionals import circle_nodes
from cmvlab.gu_transform import (
    ChristoffelRoute,
    GUPerturbation,
    band_violation,
    connection_residual_laurent,
    connector,
    direct_family,
    jet_rows,
    mass_jet_matrix,
    perturb_functional,
    report,
    sample_points,
    u_family,
)
from cmvlab.laurent_core import DomainError, LaurentPoly


def test_validation():
    with pytest.raises(ValueError):
        GUPerturbation("13", LG, LC)
    with pytest.raises(ValueError):
        GUPerturbation("21", LaurentPoly([1, 2, 3]), LC)           # not prepared
    with pytest.raises(ValueError):
        GUPerturbation("21", LG, LC, {(5, 0): [(NODE, 0, 1.0)]})
    with pytest.raises(ValueError):
        GUPerturbation("21", LG, LC, {(0, 1): [(NODE, 0, 1.0)]})   # simple zero has no order 1


def test_json_round_trip():
    P = perturbation("12", "double")
    Q = GUPerturbation.from_json(P.to_json())
    assert Q.masses == P.masses and Q.L_gamma == P.L_gamma and Q.kind == P.kind
    assert GUPerturbation.from_json({**P.to_json(), "type": "(1,2)"}).kind == "12"


@pytest.mark.parametrize("kind", ["12", "21"])
def test_perturbed_pairing_on_the_circle(kind):
    # no masses: the circle part is the trapezoid mean of f conj(g) times the rational weight
    P = perturbation(kind, "none")
    ut = perturb_functional(lebesgue(), P)
    f, g = LaurentPoly([1, 2j, 0.5], 1), LaurentPoly([0.3, -1, 2])
    z = circle_nodes(512)
    if kind == "21":
        vals = P.L_c(z) * f(z) * np.conj(g(z) / P.L_gamma(z))
    else:
        vals = f(z) / P.L_gamma(z) * np.conj(P.L_c(z) * g(z))
    assert abs(ut.pair(f, g) - vals.mean()) < 1e-12


def test_zero_on_support_rejected():
    Lg = LaurentPoly.from_roots(1.0, [1.0, 2.0], 1)    # a zero on the unit circle
    P = GUPerturbation("21", Lg, LC)
    with pytest.raises(DomainError):
        perturb_functional(lebesgue(), P)


def test_sample_points_avoid_zeros():
    P = perturbation("21", "one")
    pts = sample_points(P, 16)
    assert len(pts) == 16
    bad = list(P.zeros_gamma.zeros) + list(P.zeros_c.zeros)
    assert min(abs(z - b) for z in pts for b in bad) > 1e-2


@pytest.mark.parametrize("kind", ["12", "21"])
def test_determinantal_route_with_degree_two_numerator(kind):
    P = perturbation(kind, "nc2")
    rep = report(weighted(), P, range(4, 9))
    assert max(max(r["phi1"], r["phi2"], r["H"]) for r in rep["rows"]) < 1e-10


def test_unconjugated_tau_variant_is_wrong_for_complex_12():
    # the dual polynomial of the (1,2) route needs conj(tau); the variant without it drifts
    P = perturbation("12", "one")
    conj = report(weighted(), P, range(2, 7))
    plain = report(weighted(), P, range(2, 7), variant="plain")
    assert max(r["phi1"] for r in conj["rows"]) < 1e-10
    assert max(r["phi1"] for r in plain["rows"]) > 1e-3
    # (2,1) carries no such factor, both variants agree
    Q = perturbation("21", "one")
    plain21 = report(weighted(), Q, range(2, 7), variant="plain")
    assert max(r["phi2"] for r in plain21["rows"]) < 1e-10


def test_route_range_checks():
    P = perturbation("21", "one")
    fam = u_family(weighted(), 16)
    route = ChristoffelRoute(fam, P)
    assert route.l_min == 2
    assert route.l_max == 16 - 2 - 2
    with pytest.raises(ValueError):
        route.phi(1, 0.5)
    with pytest.raises(ValueError):
        route.H(route.l_max + 1)


def test_jet_rows_and_mass_blocks_shape():
    P = perturbation("21", "double")
    fam = u_family(weighted(), 12)
    rows = jet_rows(fam, P)
    assert rows.shape == (12, 2 * (P.N_gamma + P.N_c))
    M = mass_jet_matrix(P)
    assert M.shape == (2 * P.N_gamma, 2 * P.N_gamma)


@pytest.mark.parametrize("kind", ["12", "21"])
def test_connectors_are_banded(kind):
    P = perturbation(kind, "nc2")
    u = weighted()
    fam, fam_t = u_family(u, 24), direct_family(u, P, 24)
    for which in ("omega1", "omega2"):
        C = connector(fam, fam_t, P, which)
        assert band_violation(C) < 1e-10
        # the band is genuinely used: the outermost admissible diagonal is nonzero
        assert abs(C.matrix[2, 2 + C.sup]) > 1e-3


def test_swapped_connectors_fail():
    P = perturbation("21", "one")
    u = weighted()
    fam, fam_t = u_family(u, 20), direct_family(u, P, 20)
    zs = sample_points(P, 8)
    good = connection_residual_laurent(fam, fam_t, P, zs)
    bad = connection_residual_laurent(fam, fam_t, P, zs, swap=True)
    assert max(good.values()) < 1e-10
    assert max(bad.values()) > 1e-3


def test_corrupted_rows_change_the_route():
    P = perturbation("12", "one")
    u = weighted()
    fam, fam_t = u_family(u, 20), direct_family(u, P, 20)
    route = ChristoffelRoute(fam, P)
    rows = route.rows.copy()
    rows[3, 1] += 1e-3 * np.max(np.abs(rows[3]))
    bad = route.with_rows(rows)
    assert abs(bad.H(4) - fam_t.H[4]) / abs(fam_t.H[4]) > 1e-5
    assert abs(route.H(4) - fam_t.H[4]) / abs(fam_t.H[4]) < 1e-12
