from math import factorial

import numpy as np
import pytest

from conftest import lebesgue, weighted
from cmvlab.gu_transform import (
    ChristoffelRoute,
    FormulaInapplicable,
    GUPerturbation,
    direct_family,
    perturb_functional,
    u_family,
)
from cmvlab.laurent_core import LaurentPoly, reciprocal
from cmvlab.toeplitz_reduction import (
    PreconditionError,
    b_matrix,
    b_matrix_partition_sum,
    build_diagonal_masses,
    coincidence_condition,
    diagonal_mass_value,
    dual_formula_residual,
    is_self_reciprocal,
    positivity_scan,
    plain_prefactor_ratios,
    real_reduction_residual,
    self_reciprocal_from_zeros,
    sparse_pattern_check,
    toeplitz_residual,
    xi_pairing_residual,
)

REF_LG = LaurentPoly([1, -2.5, 1], 1)
REF_LC = LaurentPoly([1, 3, 1], 1)


def test_self_reciprocal_examples():
    c = is_self_reciprocal(LaurentPoly([1, 2, 1], 1))
    assert c.verdict and c.argument_condition
    (zero, mult), = c.on_circle
    assert abs(zero + 1) < 1e-6 and mult == 2
    assert not is_self_reciprocal(LaurentPoly([-3, 1])).verdict
    assert not is_self_reciprocal(LaurentPoly([1j, 2, 1], 1)).verdict


def test_self_reciprocal_from_zeros():
    L = self_reciprocal_from_zeros(1.7, [(0.4 + 0.3j, 1), (0.5j, 2)], [(np.exp(0.9j), 1)])
    c = is_self_reciprocal(L)
    assert c.verdict and c.argument_condition and not c.unpaired
    z = np.exp(1j * np.linspace(0, 2 * np.pi, 9))
    assert np.max(np.abs(L(z).imag)) < 1e-12 * np.max(np.abs(L(z)))
    # a rotated leading coefficient breaks both the identity and the argument condition
    rotated = LaurentPoly(L.coeffs * np.exp(0.3j), L.n_minus)
    c = is_self_reciprocal(rotated)
    assert not c.verdict and not c.argument_condition


def test_coincidence():
    P12 = GUPerturbation("12", REF_LG, reciprocal(REF_LC))
    P21 = GUPerturbation("21", reciprocal(REF_LG), REF_LC)
    assert coincidence_condition(P12, P21)
    other = GUPerturbation("21", reciprocal(REF_LG), LaurentPoly([1, 4, 1], 1))
    assert not coincidence_condition(P12, other)
    with pytest.raises(ValueError):
        coincidence_condition(P21, P12)
    shared = GUPerturbation("21", REF_LG, LaurentPoly.from_roots(1.0, [2.0, 3.0], 1))
    with pytest.raises(PreconditionError):
        coincidence_condition(GUPerturbation("12", REF_LG, reciprocal(shared.L_c)), shared)


def test_coincident_transforms_give_the_same_gram():
    diag = build_diagonal_masses(REF_LG, REF_LC, [0.1, 0.1])
    u = lebesgue()
    G21 = direct_family(u, diag.P21, 14).source.entries
    G12 = direct_family(u, diag.P12, 14).source.entries
    assert np.max(np.abs(G21 - G12)) < 1e-9 * np.max(np.abs(G21))


def test_zero_mass_data_gives_no_atoms():
    diag = build_diagonal_masses(REF_LG, REF_LC, [0.0, 0.0])
    assert diag.P21.masses == () and diag.P12.masses == ()


def test_simple_zero_atoms_pair_zeta_with_reflection():
    diag = build_diagonal_masses(REF_LG, REF_LC, [0.1, 0.0])
    zeta = diag.zeros.zeros[0]
    (key, atoms), = diag.P21.masses
    assert len(atoms) == 1
    # the (2,1) atom sits at zeta; its slot is the zero 1/conj(zeta) of L_gamma*
    assert abs(atoms[0].node - zeta) < 1e-12
    assert abs(diag.P21.zeros_gamma.zeros[key[0]] - 1 / np.conj(zeta)) < 1e-9


def test_b_matrix():
    z = 0.7 + 0.2j
    B = b_matrix(z, 5)
    assert abs(B[1, 1] + z ** -2) < 1e-14
    np.testing.assert_allclose(B, b_matrix_partition_sum(z, 5), atol=1e-12)
    # f(z) = h(1/z) with h(w) = w^3, so f''(z) = 12 z^-5
    dh = [(1 / z) ** 3, 3 * (1 / z) ** 2, 6 / z, 6.0, 0.0]
    assert abs(sum(B[2, j] * dh[j] for j in range(5)) - 12 * z ** -5) < 1e-10


def test_diagonal_mass_value_matches_gram_difference(rng):
    diag = build_diagonal_masses(REF_LG, REF_LC, [0.1, -0.05])
    u = lebesgue()
    bare = build_diagonal_masses(REF_LG, REF_LC, [0.0, 0.0])
    f = LaurentPoly(rng.normal(size=5) + 1j * rng.normal(size=5), 2)
    g = LaurentPoly(rng.normal(size=4) + 1j * rng.normal(size=4), 1)
    diff = perturb_functional(u, diag.P21).pair(f, g) - perturb_functional(u, bare.P21).pair(f, g)
    assert abs(diff - diagonal_mass_value(diag, f, g)) < 1e-12 * max(1.0, abs(diff))


def test_double_zero_diagonal_masses():
    Lg = self_reciprocal_from_zeros(1.0, [(0.5, 2)], [])
    data = [[0.2, 0.05], [0.1, -0.03]]
    diag = build_diagonal_masses(Lg, REF_LC, data)
    zeta = diag.zeros.zeros[0]
    # Xi_{0,k|0,q} = k! q! (Hankel block @ B)[k, q]
    H = np.array([[data[0][0], data[0][1]], [data[0][1], 0.0]])
    expect = factorial(1) * factorial(1) * (H @ b_matrix(zeta, 2))
    assert abs(diag.xi[1, 1] - expect[1, 1]) < 1e-12
    u = lebesgue()
    bare = build_diagonal_masses(Lg, REF_LC, [[0.0, 0.0], [0.0, 0.0]])
    f, g = LaurentPoly([1, 2, -1], 1), LaurentPoly([0.5, 1j], 0)
    diff = perturb_functional(u, diag.P21).pair(f, g) - perturb_functional(u, bare.P21).pair(f, g)
    assert abs(diff - diagonal_mass_value(diag, f, g)) < 1e-10


def test_mass_length_mismatch():
    with pytest.raises(PreconditionError):
        build_diagonal_masses(REF_LG, REF_LC, [0.1])


def test_xi_pairing_and_sparse_structure():
    diag = build_diagonal_masses(REF_LG, REF_LC, [0.1, 0.1])
    fam = u_family(lebesgue(), 12)
    assert xi_pairing_residual(diag, fam) < 1e-12
    chk = sparse_pattern_check(diag, fam)
    assert chk["structural"] < 1e-12
    # the closed-form matrix places the deflated value of the wrong partner
    assert chk["closed_form"] > 1e-2


def test_dual_routes_on_reference():
    diag = build_diagonal_masses(REF_LG, REF_LC, [0.1, 0.1])
    res = dual_formula_residual(lebesgue(), diag, range(2, 9))
    for row in res["rows"]:
        for k in ("phi1_jet", "phi1_kernel", "phi1_routes", "phi2_jet", "phi2_kernel",
                  "phi2_routes", "H_21", "H_12"):
            assert row[k] < 1e-10, (row["l"], k, row[k])
    assert res["gram_gap"] < 1e-12
    assert res["real_reduction"]["S1_minus_S2"] < 1e-9
    assert res["real_reduction"]["H_imag"] < 1e-12


def test_plain_prefactors_only_differ_for_complex_extremes():
    diag = build_diagonal_masses(REF_LG, REF_LC, [0.1, 0.1])
    assert all(abs(v - 1) < 1e-15 for v in plain_prefactor_ratios(diag, 3).values())
    Lg = self_reciprocal_from_zeros(1.0, [(0.4 + 0.3j, 2)], [])
    Lc = self_reciprocal_from_zeros(2.0, [(0.2 - 0.5j, 1)], [])
    diag = build_diagonal_masses(Lg, Lc, [[0.05, 0.02], [0.05, 0.02]])
    ratios = plain_prefactor_ratios(diag, 3)
    assert max(abs(v - 1) for v in ratios.values()) > 1e-2
    conj = dual_formula_residual(lebesgue(), diag, range(4, 8), variant="conjugate")
    plain = dual_formula_residual(lebesgue(), diag, range(4, 8), variant="plain")
    assert max(r["phi2_jet"] for r in conj["rows"]) < 1e-9
    assert max(r["phi2_jet"] for r in plain["rows"]) > 1e-3


def test_tau_vanishing_is_reported():
    diag = build_diagonal_masses(REF_LG, REF_LC, [1.0, 1.0])
    route = ChristoffelRoute(u_family(lebesgue(), 16), diag.P21)
    with pytest.raises(FormulaInapplicable):
        route.phi(2, 0.5 + 0.5j)


def test_positivity_depends_on_the_sign_of_the_ratio():
    # L_c / L_gamma is negative on the circle for the reference pair
    diag = build_diagonal_masses(REF_LG, REF_LC, [0.0, 0.0])
    scan = positivity_scan(direct_family(lebesgue(), diag.P21, 12))
    assert scan["real"] and scan["max_real"] < 0
    flipped = -1 * REF_LG
    diag = build_diagonal_masses(flipped, REF_LC, [0.0, 0.0])
    scan = positivity_scan(direct_family(lebesgue(), diag.P21, 12))
    assert scan["positive"]


def test_off_circle_masses_break_positivity():
    # nonnegative mass data at zeta and 1/conj(zeta) off the circle still gives negative norms
    diag = build_diagonal_masses(-1 * REF_LG, REF_LC, [0.1, 0.1])
    scan = positivity_scan(direct_family(lebesgue(), diag.P21, 12))
    assert scan["real"] and not scan["positive"]


def test_toeplitz_residual():
    G = lebesgue().gram(6).entries
    assert toeplitz_residual(G) == 0.0
    G[0, 1] = 0.5
    assert toeplitz_residual(G) > 0.1


def test_real_reduction_residual_flags_complex_forms():
    fam = u_family(weighted(), 8)
    assert real_reduction_residual(fam)["S1_minus_S2"] > 1e-3
