import numpy as np
import pytest

from cmvlab.functionals import (
    BivariateMass,
    Functional,
    SobolevTerm,
    WeightPart,
    chi,
    chi_index,
    chi_poly,
    L_of_upsilon,
    upsilon,
)
from cmvlab.laurent_core import DomainError, LaurentPoly, NumericError, fejer_riesz_lift
from cmvlab.toeplitz_reduction import toeplitz_residual


def test_cmv_ordering():
    assert [chi(l) for l in range(7)] == [0, -1, 1, -2, 2, -3, 3]
    assert all(chi_index(chi(l)) == l for l in range(40))
    with pytest.raises(ValueError):
        chi(-1)


def test_shift_matrix_acts_as_multiplication():
    U = upsilon(12)
    z = 0.7 + 0.4j
    x = np.array([chi_poly(i)(z) for i in range(12)])
    # rows whose image stays in the truncation
    for i in range(10):
        assert abs(U[i] @ x - z * x[i]) < 1e-13


def test_L_of_upsilon_exact():
    L = LaurentPoly([0.5, -1, 2], 1)
    M = L_of_upsilon(L, 14)
    z = 1.2 * np.exp(0.9j)
    x = np.array([chi_poly(i)(z) for i in range(14)])
    for i in range(10):
        assert abs(M[i] @ x - L(z) * x[i]) < 1e-12


def test_lebesgue_gram_is_identity():
    G = Functional.lebesgue().gram(9).entries
    np.testing.assert_allclose(G, np.eye(9), atol=1e-15)


def test_exact_and_quadrature_paths_agree():
    W = LaurentPoly([0.25, 2, 0.5], 1)
    exact = Functional(WeightPart.laurent(W)).gram(10).entries
    # the same density written as a quotient forces the trapezoid rule
    quad = Functional(WeightPart.rational(W * LaurentPoly([2.0]), LaurentPoly([2.0]))).gram(10).entries
    np.testing.assert_allclose(quad, exact, atol=1e-12)


def test_fejer_riesz_weight_matches_coefficient_gram():
    # |1 + z|^2 on the circle: <z^a, z^b> has entries 2 on the diagonal, 1 next to it
    W = fejer_riesz_lift([1, 2, 1])
    G = Functional(WeightPart.laurent(W)).gram(8).entries
    n = 8
    e = np.array([chi(i) for i in range(n)])
    expect = np.where(e[:, None] == e[None, :], 2.0, 0.0) + np.where(np.abs(e[:, None] - e[None, :]) == 1, 1.0, 0.0)
    assert np.max(np.abs(G - expect)) < 1e-12


def test_weight_gram_is_toeplitz_and_masses_break_it():
    u = Functional(WeightPart.laurent(LaurentPoly([0.25, 2, 0.5], 1)))
    assert toeplitz_residual(u.gram(12).entries) < 1e-15
    v = Functional(u.weight, [BivariateMass(0.5 + 0.1j, 0, 1.5, 1, 0.2)])
    assert toeplitz_residual(v.gram(12).entries) > 1e-3


def test_mass_pairing():
    M = BivariateMass(0.5, 1, 2.0j, 0, 0.3 - 0.1j)
    u = Functional(masses=[M])
    f, g = LaurentPoly([0, 0, 1]), LaurentPoly([1, 1])  # z^2, 1 + z
    # weight * f'(0.5) * conj(g(2j))
    expect = (0.3 - 0.1j) * 1.0 * np.conj(1 + 2.0j)
    assert abs(u.pair(f, g) - expect) < 1e-14


def test_sobolev_points_pairing():
    u = Functional(sobolev=[SobolevTerm(1, 2, [(0.5, 2.0)])])
    f, g = LaurentPoly([0, 0, 1]), LaurentPoly([0, 0, 0, 1])
    # 2 * f'(0.5) * conj(g''(0.5)) = 2 * 1 * 3
    assert abs(u.pair(f, g) - 6.0) < 1e-14
    with pytest.raises(ValueError):
        SobolevTerm(0, 0, [(0.5, 1.0)])


def test_validation():
    with pytest.raises(ValueError):
        Functional()
    with pytest.raises(DomainError):
        BivariateMass(0, 0, 1, 0, 1.0)
    with pytest.raises(DomainError):
        WeightPart.rational(LaurentPoly([1.0]), LaurentPoly([-1.0, 1.0]))   # pole at z = 1


def test_near_pole_quadrature_fails_loudly():
    w = WeightPart.rational(LaurentPoly([1.0]), LaurentPoly([-1.00001, 1.0]), delta_min=1e-7)
    with pytest.raises(NumericError):
        Functional(w, delta_min=1e-7).gram(4)


def test_json_round_trip():
    u = Functional(WeightPart.laurent(LaurentPoly([0.25, 2, 0.5], 1)),
                   [BivariateMass(0.5 + 0.1j, 0, 1.5, 1, 0.2)],
                   [SobolevTerm(1, 1, [(0.9j, 0.5)])])
    v = Functional.from_json(u.to_json())
    np.testing.assert_allclose(v.gram(8).entries, u.gram(8).entries, atol=1e-15)


def test_support():
    u = Functional(WeightPart.laurent(LaurentPoly([1.0])), [BivariateMass(0.5, 0, 2.0, 0, 1.0)])
    assert u.support(1) == (True, (0.5,))
    assert u.support(2) == (True, (2.0,))
    assert abs(u.support_distance(0.45, 1) - 0.05) < 1e-12
