"""Gauss-Borel factorization of Gram truncations and the objects built on it:
biorthogonal Laurent polynomials, second kind functions and Christoffel-Darboux
kernels (plain and mixed)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .functionals import GramTruncation, SesquilinearForm, chi
from .laurent_core import CauchyKernel, DomainError, LaurentPoly

PIVOT_TOL = 1e-10


class QuasidefiniteError(ArithmeticError):
    """A leading principal minor vanishes (to the pivot threshold)."""

    def __init__(self, minor: int, pivot: complex):
        super().__init__(f"leading principal minor of size {minor} is singular (pivot {pivot:.3e})")
        self.minor = minor
        self.pivot = pivot


def ldu(A: np.ndarray, pivot_tol: float = PIVOT_TOL):
    """A = L diag(d) U with unit triangular L, U; no pivoting."""
    A = np.array(A, dtype=complex)
    n = A.shape[0]
    scale = float(np.max(np.linalg.norm(A, axis=1))) if n else 0.0
    L = np.eye(n, dtype=complex)
    U = np.eye(n, dtype=complex)
    d = np.zeros(n, dtype=complex)
    W = A.copy()
    for k in range(n):
        p = W[k, k]
        if not abs(p) > pivot_tol * scale:
            raise QuasidefiniteError(k + 1, p)
        d[k] = p
        L[k + 1:, k] = W[k + 1:, k] / p
        U[k, k + 1:] = W[k, k + 1:] / p
        W[k + 1:, k + 1:] -= np.outer(W[k + 1:, k], W[k, k + 1:]) / p
    return L, d, U


def ldu_pivots(A: np.ndarray, pivot_tol: float = PIVOT_TOL):
    """(True, None) when every pivot clears the threshold, else (False, failing minor size)."""
    try:
        ldu(A, pivot_tol)
    except QuasidefiniteError as exc:
        return False, exc.minor
    return True, None


def _unit_lower_inv(L: np.ndarray) -> np.ndarray:
    return solve_triangular(L, np.eye(L.shape[0], dtype=complex), lower=True, unit_diagonal=True)


def chi_vector(z, n: int) -> np.ndarray:
    """[chi_0(z), ..., chi_{n-1}(z)] along the first axis."""
    z = np.asarray(z, dtype=complex)
    if np.any(z == 0):
        raise DomainError("CMV basis evaluated at the origin")
    e = np.array([chi(i) for i in range(n)])
    return z[None, ...] ** e.reshape((n,) + (1,) * z.ndim)


def chi_taylor(z: complex, n: int, order: int) -> np.ndarray:
    """(n, order+1) array of normalized derivatives of the basis at z."""
    out = np.empty((n, order + 1), dtype=complex)
    for i in range(n):
        out[i] = LaurentPoly.monomial(chi(i)).taylor(np.asarray(z), order)
    return out


@dataclass(frozen=True)
class BiorthFamily:
    """Truncated factors G = S1^{-1} H S2^{-dagger} and the form that produced G."""

    l: int
    S1: np.ndarray
    S2: np.ndarray
    H: np.ndarray
    source: GramTruncation
    form: SesquilinearForm | None = None

    def _S(self, a: int) -> np.ndarray:
        if a not in (1, 2):
            raise ValueError("family side must be 1 or 2")
        return self.S1 if a == 1 else self.S2

    def _check(self, k: int):
        if not 0 <= k < self.l:
            raise IndexError(f"index {k} outside the family of size {self.l}")

    def phi_poly(self, a: int, k: int) -> LaurentPoly:
        self._check(k)
        row = self._S(a)[k]
        return LaurentPoly.from_dict({chi(j): row[j] for j in range(k + 1) if row[j] != 0})

    def phi(self, a: int, k: int, z):
        self._check(k)
        z = np.asarray(z, dtype=complex)
        return np.tensordot(self._S(a)[k, :k + 1], chi_vector(z, k + 1), axes=1)

    def phi_values(self, a: int, z: complex, count: int | None = None) -> np.ndarray:
        n = self.l if count is None else count
        return self._S(a)[:n, :n] @ chi_vector(z, n)

    def phi_taylor(self, a: int, z: complex, order: int, count: int | None = None) -> np.ndarray:
        """(count, order+1) normalized derivatives of phi_{a,k} at z."""
        n = self.l if count is None else count
        return self._S(a)[:n, :n] @ chi_taylor(z, n, order)

    def phi_derivative(self, a: int, k: int, z: complex, order: int) -> complex:
        from math import factorial
        return factorial(order) * complex(self.phi_poly(a, k).taylor(np.asarray(z), order)[order])

    # second kind functions

    def _require_form(self):
        if self.form is None:
            raise ValueError("family was built without its sesquilinear form")
        return self.form

    def second_kind_taylor(self, a: int, z: complex, order: int = 0,
                           count: int | None = None) -> np.ndarray:
        """(count, order+1) normalized z-derivatives of C_{a,k}(z)."""
        u = self._require_form()
        z = complex(z)
        slot = 2 if a == 1 else 1
        if u.support_distance(np.conj(z), slot) < u.delta_min:
            raise DomainError(f"second kind function requested too close to the support at {z}")
        n = self.l if count is None else count
        kernels = [CauchyKernel(np.conj(z), r + 1, (-1) ** r) for r in range(order + 1)]
        basis = [LaurentPoly.monomial(chi(j)) for j in range(n)]
        if a == 1:
            M = u.pair_matrix(basis, kernels)
            return self.S1[:n, :n] @ M
        M = u.pair_matrix(kernels, basis)
        return (M.conj() @ self.S2[:n, :n].T).T

    def second_kind(self, a: int, k: int, z: complex) -> complex:
        self._check(k)
        return complex(self.second_kind_taylor(a, z, 0, k + 1)[k, 0])

    # kernels

    def cd_kernel(self, l: int, z1: complex, z2: complex) -> complex:
        """K^[l](conj z1, z2) = sum_k conj(phi_2k(z1)) phi_1k(z2) / H_k."""
        if not 0 <= l <= self.l:
            raise IndexError("kernel order exceeds the family size")
        p2 = self.phi_values(2, z1, l)
        p1 = self.phi_values(1, z2, l)
        return complex(np.sum(p2.conj() * p1 / self.H[:l]))

    def cd_kernel_taylor(self, l: int, z1: complex, z2: complex, order: int, slot: int = 2) -> np.ndarray:
        """Normalized derivatives of the kernel in z2 (slot 2) or in conj(z1) (slot 1)."""
        if slot == 2:
            p2 = self.phi_values(2, z1, l).conj()
            return (p2 / self.H[:l]) @ self.phi_taylor(1, z2, order, l)
        # derivatives in w = conj(z1) of conj(phi_2k(conj w)), a polynomial with conjugated coefficients
        t = (self.S2[:l, :l].conj() @ chi_taylor(np.conj(z1), l, order))
        p1 = self.phi_values(1, z2, l)
        return (p1 / self.H[:l]) @ t

    def kernel_poly(self, l: int, z: complex, slot: int) -> LaurentPoly:
        """K^[l] with one point frozen at z, as a Laurent polynomial in the free variable.

        slot 2: w -> conj(K^[l](conj w, z)); slot 1: w -> K^[l](conj z, w).
        """
        if not 0 <= l <= self.l:
            raise IndexError("kernel order exceeds the family size")
        out = LaurentPoly.constant(0.0)
        if slot == 2:
            c = (self.phi_values(1, z, l) / self.H[:l]).conj()
            for k in range(l):
                out = out + self.phi_poly(2, k) * LaurentPoly.constant(c[k])
            return out
        c = self.phi_values(2, z, l).conj() / self.H[:l]
        for k in range(l):
            out = out + self.phi_poly(1, k) * LaurentPoly.constant(c[k])
        return out

    def cd_projection(self, l: int, L: LaurentPoly, z: complex) -> tuple[complex, complex]:
        """(<L, conj K^[l](conj ., z)>, <K^[l](conj z, .), L>) through the form itself.

        For L in the span of chi_0..chi_{l-1} these reproduce L(z) and conj(L(z)).
        """
        u = self._require_form()
        right = u.pair(L, self.kernel_poly(l, z, 2))
        left = u.pair(self.kernel_poly(l, z, 1), L)
        return complex(right), complex(left)

    def mixed_kernel(self, which: str, l: int, x1: complex, x2: complex) -> complex:
        """K_C2^[l](conj x1, x2) or K_C1^[l](conj x1, x2)."""
        return complex(self.mixed_kernel_taylor(which, l, x1, x2, 0)[0])

    def mixed_kernel_taylor(self, which: str, l: int, x1: complex, x2: complex, order: int) -> np.ndarray:
        """Normalized derivatives in the second variable x2."""
        if not 0 <= l <= self.l:
            raise IndexError("kernel order exceeds the family size")
        if which == "C2":
            c2 = self.second_kind_taylor(2, x1, 0, l)[:, 0].conj()
            return (c2 / self.H[:l]) @ self.phi_taylor(1, x2, order, l)
        if which == "C1":
            p2 = self.phi_values(2, x1, l).conj()
            return (p2 / self.H[:l]) @ self.second_kind_taylor(1, x2, order, l)
        raise ValueError("mixed kernel must be 'C1' or 'C2'")

    def reconstruction_residual(self) -> float:
        S1i = _unit_lower_inv(self.S1)
        S2i = _unit_lower_inv(self.S2)
        R = S1i @ np.diag(self.H) @ S2i.conj().T
        G = self.source.entries
        return float(np.max(np.abs(R - G)) / max(1.0, np.max(np.abs(G))))

    def to_json(self) -> dict:
        c = lambda M: [[[float(x.real), float(x.imag)] for x in row] for row in M]
        return {"l": self.l, "H": [[float(h.real), float(h.imag)] for h in self.H],
                "S1": c(self.S1), "S2": c(self.S2)}


def factorize(G, pivot_tol: float = PIVOT_TOL, form: SesquilinearForm | None = None) -> BiorthFamily:
    """Gauss-Borel factorization G = S1^{-1} H S2^{-dagger} with unitriangular S1, S2."""
    if not isinstance(G, GramTruncation):
        G = np.asarray(G, dtype=complex)
        G = GramTruncation(G.shape[0], G, True)
    L, d, U = ldu(G.entries, pivot_tol)
    S1 = _unit_lower_inv(L)
    S2 = _unit_lower_inv(U.conj().T)
    return BiorthFamily(G.size, S1, S2, d, G, form)


def family(u: SesquilinearForm, l: int, pivot_tol: float = PIVOT_TOL) -> BiorthFamily:
    return factorize(u.gram(l), pivot_tol, u)


def phi(fam: BiorthFamily, a: int, k: int, z):
    return fam.phi(a, k, z)


def second_kind(fam: BiorthFamily, a: int, k: int, z: complex) -> complex:
    return fam.second_kind(a, k, z)


def cd_kernel(fam: BiorthFamily, l: int, z1: complex, z2: complex) -> complex:
    return fam.cd_kernel(l, z1, z2)


def mixed_kernel(fam: BiorthFamily, which: str, l: int, x1: complex, x2: complex) -> complex:
    return fam.mixed_kernel(which, l, x1, x2)
