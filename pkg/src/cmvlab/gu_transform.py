"""Geronimus-Uvarov transformations of sesquilinear forms.

Two independent routes are provided.  The direct route builds the perturbed
form, assembles its Gram matrix and refactorizes it.  The determinantal route
works only with the unperturbed family: spectral jets of second kind functions
and of the biorthogonal polynomials are collected into small matrices whose
bordered determinants give the perturbed polynomials and norms.  Connectors and
all connection formulas linking the two families are also evaluated here.

Conventions.  For the (1,2) transform the denominator acts on the first slot:
<f, g>~ = <f / L_gamma, L_c g> + masses at the zeros of L_gamma in the first
slot.  For the (2,1) transform the roles are mirrored:
<f, g>~ = <L_c f, g / L_gamma> + masses at the zeros of L_gamma in the second
slot.  Mass functionals xi_{i,l} are lists of (node, order, weight) atoms acting
as <xi, h> = sum weight * h^(order)(node) / order!.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from math import isfinite

import numpy as np

from .biorth import BiorthFamily, chi_taylor, factorize
from .functionals import (
    BivariateMass,
    SesquilinearForm,
    TransformedFunctional,
    L_of_upsilon,
    _cplx,
)
from .laurent_core import (
    CauchyKernel,
    DomainError,
    LaurentPoly,
    Product,
    ZeroSet,
    deflate,
    delta_L,
    delta_L_poly,
    is_prepared,
    roots_with_multiplicity,
    spectral_jet,
)

DELTA_MIN = 1e-3
TAU_TOL = 1e-13


class FormulaInapplicable(ArithmeticError):
    """tau vanishes, so the determinantal formulas do not apply."""


@dataclass(frozen=True)
class MassAtom:
    node: complex
    order: int
    weight: complex


@dataclass(frozen=True)
class GUPerturbation:
    """Perturbing pair (L_gamma, L_c), transform type and masses at the zeros of L_gamma.

    ``masses`` maps (zero index, derivative order) to a tuple of MassAtom; zero
    indices follow the ordering of ``roots_with_multiplicity``.
    """

    kind: str
    L_gamma: LaurentPoly
    L_c: LaurentPoly
    masses: tuple = ()
    cluster_tol: float = 1e-7
    zeros_gamma: ZeroSet = field(init=False, repr=False)
    zeros_c: ZeroSet = field(init=False, repr=False)

    def __post_init__(self):
        if self.kind not in ("12", "21"):
            raise ValueError("transform type must be '12' or '21'")
        for name, L in (("L_gamma", self.L_gamma), ("L_c", self.L_c)):
            ok, N = is_prepared(L)
            if not ok or N < 1:
                raise ValueError(f"{name} must be a prepared Laurent polynomial with N >= 1")
        object.__setattr__(self, "zeros_gamma", roots_with_multiplicity(self.L_gamma, self.cluster_tol))
        object.__setattr__(self, "zeros_c", roots_with_multiplicity(self.L_c, self.cluster_tol))
        norm = []
        for key, atoms in (self.masses.items() if isinstance(self.masses, dict) else self.masses):
            i, l = key
            if not 0 <= i < len(self.zeros_gamma):
                raise ValueError(f"mass zero index {i} out of range")
            if not 0 <= l < self.zeros_gamma.multiplicities[i]:
                raise ValueError(f"mass order {l} exceeds multiplicity of zero {i}")
            atoms = tuple(a if isinstance(a, MassAtom) else MassAtom(complex(a[0]), int(a[1]), complex(a[2]))
                          for a in atoms)
            for a in atoms:
                if a.node == 0 or a.order < 0:
                    raise ValueError("mass atoms need a nonzero node and nonnegative order")
            norm.append(((int(i), int(l)), atoms))
        object.__setattr__(self, "masses", tuple(sorted(norm)))

    @property
    def N_gamma(self) -> int:
        return self.L_gamma.n_plus

    @property
    def N_c(self) -> int:
        return self.L_c.n_plus

    @property
    def side(self) -> int:
        """Family side whose jets enter the determinantal formulas."""
        return 1 if self.kind == "21" else 2

    @property
    def conj_gamma(self) -> LaurentPoly:
        """z -> conj(L_gamma(conj z)); its zeros are the conjugated zeros of L_gamma."""
        return self.L_gamma.conj_coeffs()

    def mass_slots(self):
        """[(i, l)] in block order, one per entry of the mass row vectors."""
        return [(i, l) for i, m in enumerate(self.zeros_gamma.multiplicities) for l in range(m)]

    def atoms(self, i: int, l: int):
        for key, atoms in self.masses:
            if key == (i, l):
                return atoms
        return ()

    def xi_matrix(self, n: int, with_lc: bool = False) -> np.ndarray:
        """(n, 2N_gamma) array of <xi_{i,l}, chi_j> (or <xi_{i,l}, L_c chi_j>)."""
        slots = self.mass_slots()
        out = np.zeros((n, len(slots)), dtype=complex)
        for c, (i, l) in enumerate(slots):
            for a in self.atoms(i, l):
                T = chi_taylor(a.node, n, a.order)
                if with_lc:
                    lc = self.L_c.taylor(np.asarray(a.node), a.order)
                    # Leibniz rule for the product L_c * chi_j
                    col = sum(lc[a.order - s] * T[:, s] for s in range(a.order + 1))
                else:
                    col = T[:, a.order]
                out[:, c] += a.weight * col
        return out

    def bivariate_masses(self):
        """Mass atoms of the perturbed form, with L_c folded in by the product rule."""
        out = []
        for (i, l), atoms in self.masses:
            zeta = self.zeros_gamma.zeros[i]
            for a in atoms:
                lc = self.L_c.taylor(np.asarray(a.node), a.order)
                for s in range(a.order + 1):
                    w = a.weight * complex(lc[a.order - s])
                    if w == 0:
                        continue
                    if self.kind == "21":
                        out.append(BivariateMass(a.node, s, zeta, l, w))
                    else:
                        out.append(BivariateMass(zeta, l, a.node, s, np.conj(w)))
        return out

    def to_json(self) -> dict:
        c = lambda w: [float(np.real(w)), float(np.imag(w))]
        return {"type": self.kind, "L_gamma": self.L_gamma.to_json(), "L_c": self.L_c.to_json(),
                "masses": [{"zero_index": i, "order": l,
                            "atoms": [{"node": c(a.node), "order": a.order, "weight": c(a.weight)}
                                      for a in atoms]}
                           for (i, l), atoms in self.masses]}

    @classmethod
    def from_json(cls, data) -> "GUPerturbation":
        if isinstance(data, str):
            data = json.loads(data)
        kind = str(data["type"]).replace(",", "").replace("(", "").replace(")", "")
        masses = {}
        for m in data.get("masses", []):
            key = (int(m["zero_index"]), int(m["order"]))
            atoms = [MassAtom(_cplx(a["node"]), int(a.get("order", 0)), _cplx(a["weight"]))
                     for a in m["atoms"]]
            masses[key] = masses.get(key, ()) + tuple(atoms)
        return cls(kind, LaurentPoly.from_json(data["L_gamma"]), LaurentPoly.from_json(data["L_c"]),
                   masses)


# ---------------------------------------------------------------------------
# direct route

def perturb_functional(u: SesquilinearForm, P: GUPerturbation) -> TransformedFunctional:
    slot = 1 if P.kind == "12" else 2
    for z in P.zeros_gamma.zeros:
        if u.support_distance(z, slot) < u.delta_min:
            raise DomainError(f"zero {z} of L_gamma lies on the support of the form")
    if P.kind == "12":
        return TransformedFunctional(u, left_div=P.L_gamma, right_mul=P.L_c,
                                     masses=P.bivariate_masses())
    return TransformedFunctional(u, left_mul=P.L_c, right_div=P.L_gamma,
                                 masses=P.bivariate_masses())


def direct_family(u: SesquilinearForm, P: GUPerturbation, l: int) -> BiorthFamily:
    ut = perturb_functional(u, P)
    return factorize(ut.gram(l), form=ut)


# ---------------------------------------------------------------------------
# connectors

@dataclass(frozen=True)
class Connector:
    which: str          # "omega1" or "omega2"
    kind: str
    matrix: np.ndarray
    valid_rows: int     # rows below this index are free of truncation effects
    sub: int            # number of possible subdiagonals
    sup: int            # number of possible superdiagonals


def _lower_inv(S: np.ndarray) -> np.ndarray:
    from scipy.linalg import solve_triangular
    return solve_triangular(S, np.eye(S.shape[0], dtype=complex), lower=True, unit_diagonal=True)


def connector(fam: BiorthFamily, fam_t: BiorthFamily, P: GUPerturbation, which: str) -> Connector:
    n = min(fam.l, fam_t.l)
    Lg = L_of_upsilon(P.L_gamma, n)
    Lc = L_of_upsilon(P.L_c, n)
    S1, S2 = fam.S1[:n, :n], fam.S2[:n, :n]
    T1, T2 = fam_t.S1[:n, :n], fam_t.S2[:n, :n]
    NG, NC = P.N_gamma, P.N_c
    if P.kind == "12":
        if which == "omega1":
            M, sub, sup, N = S1 @ Lg @ _lower_inv(T1), 2 * NC, 2 * NG, NG
        else:
            M, sub, sup, N = T2 @ Lc @ _lower_inv(S2), 2 * NG, 2 * NC, NC
    else:
        if which == "omega1":
            M, sub, sup, N = T1 @ Lc @ _lower_inv(S1), 2 * NG, 2 * NC, NC
        else:
            M, sub, sup, N = S2 @ Lg @ _lower_inv(T2), 2 * NC, 2 * NG, NG
    if which not in ("omega1", "omega2"):
        raise ValueError("connector must be 'omega1' or 'omega2'")
    return Connector(which, P.kind, M, n - 2 * N, sub, sup)


def band_violation(C: Connector) -> float:
    """Largest entry outside the admissible band, over the valid rows."""
    M = C.matrix[:C.valid_rows]
    i, j = np.indices(M.shape)
    mask = (j - i > C.sup) | (i - j > C.sub)
    return float(np.max(np.abs(M[mask]))) if mask.any() else 0.0


def _coef(L: LaurentPoly, l: int, N: int) -> complex:
    return L.coef(N if l % 2 == 0 else -N)


def extreme_entry_residuals(C: Connector, fam: BiorthFamily, fam_t: BiorthFamily,
                            P: GUPerturbation) -> dict:
    """Residuals of the closed forms of the outermost band entries."""
    NG, NC = P.N_gamma, P.N_c
    M = C.matrix
    upper, lower = [], []
    if C.which == "omega1" and P.kind == "12":
        for l in range(C.valid_rows):
            if l + 2 * NG < M.shape[1]:
                upper.append(abs(M[l, l + 2 * NG] - _coef(P.L_gamma, l, NG)))
    elif C.which == "omega2" and P.kind == "21":
        for l in range(C.valid_rows):
            if l + 2 * NG < M.shape[1]:
                upper.append(abs(M[l, l + 2 * NG] - _coef(P.L_gamma, l, NG)))
    else:
        for l in range(C.valid_rows):
            if l + 2 * NC < M.shape[1]:
                upper.append(abs(M[l, l + 2 * NC] - _coef(P.L_c, l, NC)))
            if l >= 2 * NG:
                g = _coef(P.L_gamma, l, NG) * fam_t.H[l] / fam.H[l - 2 * NG]
                expect = np.conj(g) if P.kind == "12" else np.conj(_coef(P.L_gamma, l, NG)) * \
                    fam_t.H[l] / fam.H[l - 2 * NG]
                lower.append(abs(M[l, l - 2 * NG] - expect) / max(1.0, abs(expect)))
    return {"upper": max(upper, default=0.0), "lower": max(lower, default=0.0)}


def coupling_residual(fam: BiorthFamily, fam_t: BiorthFamily, P: GUPerturbation) -> float:
    """(1,2): O1 H~ = H O2^dagger;  (2,1): H~ O2^dagger = O1 H; on the valid block."""
    O1 = connector(fam, fam_t, P, "omega1")
    O2 = connector(fam, fam_t, P, "omega2")
    v = min(O1.valid_rows, O2.valid_rows)
    A, B = O1.matrix[:v, :v], O2.matrix[:v, :v]
    H, Ht = fam.H[:v], fam_t.H[:v]
    if P.kind == "12":
        R = A * Ht[None, :] - H[:, None] * B.conj().T
    else:
        R = Ht[:, None] * B.conj().T - A * H[None, :]
    return float(np.max(np.abs(R)) / max(1.0, np.max(np.abs(A * Ht[None, :]))))


def _rel(lhs, rhs) -> float:
    lhs, rhs = np.asarray(lhs), np.asarray(rhs)
    scale = max(1.0, float(np.max(np.abs(lhs))), float(np.max(np.abs(rhs))))
    return float(np.max(np.abs(lhs - rhs)) / scale)


def connection_residual_laurent(fam, fam_t, P: GUPerturbation, zs, swap: bool = False) -> dict:
    """Polynomial connection formulas.  ``swap`` exchanges the two connectors (negative control)."""
    O1 = connector(fam, fam_t, P, "omega1")
    O2 = connector(fam, fam_t, P, "omega2")
    if swap:
        O1, O2 = O2, O1
    v = min(O1.valid_rows, O2.valid_rows)
    n = O1.matrix.shape[0]
    out = {"omega1": 0.0, "omega2": 0.0}
    for z in zs:
        p1, p2 = fam.phi_values(1, z, n), fam.phi_values(2, z, n)
        t1, t2 = fam_t.phi_values(1, z, n), fam_t.phi_values(2, z, n)
        Lg, Lc = complex(P.L_gamma(z)), complex(P.L_c(z))
        if P.kind == "12":
            r1 = _rel((O1.matrix @ t1)[:v], (Lg * p1)[:v])
            r2 = _rel((O2.matrix @ p2)[:v], (Lc * t2)[:v])
        else:
            r1 = _rel((O1.matrix @ p1)[:v], (Lc * t1)[:v])
            r2 = _rel((O2.matrix @ t2)[:v], (Lg * p2)[:v])
        out["omega1"] = max(out["omega1"], r1)
        out["omega2"] = max(out["omega2"], r2)
    return out


def connection_residual_cauchy(fam, fam_t, P: GUPerturbation, zs) -> dict:
    """Second kind connection formulas, including their truncated forms for k >= 2 N_gamma."""
    ut = fam_t.form
    u = fam.form
    O1 = connector(fam, fam_t, P, "omega1")
    O2 = connector(fam, fam_t, P, "omega2")
    v = min(O1.valid_rows, O2.valid_rows)
    n = O1.matrix.shape[0]
    NG = P.N_gamma
    cg = P.conj_gamma
    basis_t1 = [fam_t.phi_poly(1, k) for k in range(v)]
    basis_t2 = [fam_t.phi_poly(2, k) for k in range(v)]
    basis_1 = [fam.phi_poly(1, k) for k in range(v)]
    basis_2 = [fam.phi_poly(2, k) for k in range(v)]
    out = {}
    for z in zs:
        zc = np.conj(z)
        dg = delta_L_poly(P.L_gamma, zc)
        ker = CauchyKernel(zc, 1, 1.0)
        lc_ker = Product(P.L_c, ker)
        if P.kind == "21":
            C1 = fam.second_kind_taylor(1, z, 0, n)[:, 0]
            Ct1 = fam_t.second_kind_taylor(1, z, 0, n)[:, 0]
            lhs = (O1.matrix @ C1)[:v] - Ct1[:v] * complex(cg(z))
            rhs = -ut.pair_matrix(basis_t1, [dg])[:, 0]
            r_full = _rel(lhs, rhs)
            r_trunc = _rel(lhs[2 * NG:], np.zeros(v - 2 * NG))
            Ct2 = fam_t.second_kind_taylor(2, z, 0, n)[:, 0]
            lhs22 = (O2.matrix @ Ct2)[:v]
            rhs22 = u.pair_matrix([lc_ker], basis_2)[0].conj()
            r_cc = _rel(lhs22, rhs22)
            names = ("second_kind", "second_kind_tail", "second_kind_lc")
        else:
            C2 = fam.second_kind_taylor(2, z, 0, n)[:, 0]
            Ct2 = fam_t.second_kind_taylor(2, z, 0, n)[:, 0]
            lhs = (O2.matrix @ C2)[:v] - complex(cg(z)) * Ct2[:v]
            rhs = -ut.pair_matrix([dg], basis_t2)[0].conj()
            r_full = _rel(lhs, rhs)
            r_trunc = _rel(lhs[2 * NG:], np.zeros(v - 2 * NG))
            Ct1 = fam_t.second_kind_taylor(1, z, 0, n)[:, 0]
            lhs11 = (O1.matrix @ Ct1)[:v]
            rhs11 = u.pair_matrix(basis_1, [lc_ker])[:, 0]
            r_cc = _rel(lhs11, rhs11)
            names = ("second_kind", "second_kind_tail", "second_kind_lc")
        for name, r in zip(names, (r_full, r_trunc, r_cc)):
            out[name] = max(out.get(name, 0.0), r)
    return out


def _kernel_blocks(M: np.ndarray, l: int, NG: int, NC: int) -> np.ndarray:
    """[[0, C_l], [-Gamma_l, 0]] built from connector entries."""
    p, q = 2 * NG, 2 * NC
    B = np.zeros((q + p, p + q), dtype=complex)
    for r in range(p):
        for c in range(r, p):
            B[q + r, c] = -M[l + r, l - p + c]
    for r in range(q):
        for c in range(r + 1):
            B[r, p + c] = M[l - q + r, l + c]
    return B


def connection_residual_kernels(fam, fam_t, P: GUPerturbation, pairs, l: int) -> dict:
    """Christoffel-Darboux and mixed kernel connection formulas at order l."""
    u = fam.form
    NG, NC = P.N_gamma, P.N_c
    O1 = connector(fam, fam_t, P, "omega1")
    O2 = connector(fam, fam_t, P, "omega2")
    v = min(O1.valid_rows, O2.valid_rows)
    if l < 2 * max(NG, NC) or l + 2 * max(NG, NC) > v:
        raise ValueError(f"kernel order {l} outside the valid range for families of size {v}")
    jl = np.arange(l - 2 * NC, l + 2 * NG)
    kr = np.arange(l - 2 * NG, l + 2 * NC)
    n = max(jl.max(), kr.max()) + 1
    Ht, H = fam_t.H, fam.H
    out = {}

    def put(name, r):
        out[name] = max(out.get(name, 0.0), r)

    if P.kind == "12":
        B = _kernel_blocks(O2.matrix.conj(), l, NG, NC)
        for z1, z2 in pairs:
            t1 = fam_t.phi_values(1, z2, n)
            p2c = fam.phi_values(2, z1, n).conj()
            lhs = np.conj(P.L_c(z1)) * fam_t.cd_kernel(l, z1, z2) - P.L_gamma(z2) * fam.cd_kernel(l, z1, z2)
            rhs = (t1[jl] / Ht[jl]) @ B @ p2c[kr]
            put("cd_kernel", _rel(lhs, rhs))
            # mixed kernels: (x1, x2) = (z1, z2)
            C2c = fam.second_kind_taylor(2, z1, 0, n)[:, 0].conj()
            lhs = (P.L_gamma(np.conj(z1)) * fam_t.mixed_kernel("C2", l, z1, z2)
                   - P.L_gamma(z2) * fam.mixed_kernel("C2", l, z1, z2)
                   - delta_L(P.L_gamma, np.conj(z1), z2))
            rhs = (t1[jl] / Ht[jl]) @ B @ C2c[kr]
            put("mixed_C2", _rel(lhs, rhs))
            Ct1 = fam_t.second_kind_taylor(1, z2, 0, n)[:, 0]
            g = Product(P.L_c, CauchyKernel(np.conj(z2), 1, 1.0))
            pairs_u = u.pair_matrix([fam.phi_poly(1, k) for k in range(l)], [g])[:, 0]
            proj = np.sum(fam.phi_values(2, z1, l).conj() / H[:l] * pairs_u)
            lhs = np.conj(P.L_c(z1)) * fam_t.mixed_kernel("C1", l, z1, z2) - proj
            rhs = (Ct1[jl] / Ht[jl]) @ B @ p2c[kr]
            put("mixed_C1", _rel(lhs, rhs))
    else:
        B = _kernel_blocks(O1.matrix, l, NG, NC)
        for z1, z2 in pairs:
            t2c = fam_t.phi_values(2, z1, n).conj()
            p1 = fam.phi_values(1, z2, n)
            lhs = P.L_c(z2) * fam_t.cd_kernel(l, z1, z2) - np.conj(P.L_gamma(z1)) * fam.cd_kernel(l, z1, z2)
            rhs = (t2c[jl] / Ht[jl]) @ B @ p1[kr]
            put("cd_kernel", _rel(lhs, rhs))
            Ct2c = fam_t.second_kind_taylor(2, z1, 0, n)[:, 0].conj()
            f = Product(P.L_c, CauchyKernel(np.conj(z1), 1, 1.0))
            pairs_u = u.pair_matrix([f], [fam.phi_poly(2, k) for k in range(l)])[0]
            proj = np.sum(fam.phi_values(1, z2, l) / H[:l] * pairs_u)
            lhs = P.L_c(z2) * fam_t.mixed_kernel("C2", l, z1, z2) - proj
            rhs = (Ct2c[jl] / Ht[jl]) @ B @ p1[kr]
            put("mixed_C2", _rel(lhs, rhs))
            C1 = fam.second_kind_taylor(1, z2, 0, n)[:, 0]
            cg = P.conj_gamma
            lhs = (cg(z2) * fam_t.mixed_kernel("C1", l, z1, z2)
                   - np.conj(P.L_gamma(z1)) * fam.mixed_kernel("C1", l, z1, z2)
                   - delta_L(cg, np.conj(z1), z2))
            rhs = (t2c[jl] / Ht[jl]) @ B @ C1[kr]
            put("mixed_C1", _rel(lhs, rhs))
    return out


# ---------------------------------------------------------------------------
# spectral jets and the determinantal route

def mass_jet_matrix(P: GUPerturbation) -> np.ndarray:
    """Block diagonal matrix of anti-triangular blocks built from the deflated conj(L_gamma)."""
    Z = P.zeros_gamma
    size = Z.total
    M = np.zeros((size, size), dtype=complex)
    off = 0
    for j, (zeta, m) in enumerate(zip(Z.zeros, Z.multiplicities)):
        defl = deflate(P.L_gamma, Z, j).conj_coeffs()
        ell = defl.taylor(np.asarray(np.conj(zeta)), m - 1)
        for r in range(m):
            for c in range(m):
                k = r + c - m + 1
                if k >= 0:
                    M[off + r, off + c] = ell[k]
        off += m
    return M


def _conj_zero_jets_of_second_kind(fam: BiorthFamily, P: GUPerturbation, count: int) -> np.ndarray:
    """(count, 2 N_gamma) jets of C_{s,k} at the conjugated zeros of L_gamma."""
    s = P.side
    blocks = []
    for zeta, m in zip(P.zeros_gamma.zeros, P.zeros_gamma.multiplicities):
        blocks.append(fam.second_kind_taylor(s, np.conj(zeta), m - 1, count))
    return np.concatenate(blocks, axis=1)


def _zero_jets_of_phi(fam: BiorthFamily, a: int, Z: ZeroSet, count: int) -> np.ndarray:
    blocks = [fam.phi_taylor(a, z, m - 1, count) for z, m in zip(Z.zeros, Z.multiplicities)]
    return np.concatenate(blocks, axis=1)


def jet_rows(fam: BiorthFamily, P: GUPerturbation, count: int | None = None) -> np.ndarray:
    """Rows [J(C_k) - <xi, phi_k> Lmat | J^{L_c}(phi_k)] for k < count."""
    n = fam.l if count is None else count
    s = P.side
    jc = _conj_zero_jets_of_second_kind(fam, P, n)
    S = fam.S1 if s == 1 else fam.S2
    xi = S[:n, :n] @ P.xi_matrix(n)
    left = jc - xi @ mass_jet_matrix(P)
    right = _zero_jets_of_phi(fam, s, P.zeros_c, n)
    return np.concatenate([left, right], axis=1)


def _det(A: np.ndarray) -> complex:
    # row equilibration before the LU-based determinant
    s = np.max(np.abs(A), axis=1)
    s[s == 0] = 1.0
    return complex(np.linalg.det(A / s[:, None]) * np.prod(s))


class ChristoffelRoute:
    """Determinantal formulas for the perturbed family from the unperturbed one."""

    def __init__(self, fam: BiorthFamily, P: GUPerturbation, rows: np.ndarray | None = None):
        self.fam = fam
        self.P = P
        self.rows = jet_rows(fam, P) if rows is None else np.array(rows)
        self.NG, self.NC = P.N_gamma, P.N_c
        self.p = 2 * (self.NG + self.NC)

    def with_rows(self, rows: np.ndarray) -> "ChristoffelRoute":
        return ChristoffelRoute(self.fam, self.P, rows)

    @property
    def l_min(self) -> int:
        return 2 * max(self.NG, self.NC)

    @property
    def l_max(self) -> int:
        # phi needs rows up to l + 2 N_c, the norm needs tau at l + 1
        return self.rows.shape[0] - 2 * self.NC - 2

    def _check(self, l: int):
        if l < self.l_min or l > self.l_max:
            raise ValueError(f"l = {l} outside [{self.l_min}, {self.l_max}]")

    def tau(self, l: int) -> complex:
        if l < self.l_min or l + 2 * self.NC > self.rows.shape[0]:
            raise ValueError(f"tau index {l} outside the available rows")
        return _det(self.rows[l - 2 * self.NG: l + 2 * self.NC])

    def _tau_checked(self, l: int) -> complex:
        t = self.tau(l)
        block = self.rows[l - 2 * self.NG: l + 2 * self.NC]
        scale = np.prod(np.max(np.abs(block), axis=1))
        if not isfinite(abs(t)) or abs(t) <= TAU_TOL * scale:
            raise FormulaInapplicable(f"tau_{l} vanishes to tolerance")
        return t

    def phi(self, l: int, z) -> complex:
        """Perturbed polynomial on the same side as the jet rows."""
        self._check(l)
        s = self.P.side
        z = complex(z)
        Lc_z = complex(self.P.L_c(z))
        if abs(Lc_z) < 1e-14:
            raise DomainError("evaluation at a zero of L_c")
        tau = self._tau_checked(l)
        k0, k1 = l - 2 * self.NG, l + 2 * self.NC + 1
        col = self.fam.phi_values(s, z, k1)[k0:k1]
        M = np.concatenate([self.rows[k0:k1], col[:, None]], axis=1)
        return _coef(self.P.L_c, l, self.NC) / Lc_z * _det(M) / tau

    def H(self, l: int) -> complex:
        self._check(l)
        t0, t1 = self._tau_checked(l), self.tau(l + 1)
        Hs = self.fam.H[l - 2 * self.NG]
        if self.P.side == 2:
            Hs = np.conj(Hs)
        X = _coef(self.P.L_c, l, self.NC) / np.conj(_coef(self.P.L_gamma, l, self.NG)) * Hs * t1 / t0
        return X if self.P.side == 1 else np.conj(X)

    def dual(self, l: int, z, variant: str = "conjugate") -> complex:
        """Perturbed polynomial on the other side, bordered by kernel jets.

        ``variant='plain'`` keeps tau unconjugated in the (1,2) prefactor.
        """
        self._check(l)
        P, fam = self.P, self.fam
        s = P.side
        other = 3 - s
        z = complex(z)
        tau = self._tau_checked(l)
        m0 = l - 2 * self.NG + 1
        Hs = fam.H if s == 1 else fam.H.conj()
        coeff = fam.phi_values(other, z, m0).conj() / Hs[:m0]
        last = coeff @ self.rows[:m0]
        cg = P.conj_gamma
        cgz = complex(cg(np.conj(z)))          # conj(L_gamma(z))
        if abs(cgz) < 1e-14:
            raise DomainError("evaluation at a zero of L_gamma")
        dpoly = delta_L_poly(cg, np.conj(z))
        last[:2 * self.NG] += spectral_jet(dpoly, P.zeros_gamma.conj()) / cgz
        M = np.concatenate([self.rows[m0:l + 2 * self.NC], last[None, :]], axis=0)
        d = _det(M)
        lead = np.conj(_coef(P.L_gamma, l, self.NG))
        tau_used = tau
        if s == 2 and variant == "plain":
            tau_used = np.conj(tau)
        val = -cgz * Hs[l - 2 * self.NG] / (lead * tau_used) * d
        return np.conj(val)


def tau(fam: BiorthFamily, P: GUPerturbation, l: int) -> complex:
    return ChristoffelRoute(fam, P).tau(l)


def christoffel_phi1(fam: BiorthFamily, P: GUPerturbation, l: int, z, variant: str = "conjugate") -> complex:
    r = ChristoffelRoute(fam, P)
    return r.phi(l, z) if P.kind == "21" else r.dual(l, z, variant)


def christoffel_phi2(fam: BiorthFamily, P: GUPerturbation, l: int, z, variant: str = "conjugate") -> complex:
    r = ChristoffelRoute(fam, P)
    return r.phi(l, z) if P.kind == "12" else r.dual(l, z, variant)


def christoffel_H(fam: BiorthFamily, P: GUPerturbation, l: int) -> complex:
    return ChristoffelRoute(fam, P).H(l)


# ---------------------------------------------------------------------------
# jet identities

def jet_identity_residual(fam_t: BiorthFamily, P: GUPerturbation, count: int,
                          contour_nodes: int = 64) -> float:
    """Residual of J(conj(L_gamma) C~_k) = <L_c xi, phi~_k> Lmat for k < count.

    The left side is evaluated independently of the mass formula: Taylor
    coefficients of conj(L_gamma) * C~ at each conjugated zero come from a
    trapezoid rule on a small circle around it, using the full second kind
    functions of the perturbed form.
    """
    s = P.side
    ut = fam_t.form
    cg = P.conj_gamma
    slot = 2 if s == 1 else 1
    blocks = []
    for j, (zeta, m) in enumerate(zip(P.zeros_gamma.zeros, P.zeros_gamma.multiplicities)):
        c = np.conj(zeta)
        on_circle, nodes = ut.support(slot)
        dists = [abs(abs(c) - 1.0)] if on_circle else []
        dists += [abs(c - np.conj(a)) for a in nodes if abs(a - zeta) > 1e-9]
        dists += [abs(c - np.conj(z)) for i, z in enumerate(P.zeros_gamma.zeros) if i != j]
        rho = 0.3 * min(dists + [abs(c)])
        w = c + rho * np.exp(2j * np.pi * np.arange(contour_nodes) / contour_nodes)
        vals = np.array([fam_t.second_kind_taylor(s, wp, 0, count)[:, 0] * cg(wp) for wp in w])
        coeffs = np.fft.fft(vals, axis=0) / contour_nodes
        blocks.append(np.stack([coeffs[r] / rho ** r for r in range(m)], axis=1))
    lhs = np.concatenate(blocks, axis=1)
    S = fam_t.S1 if s == 1 else fam_t.S2
    rhs = (S[:count, :count] @ P.xi_matrix(count, with_lc=True)) @ mass_jet_matrix(P)
    return _rel(lhs, rhs)


# ---------------------------------------------------------------------------
# sampling and reporting

def sample_points(P: GUPerturbation | None = None, count: int = 16, radii=(0.7, 1.4),
                  delta_min: float = DELTA_MIN):
    """Points on two circles, rotated away from perturbation zeros."""
    per = count // len(radii)
    bad = []
    if P is not None:
        for Z in (P.zeros_gamma, P.zeros_c):
            bad += list(Z.zeros) + list(np.conj(Z.zeros))
    pts = []
    for ir, r in enumerate(radii):
        offset = 0.3 + 0.17 * ir
        for k in range(per):
            for tries in range(50):
                z = r * np.exp(1j * (2 * np.pi * k / per + offset + 0.01 * tries))
                if all(abs(z - b) >= 10 * delta_min for b in bad):
                    break
            pts.append(complex(z))
    return pts


def _rel_vec(a, b) -> float:
    a, b = np.asarray(a), np.asarray(b)
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-300))


def report(u: SesquilinearForm, P: GUPerturbation, l_values, zs=None, variant: str = "conjugate",
           fam: BiorthFamily | None = None, fam_t: BiorthFamily | None = None) -> dict:
    """Per-l oracle-versus-formula comparison, ascending in l."""
    l_values = sorted(int(l) for l in l_values)
    if not l_values:
        return {"rows": [], "connectors": {}}
    NG, NC = P.N_gamma, P.N_c
    n = max(l_values) + 2 * (NG + NC) + 6
    zs = sample_points(P) if zs is None else list(zs)
    if fam is None:
        fam = u_family(u, n)
    if fam_t is None:
        fam_t = direct_family(u, P, n)
    route = ChristoffelRoute(fam, P)
    rows = []
    for l in l_values:
        ph_side = P.side
        oracle_same = np.array([fam_t.phi(ph_side, l, z) for z in zs])
        oracle_other = np.array([fam_t.phi(3 - ph_side, l, z) for z in zs])
        same = np.array([route.phi(l, z) for z in zs])
        other = np.array([route.dual(l, z, variant) for z in zs])
        Hc = route.H(l)
        if ph_side == 1:
            r1, r2 = _rel_vec(same, oracle_same), _rel_vec(other, oracle_other)
        else:
            r1, r2 = _rel_vec(other, oracle_other), _rel_vec(same, oracle_same)
        t = route.tau(l)
        rows.append({"l": l, "phi1": r1, "phi2": r2,
                     "H": abs(Hc - fam_t.H[l]) / abs(fam_t.H[l]),
                     "H_direct": [float(fam_t.H[l].real), float(fam_t.H[l].imag)],
                     "tau": [float(t.real), float(t.imag)]})
    conn = {}
    for which in ("omega1", "omega2"):
        C = connector(fam, fam_t, P, which)
        ext = extreme_entry_residuals(C, fam, fam_t, P)
        conn[which] = {"band": band_violation(C), "extreme_upper": ext["upper"],
                       "extreme_lower": ext["lower"]}
    conn["coupling"] = coupling_residual(fam, fam_t, P)
    return {"rows": rows, "connectors": conn}


def u_family(u: SesquilinearForm, n: int) -> BiorthFamily:
    return factorize(u.gram(n), form=u)
