"""Zero order Toeplitz specializations of the Geronimus-Uvarov transforms.

A zero order Toeplitz form pairs f and g through a measure on the unit circle,
<f, g> = int f conj(g) dmu.  For such a base form the (1,2) transform with
(L_gamma, L_c*) and the (2,1) transform with (L_gamma*, L_c) produce the same
weight part L_c / L_gamma, and a common mass term

    sum Xi[i,k | j,l] f^(k)(zeta_i)/k! conj(g^(l)(1/conj zeta_j)/l!)

with zeta_i the zeros of L_gamma.  Masses restricted to the diagonal are built
from scalar data Xi^i_l acting on f(z) g_*(z) at each zeta_i, where
g_*(z) = conj(g(1/conj z)).

This module checks self-reciprocity, decides when the two transforms coincide,
turns diagonal mass data into the atom lists used by GUPerturbation, and
evaluates the pairs of equivalent determinantal expressions against the direct
refactorization.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import factorial

import numpy as np

from .biorth import BiorthFamily
from .functionals import SesquilinearForm
from .gu_transform import (
    ChristoffelRoute,
    GUPerturbation,
    MassAtom,
    _conj_zero_jets_of_second_kind,
    _zero_jets_of_phi,
    direct_family,
    mass_jet_matrix,
    sample_points,
    u_family,
)
from .laurent_core import (
    LaurentPoly,
    ZeroSet,
    deflate,
    reciprocal,
    roots_with_multiplicity,
    series_div,
)

RECIPROCAL_TOL = 1e-12
COPRIME_TOL = 1e-8


class PreconditionError(ValueError):
    """Inputs violate a structural assumption of the reduction."""


# ---------------------------------------------------------------------------
# self-reciprocity

@dataclass(frozen=True)
class SelfReciprocalCheck:
    """Outcome of the L_* = L test with the zero structure that explains it.

    ``paired`` lists (alpha, 1/conj(alpha), multiplicity) off the circle,
    ``on_circle`` lists (beta, multiplicity) and ``unpaired`` the zeros that
    fit neither pattern.  The leading coefficient argument condition is taken
    modulo pi; ``argument_residual`` is the distance of the defect to pi Z.
    """

    polynomial: LaurentPoly
    verdict: bool
    coefficient_residual: float
    paired: tuple
    on_circle: tuple
    unpaired: tuple
    argument_residual: float
    argument_condition: bool


def _wrap_pi(x: float) -> float:
    return float(abs((x + np.pi / 2) % np.pi - np.pi / 2))


def is_self_reciprocal(L: LaurentPoly, tol: float = RECIPROCAL_TOL,
                       cluster_tol: float = 1e-6) -> SelfReciprocalCheck:
    # double zeros split by ~sqrt(eps) under np.roots, hence the looser clustering
    Ls = reciprocal(L)
    scale = max(1.0, float(np.max(np.abs(L.coeffs)))) if not L.is_zero else 1.0
    lo = min(-L.n_minus, -Ls.n_minus)
    hi = max(L.n_plus, Ls.n_plus)
    res = max((abs(L.coef(k) - Ls.coef(k)) for k in range(lo, hi + 1)), default=0.0) / scale
    verdict = (not L.is_zero) and res <= tol

    paired, circle, unpaired = [], [], []
    arg_sum = 0.0
    if not L.is_zero and L.n_plus + L.n_minus > 0:
        Z = roots_with_multiplicity(L, cluster_tol)
        used = set()
        for i, (z, m) in enumerate(zip(Z.zeros, Z.multiplicities)):
            if i in used:
                continue
            if abs(abs(z) - 1.0) <= cluster_tol:
                if m % 2 == 0:
                    circle.append((complex(z), int(m)))
                    arg_sum += (m // 2) * np.angle(z)
                else:
                    unpaired.append((complex(z), int(m)))
                used.add(i)
                continue
            target = 1.0 / np.conj(z)
            match = None
            for j, (w, mw) in enumerate(zip(Z.zeros, Z.multiplicities)):
                if j not in used and j != i and abs(w - target) <= cluster_tol * max(1.0, abs(target)) * 10:
                    match = (j, mw)
                    break
            if match is not None and match[1] == m:
                used.update((i, match[0]))
                alpha = z if abs(z) < 1 else target
                paired.append((complex(alpha), complex(1.0 / np.conj(alpha)), int(m)))
                arg_sum += m * np.angle(alpha)
            else:
                used.add(i)
                unpaired.append((complex(z), int(m)))
    lead = L.coef(L.n_plus) if not L.is_zero else 0.0
    arg_res = _wrap_pi(float(np.angle(lead)) + arg_sum) if lead != 0 else float("inf")
    return SelfReciprocalCheck(L, bool(verdict), float(res), tuple(paired), tuple(circle),
                               tuple(unpaired), arg_res, bool(arg_res <= 1e-9 and not unpaired))


def self_reciprocal_from_zeros(lead_modulus: float, paired, on_circle, sign: int = 1) -> LaurentPoly:
    """L = c z^{-n} prod (z - a)^{m}(z - 1/conj a)^{m} prod (z - b)^{2q}, arg c fixed by the zeros."""
    roots = []
    arg_sum = 0.0
    for a, m in paired:
        roots += [a] * m + [1.0 / np.conj(a)] * m
        arg_sum += m * np.angle(a)
    for b, q in on_circle:
        roots += [b] * (2 * q)
        arg_sum += q * np.angle(b)
    if len(roots) % 2:
        raise ValueError("odd number of zeros")
    c = sign * lead_modulus * np.exp(-1j * arg_sum)
    return LaurentPoly.from_roots(c, roots, len(roots) // 2)


# ---------------------------------------------------------------------------
# coincidence of the two transforms

def _coprime(A: LaurentPoly, B: LaurentPoly, tol: float) -> bool:
    ra = np.roots(A.coeffs[::-1]) if len(A.coeffs) > 1 else np.array([])
    rb = np.roots(B.coeffs[::-1]) if len(B.coeffs) > 1 else np.array([])
    if len(ra) == 0 or len(rb) == 0:
        return True
    # the resultant vanishes iff two zeros meet; use the smallest separation as a scale-free measure
    return float(np.min(np.abs(ra[:, None] - rb[None, :]))) > tol


def coincidence_condition(P12: GUPerturbation, P21: GUPerturbation, tol: float = RECIPROCAL_TOL,
                          coprime_tol: float = COPRIME_TOL) -> bool:
    """True iff (L_c of P12)_* = L_c of P21 and L_gamma of P12 = (L_gamma of P21)_*."""
    if P12.kind != "12" or P21.kind != "21":
        raise ValueError("expected a (1,2) and a (2,1) perturbation, in that order")
    num12, den12 = reciprocal(P12.L_c), P12.L_gamma
    num21, den21 = P21.L_c, reciprocal(P21.L_gamma)
    for a, b in ((num12, den12), (num21, den21)):
        if not _coprime(a, b, coprime_tol):
            raise PreconditionError("numerator and denominator of the weight ratio share a zero")
    return num12.allclose(num21, tol) and den12.allclose(den21, tol)


# ---------------------------------------------------------------------------
# diagonal masses

def b_matrix(zeta: complex, m: int) -> np.ndarray:
    """B[k, j] with d^k/dz^k h(1/z) = sum_j B[k, j] h^(j)(1/z) at z = zeta (unnormalized)."""
    B = np.zeros((m, m), dtype=complex)
    B[0, 0] = 1.0
    # unsigned Lah numbers: k!/j! * C(k-1, j-1), the closed form of the partition sum
    for k in range(1, m):
        for j in range(1, k + 1):
            lah = factorial(k) / factorial(j) * _binom(k - 1, j - 1)
            B[k, j] = (-1) ** k * lah * zeta ** (-k - j)
    return B


def _binom(n: int, k: int) -> int:
    from math import comb
    return comb(n, k)


def b_matrix_partition_sum(zeta: complex, m: int) -> np.ndarray:
    """Same entries summed literally over the integer partitions (j_1, j_2, ...)."""
    B = np.zeros((m, m), dtype=complex)
    B[0, 0] = 1.0
    for k in range(1, m):
        for j in range(1, k + 1):
            total = 0
            for js in _compositions(k, j):
                denom = 1
                for x in js:
                    denom *= factorial(x)
                total += factorial(k) // denom
            B[k, j] = (-1) ** k * total * zeta ** (-k - j)
    return B


def _compositions(k: int, j: int):
    """Tuples (j_1..j_{k-j+1}) with sum j_r = j and sum r j_r = k."""
    parts = k - j + 1

    def rec(r, left_count, left_weight, acc):
        if r > parts:
            if left_count == 0 and left_weight == 0:
                yield tuple(acc)
            return
        for x in range(0, min(left_count, left_weight // r) + 1):
            yield from rec(r + 1, left_count - x, left_weight - r * x, acc + [x])

    yield from rec(1, j, k, [])


def hankel_block(values, m: int) -> np.ndarray:
    """[Xi_{a+b} / (a! b!)]: the per-zero Hankel block, zero past the last datum."""
    H = np.zeros((m, m), dtype=complex)
    for a in range(m):
        for b in range(m - a):
            H[a, b] = values[a + b] / (factorial(a) * factorial(b))
    return H


def diagonal_xi_block(values, zeta: complex, m: int) -> np.ndarray:
    """Xi[i,k | i,q] such that the mass term sum_l Xi^i_l (f g_*)^(l)(zeta)/l! is reproduced.

    Leibniz and the chain rule through 1/z give the unnormalized coefficient
    (hankel_block @ b_matrix)[k, q] of f^(k)(zeta) conj(g^(q)(1/conj zeta)); the
    normalized entry multiplies it by k! q!.
    """
    U = hankel_block(values, m) @ b_matrix(zeta, m)
    fk = np.array([factorial(k) for k in range(m)], dtype=float)
    return U * fk[:, None] * fk[None, :]


@dataclass(frozen=True)
class DiagonalMasses:
    """Diagonal mass data and everything derived from it.

    ``xi`` is the full Xi with rows (i, k) over the zeros of L_gamma and columns
    (j, l) over the same zeros (column j stands for the node 1/conj(zeta_j)).
    ``C21`` = Xi L_* in the column order of the (2,1) perturbation, ``C12`` =
    Xi^dagger L in the column order of the (1,2) perturbation.
    ``C_closed`` is the sparse closed form for the zero order case, placed in
    the (2,1) column order.
    """

    L_gamma: LaurentPoly
    L_c: LaurentPoly
    zeros: ZeroSet
    data: tuple
    zero_order: bool
    xi: np.ndarray
    P12: GUPerturbation
    P21: GUPerturbation
    C21: np.ndarray
    C12: np.ndarray
    C_closed: np.ndarray | None
    perm21: tuple
    perm12: tuple

    def to_json(self) -> dict:
        c = lambda w: [float(np.real(w)), float(np.imag(w))]
        return {"reduction": "toeplitz_zero_order" if self.zero_order else "toeplitz_diagonal",
                "xi": [c(v) if self.zero_order else [c(x) for x in v] for v in self.data],
                "L_gamma": self.L_gamma.to_json(), "L_c": self.L_c.to_json()}


def _match_zero(z: complex, Z: ZeroSet) -> int:
    d = np.abs(np.asarray(Z.zeros) - z)
    i = int(np.argmin(d))
    if d[i] > 1e-6 * max(1.0, abs(z)):
        raise PreconditionError(f"no zero matches {z}")
    return i


def _slot_offsets(Z: ZeroSet):
    off, out = 0, []
    for m in Z.multiplicities:
        out.append(off)
        off += m
    return out


def _taylor_inverse(L: LaurentPoly, z: complex, order: int) -> np.ndarray:
    one = np.zeros(order + 1, dtype=complex)
    one[0] = 1.0
    return series_div(one, np.asarray(L.taylor(np.asarray(z), order), dtype=complex))


def build_diagonal_masses(L_gamma: LaurentPoly, L_c: LaurentPoly, xi,
                          cluster_tol: float = 1e-7) -> DiagonalMasses:
    """Mass atoms for both transforms realizing the diagonal mass term.

    ``xi`` holds one entry per distinct zero of L_gamma (ordered as
    ``roots_with_multiplicity``): a scalar for the zero order case, or a
    sequence Xi^i_0..Xi^i_{m_i-1} for the general diagonal case.
    """
    Z = roots_with_multiplicity(L_gamma, cluster_tol)
    if len(xi) != len(Z):
        raise PreconditionError(f"{len(xi)} mass entries for {len(Z)} distinct zeros")
    zero_order = all(np.ndim(v) == 0 for v in xi)
    data = []
    for v, m in zip(xi, Z.multiplicities):
        if np.ndim(v) == 0:
            vals = [complex(v)] + [0.0] * (m - 1)
        else:
            vals = [complex(x) for x in v]
            if len(vals) != m:
                raise PreconditionError(f"zero of multiplicity {m} needs {m} mass coefficients")
        data.append(vals)

    size = Z.total
    offs = _slot_offsets(Z)
    Xi = np.zeros((size, size), dtype=complex)
    for i, (z, m) in enumerate(zip(Z.zeros, Z.multiplicities)):
        Xi[offs[i]:offs[i] + m, offs[i]:offs[i] + m] = diagonal_xi_block(data[i], z, m)

    Lgs, Lcs = reciprocal(L_gamma), reciprocal(L_c)
    Z21 = roots_with_multiplicity(Lgs, cluster_tol)
    offs21 = _slot_offsets(Z21)
    # column j of Xi (node 1/conj zeta_j) sits at slot perm21[j] of the (2,1) zeros
    perm21 = tuple(_match_zero(1.0 / np.conj(z), Z21) for z in Z.zeros)
    m21 = [Z21.multiplicities[p] for p in perm21]
    if m21 != list(Z.multiplicities):
        raise PreconditionError("reflected zeros do not carry matching multiplicities")

    masses21, masses12 = {}, {}
    for i, (zi, mi) in enumerate(zip(Z.zeros, Z.multiplicities)):
        for k in range(mi):
            for j, (zj, mj) in enumerate(zip(Z.zeros, Z.multiplicities)):
                for l in range(mj):
                    x = Xi[offs[i] + k, offs[j] + l]
                    if x == 0:
                        continue
                    # (2,1): f-slot atoms at zeta_i acting on L_c f, g-slot zero 1/conj zeta_j
                    inv = _taylor_inverse(L_c, zi, k)
                    key = (perm21[j], l)
                    masses21[key] = masses21.get(key, ()) + tuple(
                        MassAtom(complex(zi), s, complex(x * inv[k - s])) for s in range(k + 1))
                    # (1,2): f-slot zero zeta_i, g-slot atoms at 1/conj zeta_j acting on L_c* g
                    node = complex(1.0 / np.conj(zj))
                    inv = _taylor_inverse(Lcs, node, l)
                    key = (i, k)
                    masses12[key] = masses12.get(key, ()) + tuple(
                        MassAtom(node, s, complex(np.conj(x) * inv[l - s])) for s in range(l + 1))

    P21 = GUPerturbation("21", Lgs, L_c, masses21, cluster_tol)
    P12 = GUPerturbation("12", L_gamma, Lcs, masses12, cluster_tol)
    perm12 = tuple(_match_zero(z, P12.zeros_gamma) for z in Z.zeros)

    # Xi L_* in (2,1) column order; rows stay on the zeros of L_gamma
    Xi21 = np.zeros_like(Xi)
    for j, mj in enumerate(Z.multiplicities):
        Xi21[:, offs21[perm21[j]]:offs21[perm21[j]] + mj] = Xi[:, offs[j]:offs[j] + mj]
    C21 = Xi21 @ mass_jet_matrix(P21)
    # Xi^dagger L: rows over the reflected nodes (2,1 order), columns over the (1,2) zeros
    offs12 = _slot_offsets(P12.zeros_gamma)
    XiH = Xi.conj().T
    Xi12 = np.zeros_like(Xi)
    for j, mj in enumerate(Z.multiplicities):
        rows = XiH[offs[j]:offs[j] + mj]
        for i, mi in enumerate(Z.multiplicities):
            Xi12[offs21[perm21[j]]:offs21[perm21[j]] + mj,
                 offs12[perm12[i]]:offs12[perm12[i]] + mi] = rows[:, offs[i]:offs[i] + mi]
    C12 = Xi12 @ mass_jet_matrix(P12)

    C_closed = None
    if zero_order:
        C_closed = np.zeros_like(Xi)
        for i, (zi, mi) in enumerate(zip(Z.zeros, Z.multiplicities)):
            lz = complex(deflate(L_gamma, Z, i)(zi))
            col = offs21[perm21[i]] + mi - 1
            C_closed[offs[i], col] = data[i][0] * np.conj(lz)

    return DiagonalMasses(L_gamma, L_c, Z, tuple(tuple(d) if not zero_order else d[0] for d in data),
                            zero_order, Xi, P12, P21, C21, C12, C_closed, perm21, perm12)


def jet_over_lc(fam: BiorthFamily, a: int, Z: ZeroSet, L: LaurentPoly, count: int) -> np.ndarray:
    """(count, 2N) spectral jets of phi_{a,k} / L at the zeros Z."""
    blocks = []
    for z, m in zip(Z.zeros, Z.multiplicities):
        T = fam.phi_taylor(a, z, m - 1, count)
        inv = _taylor_inverse(L, z, m - 1)
        blocks.append(np.stack([sum(T[:, s] * inv[r - s] for s in range(r + 1)) for r in range(m)], axis=1))
    return np.concatenate(blocks, axis=1)


def sparse_pattern_check(diag: DiagonalMasses, fam: BiorthFamily, count: int = 6) -> dict:
    """Compare J^{L_gamma}_phi C with the closed-form row for sample phi = phi_{1,k}.

    Returns the structural residual (entries outside the last column of each
    block) and the value residual against the closed form.
    """
    if not diag.zero_order:
        raise ValueError("the sparse closed form exists for zero order masses only")
    J = jet_over_lc(fam, 1, diag.zeros, LaurentPoly.constant(1.0), count)
    got = J @ diag.C21
    want = J @ diag.C_closed
    mask = np.abs(diag.C_closed) > 0
    allowed = np.any(mask, axis=0)
    structural = float(np.max(np.abs(got[:, ~allowed]), initial=0.0))
    scale = max(1.0, float(np.max(np.abs(want))))
    return {"structural": structural / scale,
            "closed_form": float(np.max(np.abs(got - want))) / scale}


def xi_pairing_residual(diag: DiagonalMasses, fam: BiorthFamily, count: int = 8) -> float:
    """<xi^(2), phi_1k> against J^{L_gamma}_{phi_1k / L_c} Xi (column order of the (2,1) zeros)."""
    P = diag.P21
    lhs = fam.S1[:count, :count] @ P.xi_matrix(count)
    J = jet_over_lc(fam, 1, diag.zeros, diag.L_c, count)
    Z, offs = diag.zeros, _slot_offsets(diag.zeros)
    offs21 = _slot_offsets(P.zeros_gamma)
    rhs = np.zeros_like(lhs)
    full = J @ diag.xi
    for j, mj in enumerate(Z.multiplicities):
        rhs[:, offs21[diag.perm21[j]]:offs21[diag.perm21[j]] + mj] = full[:, offs[j]:offs[j] + mj]
    return float(np.max(np.abs(lhs - rhs)) / max(1.0, np.max(np.abs(rhs))))


def diagonal_mass_value(diag: DiagonalMasses, f: LaurentPoly, g: LaurentPoly) -> complex:
    """sum_i sum_l Xi^i_l (f g_*)^(l)(zeta_i)/l!, evaluated from the product polynomial."""
    gs = reciprocal(g)
    fg = f * gs
    total = 0j
    for i, (z, m) in enumerate(zip(diag.zeros.zeros, diag.zeros.multiplicities)):
        vals = [diag.data[i]] + [0.0] * (m - 1) if diag.zero_order else diag.data[i]
        T = fg.taylor(np.asarray(z), m - 1)
        total += sum(complex(vals[l]) * complex(T[l]) for l in range(m))
    return complex(total)


# ---------------------------------------------------------------------------
# dual determinantal expressions

def _closed_form_rows(fam: BiorthFamily, diag: DiagonalMasses) -> np.ndarray:
    """(2,1) jet rows with the mass block taken from the closed-form C."""
    P = diag.P21
    n = fam.l
    jc = _conj_zero_jets_of_second_kind(fam, P, n)
    J = jet_over_lc(fam, 1, diag.zeros, diag.L_c, n)
    right = _zero_jets_of_phi(fam, 1, P.zeros_c, n)
    return np.concatenate([jc - J @ diag.C_closed, right], axis=1)


def _mass_matrix_rows(fam: BiorthFamily, diag: DiagonalMasses, kind: str) -> np.ndarray:
    """Jet rows written with J^{L}_{phi/L_c} Xi L_* (2,1) or J^{L_*}_{phi/L_c*} Xi^dagger L (1,2)."""
    n = fam.l
    if kind == "21":
        P = diag.P21
        J = jet_over_lc(fam, 1, diag.zeros, diag.L_c, n)
        left = _conj_zero_jets_of_second_kind(fam, P, n) - J @ diag.C21
        right = _zero_jets_of_phi(fam, 1, P.zeros_c, n)
    else:
        P = diag.P12
        # rows of Xi^dagger L run over the zeros of L_gamma*, in (2,1) order
        J = jet_over_lc(fam, 2, diag.P21.zeros_gamma, reciprocal(diag.L_c), n)
        left = _conj_zero_jets_of_second_kind(fam, P, n) - J @ diag.C12
        right = _zero_jets_of_phi(fam, 2, P.zeros_c, n)
    return np.concatenate([left, right], axis=1)


def _lead(L: LaurentPoly, idx: int, N: int) -> complex:
    """Coefficient of z^{(-1)^idx N}."""
    return L.coef(N if idx % 2 == 0 else -N)


def plain_prefactor_ratios(diag: DiagonalMasses, l: int) -> dict:
    """Plain-variant prefactor divided by the prefactor of the general formulas, per quantity.

    Only the leading-coefficient factors differ; the ratios are 1 whenever the
    extreme coefficients of L_gamma and L_c are real.
    """
    NG, NC = diag.P12.N_gamma, diag.P12.N_c
    Lg, Lc = diag.L_gamma, diag.L_c
    lg0, lg1 = _lead(Lg, l, NG), _lead(Lg, l + 1, NG)
    lc0, lc1 = _lead(Lc, l, NC), _lead(Lc, l + 1, NC)
    return {
        # phi2 from the (1,2) jet determinant: L_c,(-1)^{l+1} in place of its conjugate
        "phi2_jet": lc1 / np.conj(lc1),
        # phi2 from the (2,1) kernel determinant: conj(L_gamma,(-1)^{l+1}) in the denominator
        "phi2_kernel": lg1 / np.conj(lg1),
        "H_21": lg1 / np.conj(lg1),
        "H_12": np.conj(lc0) / lc1 * lg0 / lg1,
    }


def _rel(a, b) -> float:
    a, b = np.asarray(a), np.asarray(b)
    return float(np.max(np.abs(a - b)) / max(float(np.max(np.abs(b))), 1e-300))


def dual_formula_residual(u: SesquilinearForm, diag: DiagonalMasses, l_values, zs=None,
                          variant: str = "plain", fam: BiorthFamily | None = None) -> dict:
    """Cross-check of the equivalent expressions for the perturbed family.

    For each l: phi1 from the (2,1) jet determinant and from the (1,2) kernel
    determinant, phi2 from the (1,2) jet determinant and from the (2,1) kernel
    determinant, the two norm quotients, and the jet determinant with the
    closed-form mass block.  Everything is compared with the direct
    refactorization of the perturbed form.  ``variant='plain'`` takes the
    reduced prefactors with unconjugated extreme coefficients (exact only when
    those are real); ``'conjugate'`` uses those of the general formulas.
    """
    if not coincidence_condition(diag.P12, diag.P21):
        raise PreconditionError("the two transforms do not coincide")
    l_values = sorted(int(l) for l in l_values)
    P21, P12 = diag.P21, diag.P12
    NG, NC = P21.N_gamma, P21.N_c
    n = max(l_values) + 2 * (NG + NC) + 6
    zs = sample_points(P21) if zs is None else list(zs)
    if fam is None:
        fam = u_family(u, n)
    fam_t = direct_family(u, P21, n)
    fam_t12 = direct_family(u, P12, n)
    gram_gap = _rel(fam_t12.source.entries, fam_t.source.entries)

    r21 = ChristoffelRoute(fam, P21, _mass_matrix_rows(fam, diag, "21"))
    r12 = ChristoffelRoute(fam, P12, _mass_matrix_rows(fam, diag, "12"))
    closed = ChristoffelRoute(fam, P21, _closed_form_rows(fam, diag)) if diag.zero_order else None
    dual_variant = "plain" if variant == "plain" else "conjugate"

    rows = []
    for l in l_values:
        ratios = plain_prefactor_ratios(diag, l) if variant == "plain" else {}
        o1 = np.array([fam_t.phi(1, l, z) for z in zs])
        o2 = np.array([fam_t.phi(2, l, z) for z in zs])
        phi1_jet = np.array([r21.phi(l, z) for z in zs])
        phi1_kernel = np.array([r12.dual(l, z, dual_variant) for z in zs])
        phi2_jet = np.array([r12.phi(l, z) for z in zs]) * ratios.get("phi2_jet", 1.0)
        phi2_kernel = np.array([r21.dual(l, z, dual_variant) for z in zs]) * ratios.get("phi2_kernel", 1.0)
        H21 = r21.H(l) * ratios.get("H_21", 1.0)
        H12 = r12.H(l) * ratios.get("H_12", 1.0)
        Ho = fam_t.H[l]
        row = {
            "l": l,
            "phi1_jet": _rel(phi1_jet, o1),
            "phi1_kernel": _rel(phi1_kernel, o1),
            "phi1_routes": _rel(phi1_jet, phi1_kernel),
            "phi2_jet": _rel(phi2_jet, o2),
            "phi2_kernel": _rel(phi2_kernel, o2),
            "phi2_routes": _rel(phi2_jet, phi2_kernel),
            "H_21": abs(H21 - Ho) / abs(Ho),
            "H_12": abs(H12 - Ho) / abs(Ho),
            "H_direct": [float(Ho.real), float(Ho.imag)],
            "H_formula": [float(np.real(H21)), float(np.imag(H21))],
        }
        if closed is not None:
            row["phi_closed_form_C"] = _rel(np.array([closed.phi(l, z) for z in zs]), o1)
        rows.append(row)
    return {"rows": rows, "gram_gap": gram_gap,
            "real_reduction": real_reduction_residual(fam_t),
            "positivity": positivity_scan(fam_t, max(l_values) + 1)}


# ---------------------------------------------------------------------------
# structural reductions

def toeplitz_residual(G: np.ndarray) -> float:
    """Departure of a CMV-ordered Gram matrix from the Toeplitz structure <z^a, z^b> = c_{b-a}."""
    from .functionals import chi
    n = G.shape[0]
    e = np.array([chi(i) for i in range(n)])
    diff = e[None, :] - e[:, None]
    worst = 0.0
    for d in np.unique(diff):
        vals = G[diff == d]
        worst = max(worst, float(np.max(np.abs(vals - vals[0]))))
    return worst / max(1.0, float(np.max(np.abs(G))))


def real_reduction_residual(fam: BiorthFamily) -> dict:
    """For a real form: S1 = S2 and H real."""
    s = max(1.0, float(np.max(np.abs(fam.S1))))
    return {"S1_minus_S2": float(np.max(np.abs(fam.S1 - fam.S2))) / s,
            "H_imag": float(np.max(np.abs(fam.H.imag) / np.abs(fam.H)))}


def positivity_scan(fam: BiorthFamily, count: int | None = None, imag_tol: float = 1e-10) -> dict:
    n = fam.l if count is None else count
    H = fam.H[:n]
    real = bool(np.all(np.abs(H.imag) <= imag_tol * np.abs(H)))
    return {"real": real, "positive": bool(real and np.all(H.real > 0)),
            "min_real": float(np.min(H.real)), "max_real": float(np.max(H.real))}
