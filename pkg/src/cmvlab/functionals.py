"""Finite-parameter sesquilinear forms and their Gram matrices in the CMV ordering.

A form is evaluated through ``pair_matrix(fs, gs)``, which returns the matrix of
pairings <f_i, g_j> for two lists of analytic function objects (anything with a
``taylor`` method).  When every input is a Laurent polynomial and every weight
is a Laurent polynomial, moments are extracted exactly; otherwise the circle
parts are integrated with the periodic trapezoid rule.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from math import factorial

import numpy as np

from .laurent_core import (
    DomainError,
    LaurentPoly,
    NumericError,
    Product,
    Quotient,
    roots_with_multiplicity,
)

DELTA_MIN = 1e-3
QUAD_MIN_NODES = 64
QUAD_MAX_NODES = 2 ** 16
QUAD_TOL = 1e-12


def chi(l: int) -> int:
    """Exponent of the l-th CMV basis function: 1, z^-1, z, z^-2, z^2, ..."""
    if l < 0:
        raise ValueError("CMV index must be nonnegative")
    k = l // 2
    return k if l % 2 == 0 else -k - 1


def chi_poly(l: int) -> LaurentPoly:
    return LaurentPoly.monomial(chi(l))


def chi_index(e: int) -> int:
    """Inverse of chi."""
    return 2 * e if e >= 0 else -2 * e - 1


def upsilon(l: int) -> np.ndarray:
    """Truncation of the CMV shift, (U chi)(z) = z chi(z)."""
    return L_of_upsilon(LaurentPoly.monomial(1), l)


def L_of_upsilon(L: LaurentPoly, l: int, pad: int = 0) -> np.ndarray:
    """Truncation of L(U): row i holds the CMV coefficients of L(z) chi_i(z).

    The entries are built exactly from the semi-infinite matrix, so no
    truncation error enters; ``pad`` is accepted for interface compatibility
    and only changes the size of the intermediate matrix before cropping.
    """
    n = l + max(pad, 0)
    M = np.zeros((n, n), dtype=complex)
    for i in range(n):
        e = chi(i)
        for k, c in L.terms().items():
            j = chi_index(e + k)
            if j < n:
                M[i, j] += c
    return M[:l, :l]


def circle_nodes(n: int) -> np.ndarray:
    return np.exp(2j * np.pi * np.arange(n) / n)


def circle_mean(estimate, min_nodes: int = QUAD_MIN_NODES, max_nodes: int = QUAD_MAX_NODES,
                tol: float = QUAD_TOL):
    """Run ``estimate(nodes)`` on doubling trapezoid grids until two agree."""
    n = min_nodes
    prev = np.asarray(estimate(circle_nodes(n)))
    while True:
        n *= 2
        if n > max_nodes:
            raise NumericError(f"circle quadrature did not converge with {max_nodes} nodes")
        cur = np.asarray(estimate(circle_nodes(n)))
        diff = float(np.max(np.abs(cur - prev))) if cur.size else 0.0
        scale = float(np.max(np.abs(cur))) if cur.size else 0.0
        if diff <= max(tol, tol * scale):
            return cur
        prev = cur


@dataclass(frozen=True)
class WeightPart:
    """Density on the unit circle: a Laurent polynomial or a quotient of two."""

    kind: str
    num: LaurentPoly
    den: LaurentPoly | None = None
    delta_min: float = DELTA_MIN

    def __post_init__(self):
        if self.kind not in ("circle_laurent", "circle_rational"):
            raise ValueError(f"unknown weight kind {self.kind!r}")
        if self.kind == "circle_rational":
            if self.den is None or self.den.is_zero:
                raise ValueError("rational weight needs a nonzero denominator")
            Z = roots_with_multiplicity(self.den)
            for z in Z.zeros:
                if abs(abs(z) - 1.0) < self.delta_min:
                    raise DomainError(f"weight denominator vanishes near the unit circle at {z}")

    @classmethod
    def laurent(cls, W: LaurentPoly) -> "WeightPart":
        return cls("circle_laurent", W)

    @classmethod
    def rational(cls, num: LaurentPoly, den: LaurentPoly, delta_min: float = DELTA_MIN) -> "WeightPart":
        return cls("circle_rational", num, den, delta_min)

    @property
    def exact(self) -> bool:
        return self.kind == "circle_laurent"

    def density(self, z):
        if self.kind == "circle_laurent":
            return self.num(z)
        return self.num(z) / self.den(z)

    def to_json(self) -> dict:
        if self.kind == "circle_laurent":
            return {"kind": self.kind, "W": self.num.to_json()}
        return {"kind": self.kind, "num": self.num.to_json(), "den": self.den.to_json()}

    @classmethod
    def from_json(cls, d: dict) -> "WeightPart":
        kind = d.get("kind")
        if kind == "circle_laurent":
            return cls.laurent(LaurentPoly.from_json(d["W"]))
        if kind == "circle_rational":
            return cls.rational(LaurentPoly.from_json(d["num"]), LaurentPoly.from_json(d["den"]),
                                float(d.get("delta_min", DELTA_MIN)))
        raise ValueError(f"unknown weight kind {kind!r}")


@dataclass(frozen=True)
class BivariateMass:
    """weight * f^(k)(a)/k! * conj(g^(l)(b)/l!)."""

    z1_node: complex
    z1_order: int
    z2_node: complex
    z2_order: int
    weight: complex

    def __post_init__(self):
        if self.z1_node == 0 or self.z2_node == 0:
            raise DomainError("mass nodes must be nonzero")
        if not (0 <= self.z1_order <= 12 and 0 <= self.z2_order <= 12):
            raise ValueError("mass derivative orders must lie in 0..12")

    def to_json(self) -> dict:
        c = lambda w: [float(np.real(w)), float(np.imag(w))]
        return {"z1_node": c(self.z1_node), "z1_order": self.z1_order,
                "z2_node": c(self.z2_node), "z2_order": self.z2_order, "weight": c(self.weight)}

    @classmethod
    def from_json(cls, d: dict) -> "BivariateMass":
        return cls(_cplx(d["z1_node"]), int(d["z1_order"]), _cplx(d["z2_node"]),
                   int(d["z2_order"]), _cplx(d["weight"]))


@dataclass(frozen=True)
class SobolevTerm:
    """Diagonal term pairing f^(n) with conj(g^(m)) against a circle weight or point masses."""

    n: int
    m: int
    inner: object  # WeightPart or tuple of (node, weight)

    def __post_init__(self):
        if self.n < 0 or self.m < 0 or self.n + self.m < 1:
            raise ValueError("Sobolev term needs n + m >= 1")
        if not isinstance(self.inner, WeightPart):
            object.__setattr__(self, "inner", tuple((complex(a), complex(w)) for a, w in self.inner))

    def to_json(self) -> dict:
        if isinstance(self.inner, WeightPart):
            inner = self.inner.to_json()
        else:
            inner = {"points": [{"node": [a.real, a.imag], "weight": [w.real, w.imag]}
                                for a, w in self.inner]}
        return {"n": self.n, "m": self.m, "inner": inner}

    @classmethod
    def from_json(cls, d: dict) -> "SobolevTerm":
        inner = d["inner"]
        if "points" in inner:
            pts = [(_cplx(p["node"]), _cplx(p["weight"])) for p in inner["points"]]
            return cls(int(d["n"]), int(d["m"]), pts)
        return cls(int(d["n"]), int(d["m"]), WeightPart.from_json(inner))


def _cplx(v) -> complex:
    if isinstance(v, (list, tuple)):
        return complex(float(v[0]), float(v[1]))
    return complex(v)


@dataclass(frozen=True)
class GramTruncation:
    size: int
    entries: np.ndarray
    quasidefinite: bool
    failing_minor: int | None = None


def _taylor_row(fs, z, k: int) -> np.ndarray:
    """[T_k f(z) for f in fs]."""
    return np.array([complex(f.taylor(np.asarray(z), k)[k]) for f in fs])


def _coeff_matrix(polys):
    lo = min(-p.n_minus for p in polys)
    hi = max(p.n_plus for p in polys)
    C = np.zeros((len(polys), hi - lo + 1), dtype=complex)
    for i, p in enumerate(polys):
        C[i, -p.n_minus - lo:-p.n_minus - lo + len(p.coeffs)] = p.coeffs
    return C, lo


def _exact_weight_pair(fs, gs, W: LaurentPoly) -> np.ndarray:
    # <z^a, z^b> = W_{b-a}
    Cf, lof = _coeff_matrix(fs)
    Cg, log_ = _coeff_matrix(gs)
    a = lof + np.arange(Cf.shape[1])
    b = log_ + np.arange(Cg.shape[1])
    T = np.zeros((len(a), len(b)), dtype=complex)
    diff = b[None, :] - a[:, None]
    for k, c in W.terms().items():
        T[diff == k] = c
    return Cf @ T @ Cg.conj().T


def _values(fs, z, n: int) -> np.ndarray:
    """Rows of n-th derivatives of fs on the grid z."""
    out = np.empty((len(fs), len(z)), dtype=complex)
    for i, f in enumerate(fs):
        out[i] = factorial(n) * f.taylor(z, n)[n]
    return out


def _deriv_poly(p: LaurentPoly, n: int) -> LaurentPoly:
    return p if n == 0 else p.deriv(n)


class SesquilinearForm:
    """Common interface: subclasses provide pair_matrix and support."""

    delta_min: float = DELTA_MIN

    def pair_matrix(self, fs, gs) -> np.ndarray:  # pragma: no cover - interface
        raise NotImplementedError

    def support(self, slot: int):
        """(meets the unit circle, tuple of isolated nodes) for the projection on slot 1 or 2."""
        raise NotImplementedError  # pragma: no cover

    def pair(self, f, g) -> complex:
        return complex(self.pair_matrix([f], [g])[0, 0])

    def moment(self, p: int, q: int) -> complex:
        return self.pair(LaurentPoly.monomial(p), LaurentPoly.monomial(q))

    def gram(self, l: int) -> GramTruncation:
        if l < 1:
            raise ValueError("Gram truncation needs l >= 1")
        basis = [chi_poly(i) for i in range(l)]
        G = self.pair_matrix(basis, basis)
        from .biorth import ldu_pivots
        ok, k = ldu_pivots(G)
        return GramTruncation(l, G, ok, None if ok else k)

    def support_distance(self, w: complex, slot: int) -> float:
        on_circle, nodes = self.support(slot)
        d = np.inf
        if on_circle:
            d = abs(abs(w) - 1.0)
        for a in nodes:
            d = min(d, abs(w - a))
        return float(d)


class Functional(SesquilinearForm):
    """Circle weight plus bivariate Dirac-derivative masses plus finite Sobolev terms."""

    def __init__(self, weight: WeightPart | None = None, masses=(), sobolev=(),
                 delta_min: float = DELTA_MIN):
        self.weight = weight
        self.masses = tuple(masses)
        self.sobolev = tuple(sobolev)
        self.delta_min = delta_min
        if weight is None and not self.masses and not self.sobolev:
            raise ValueError("a functional needs at least one part")

    @classmethod
    def lebesgue(cls) -> "Functional":
        return cls(WeightPart.laurent(LaurentPoly.constant(1.0)))

    def _circle_terms(self):
        terms = []
        if self.weight is not None:
            terms.append((0, 0, self.weight))
        for s in self.sobolev:
            if isinstance(s.inner, WeightPart):
                terms.append((s.n, s.m, s.inner))
        return terms

    def pair_matrix(self, fs, gs) -> np.ndarray:
        fs, gs = list(fs), list(gs)
        out = np.zeros((len(fs), len(gs)), dtype=complex)
        terms = self._circle_terms()
        exact = all(isinstance(f, LaurentPoly) for f in fs + gs) and all(W.exact for _, _, W in terms)
        if terms:
            if exact:
                for n, m, W in terms:
                    out += _exact_weight_pair([_deriv_poly(f, n) for f in fs],
                                              [_deriv_poly(g, m) for g in gs], W.num)
            else:
                def estimate(z):
                    acc = np.zeros((len(fs), len(gs)), dtype=complex)
                    for n, m, W in terms:
                        F = _values(fs, z, n) * W.density(z)
                        acc += F @ _values(gs, z, m).conj().T
                    return acc / len(z)
                out += circle_mean(estimate)
        for M in self.masses:
            a = _taylor_row(fs, M.z1_node, M.z1_order)
            b = _taylor_row(gs, M.z2_node, M.z2_order)
            out += M.weight * np.outer(a, b.conj())
        for s in self.sobolev:
            if isinstance(s.inner, WeightPart):
                continue
            for node, w in s.inner:
                a = factorial(s.n) * _taylor_row(fs, node, s.n)
                b = factorial(s.m) * _taylor_row(gs, node, s.m)
                out += w * np.outer(a, b.conj())
        return out

    def support(self, slot: int):
        on_circle = self.weight is not None
        nodes = []
        for M in self.masses:
            nodes.append(M.z1_node if slot == 1 else M.z2_node)
        for s in self.sobolev:
            if isinstance(s.inner, WeightPart):
                on_circle = True
            else:
                nodes.extend(a for a, _ in s.inner)
        return on_circle, tuple(nodes)

    @property
    def is_toeplitz_zero_order(self) -> bool:
        return self.weight is not None and not self.masses and not self.sobolev

    def to_json(self) -> dict:
        return {"weight": None if self.weight is None else self.weight.to_json(),
                "masses": [m.to_json() for m in self.masses],
                "sobolev": [s.to_json() for s in self.sobolev]}

    @classmethod
    def from_json(cls, data) -> "Functional":
        if isinstance(data, str):
            data = json.loads(data)
        if not isinstance(data, dict):
            raise ValueError("functional description must be a JSON object")
        w = data.get("weight")
        return cls(WeightPart.from_json(w) if w else None,
                   [BivariateMass.from_json(m) for m in data.get("masses", [])],
                   [SobolevTerm.from_json(s) for s in data.get("sobolev", [])],
                   float(data.get("delta_min", DELTA_MIN)))


def _apply(f, mul: LaurentPoly | None, div: LaurentPoly | None):
    if mul is not None:
        f = mul * f if isinstance(f, LaurentPoly) else Product(mul, f)
    if div is not None:
        f = Quotient(f, div)
    return f


class TransformedFunctional(SesquilinearForm):
    """<f, g> = <(mul_1 f)/div_1, (mul_2 g)/div_2>_base + sum of bivariate masses."""

    def __init__(self, base: SesquilinearForm, left_mul=None, left_div=None,
                 right_mul=None, right_div=None, masses=()):
        self.base = base
        self.left_mul, self.left_div = left_mul, left_div
        self.right_mul, self.right_div = right_mul, right_div
        self.masses = tuple(masses)
        self.delta_min = base.delta_min

    def pair_matrix(self, fs, gs) -> np.ndarray:
        fs, gs = list(fs), list(gs)
        tf = [_apply(f, self.left_mul, self.left_div) for f in fs]
        tg = [_apply(g, self.right_mul, self.right_div) for g in gs]
        out = self.base.pair_matrix(tf, tg)
        for M in self.masses:
            a = _taylor_row(fs, M.z1_node, M.z1_order)
            b = _taylor_row(gs, M.z2_node, M.z2_order)
            out = out + M.weight * np.outer(a, b.conj())
        return out

    def support(self, slot: int):
        on_circle, nodes = self.base.support(slot)
        extra = [M.z1_node if slot == 1 else M.z2_node for M in self.masses]
        return on_circle, tuple(nodes) + tuple(extra)


def moment(u: SesquilinearForm, p: int, q: int) -> complex:
    return u.moment(p, q)


def gram(u: SesquilinearForm, l: int) -> GramTruncation:
    return u.gram(l)
