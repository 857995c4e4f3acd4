"""Complex Laurent polynomials, their zeros, spectral jets and divided differences.

Everything that behaves like an analytic function in this package exposes
``taylor(z, order)``, returning the normalized Taylor coefficients
``f^(k)(z) / k!`` for ``k = 0..order`` stacked along the first axis.  Jets,
products and quotients are all built on that one method.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from math import comb, factorial

import numpy as np


class DomainError(ValueError):
    """Evaluation requested at a point outside the domain (origin, support)."""


class CapabilityError(TypeError):
    """An object cannot provide the derivatives a computation needs."""


class NumericError(ArithmeticError):
    """A numerical procedure failed to converge."""


def _gbinom(n: int, k: int) -> float:
    # generalized binomial, valid for negative n
    out = 1.0
    for i in range(k):
        out *= (n - i) / (i + 1)
    return out


def _as_array(z):
    return np.asarray(z, dtype=complex)


class LaurentPoly:
    """Dense Laurent polynomial sum_{k=-n_minus}^{n_plus} c_k z^k."""

    __slots__ = ("n_minus", "coeffs")

    def __init__(self, coeffs, n_minus: int = 0):
        c = np.array(coeffs, dtype=complex).ravel()
        if c.size == 0:
            c = np.zeros(1, dtype=complex)
        # trim exact zeros at both ends so the stored extremes are nonzero
        nz = np.flatnonzero(c)
        if nz.size == 0:
            c, n_minus = np.zeros(1, dtype=complex), 0
        else:
            lo, hi = nz[0], nz[-1]
            c = c[lo:hi + 1]
            n_minus = n_minus - lo
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)
        object.__setattr__(self, "n_minus", int(n_minus))

    def __setattr__(self, name, value):
        raise AttributeError("LaurentPoly is immutable")

    # construction helpers
    @classmethod
    def monomial(cls, k: int, c: complex = 1.0) -> "LaurentPoly":
        return cls([c], n_minus=-k)

    @classmethod
    def constant(cls, c: complex) -> "LaurentPoly":
        return cls([c], 0)

    @classmethod
    def from_dict(cls, terms: dict) -> "LaurentPoly":
        if not terms:
            return cls([0.0])
        lo, hi = min(terms), max(terms)
        c = np.zeros(hi - lo + 1, dtype=complex)
        for k, v in terms.items():
            c[k - lo] += v
        return cls(c, n_minus=-lo)

    @classmethod
    def from_roots(cls, lead: complex, roots, n_minus: int) -> "LaurentPoly":
        """lead * z^{-n_minus} * prod (z - r)."""
        p = np.array([1.0 + 0j])
        for r in roots:
            p = np.convolve(p, [1.0, -r])
        # np.convolve keeps highest degree first
        return cls(lead * p[::-1], n_minus=n_minus)

    # basic attributes
    @property
    def n_plus(self) -> int:
        return len(self.coeffs) - 1 - self.n_minus

    @property
    def is_zero(self) -> bool:
        return not np.any(self.coeffs)

    def coef(self, k: int) -> complex:
        i = k + self.n_minus
        if 0 <= i < len(self.coeffs):
            return complex(self.coeffs[i])
        return 0j

    @property
    def exponents(self) -> np.ndarray:
        return np.arange(-self.n_minus, self.n_plus + 1)

    def terms(self):
        return {int(k): complex(c) for k, c in zip(self.exponents, self.coeffs) if c != 0}

    # evaluation
    def __call__(self, z):
        z = _as_array(z)
        if np.any(z == 0) and self.n_minus > 0:
            raise DomainError("Laurent polynomial evaluated at the origin")
        return self.taylor(z, 0)[0]

    def taylor(self, z, order: int) -> np.ndarray:
        """Normalized Taylor coefficients f^(k)(z)/k!, k = 0..order."""
        z = _as_array(z)
        if np.any(z == 0) and self.n_minus > 0:
            raise DomainError("Laurent polynomial evaluated at the origin")
        out = np.zeros((order + 1,) + z.shape, dtype=complex)
        for e, c in zip(self.exponents, self.coeffs):
            if c == 0:
                continue
            e = int(e)
            for k in range(order + 1):
                b = _gbinom(e, k)
                if b == 0.0:
                    break
                out[k] += c * b * z ** (e - k)
        return out

    # arithmetic
    def _coerce(self, other) -> "LaurentPoly":
        if isinstance(other, LaurentPoly):
            return other
        if np.isscalar(other):
            return LaurentPoly.constant(other)
        return NotImplemented

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        lo = min(-self.n_minus, -other.n_minus)
        hi = max(self.n_plus, other.n_plus)
        c = np.zeros(hi - lo + 1, dtype=complex)
        c[-self.n_minus - lo:-self.n_minus - lo + len(self.coeffs)] += self.coeffs
        c[-other.n_minus - lo:-other.n_minus - lo + len(other.coeffs)] += other.coeffs
        return LaurentPoly(c, n_minus=-lo)

    __radd__ = __add__

    def __neg__(self):
        return LaurentPoly(-self.coeffs, self.n_minus)

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if np.isscalar(other):
            return LaurentPoly(self.coeffs * other, self.n_minus)
        if not isinstance(other, LaurentPoly):
            return NotImplemented
        return LaurentPoly(np.convolve(self.coeffs, other.coeffs), self.n_minus + other.n_minus)

    __rmul__ = __mul__

    def __eq__(self, other):
        if not isinstance(other, LaurentPoly):
            return NotImplemented
        return self.n_minus == other.n_minus and np.array_equal(self.coeffs, other.coeffs)

    def __hash__(self):
        return hash((self.n_minus, self.coeffs.tobytes()))

    def allclose(self, other: "LaurentPoly", tol: float = 1e-12) -> bool:
        d = self - other
        scale = max(1.0, float(np.max(np.abs(self.coeffs))), float(np.max(np.abs(other.coeffs))))
        return bool(np.max(np.abs(d.coeffs)) <= tol * scale)

    def conj_coeffs(self) -> "LaurentPoly":
        """The polynomial with conjugated coefficients, z -> conj(L(conj z))."""
        return LaurentPoly(np.conj(self.coeffs), self.n_minus)

    def deriv(self, n: int = 1) -> "LaurentPoly":
        """n-th derivative (unnormalized) as a Laurent polynomial."""
        terms = {}
        for e, c in zip(self.exponents, self.coeffs):
            f = 1.0
            for i in range(n):
                f *= (int(e) - i)
            if f != 0 and c != 0:
                terms[int(e) - n] = terms.get(int(e) - n, 0) + c * f
        return LaurentPoly.from_dict(terms)

    def shift(self, k: int) -> "LaurentPoly":
        """Multiply by z^k."""
        return LaurentPoly(self.coeffs, self.n_minus - k)

    def __repr__(self):
        parts = [f"({c:.6g})z^{k}" for k, c in self.terms().items()]
        return "LaurentPoly(" + (" + ".join(parts) or "0") + ")"

    # serialization
    def to_json(self) -> dict:
        return {"n_minus": self.n_minus,
                "coeffs": [[float(c.real), float(c.imag)] for c in self.coeffs]}

    @classmethod
    def from_json(cls, data) -> "LaurentPoly":
        if isinstance(data, str):
            data = json.loads(data)
        coeffs = [complex(*pair) if isinstance(pair, (list, tuple)) else complex(pair)
                  for pair in data["coeffs"]]
        return cls(coeffs, n_minus=int(data["n_minus"]))


def eval_laurent(L: LaurentPoly, z):
    if np.any(_as_array(z) == 0):
        raise DomainError("evaluation at z = 0")
    return L(z)


def mul(A: LaurentPoly, B: LaurentPoly) -> LaurentPoly:
    return A * B


def reciprocal(L: LaurentPoly) -> LaurentPoly:
    """L_*(z) = conj(L(1/conj z)): coefficient k is conj of coefficient -k."""
    return LaurentPoly(np.conj(L.coeffs[::-1]), n_minus=L.n_plus)


def is_prepared(L: LaurentPoly) -> tuple[bool, int]:
    ok = (not L.is_zero and L.n_plus == L.n_minus
          and L.coef(L.n_plus) != 0 and L.coef(-L.n_minus) != 0)
    return ok, (L.n_plus if ok else -1)


def fejer_riesz_lift(P) -> LaurentPoly:
    """z^{-N} P(z) for an ascending coefficient list P of even degree 2N with P(0) != 0."""
    p = np.trim_zeros(np.asarray(P, dtype=complex), "b")
    deg = len(p) - 1
    if deg < 0 or deg % 2 or p[0] == 0:
        raise ValueError("need a polynomial of even degree with nonzero constant term")
    return LaurentPoly(p, n_minus=deg // 2)


@dataclass(frozen=True)
class ZeroSet:
    zeros: tuple          # distinct zeros
    multiplicities: tuple

    @property
    def total(self) -> int:
        return int(sum(self.multiplicities))

    def __len__(self):
        return len(self.zeros)

    def conj(self) -> "ZeroSet":
        return ZeroSet(tuple(np.conj(z) for z in self.zeros), self.multiplicities)


def roots_with_multiplicity(L: LaurentPoly, cluster_tol: float = 1e-7) -> ZeroSet:
    """Zeros in C* of z^{n_minus} L(z), with multiplicities by greedy clustering."""
    if L.is_zero:
        raise ValueError("zero polynomial has no finite spectrum")
    # coefficients of z^{n_minus} L(z), lowest degree first; the trimmed store
    # guarantees a nonzero constant term, so no zero sits at the origin
    p = np.asarray(L.coeffs)
    if len(p) == 1:
        return ZeroSet((), ())
    try:
        raw = np.roots(p[::-1])
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"root solver failed: {exc}") from exc
    if not np.all(np.isfinite(raw)):
        raise NumericError("root solver returned non-finite values")
    remaining = list(raw)
    zeros, mults = [], []
    while remaining:
        seed = remaining.pop(0)
        group = [seed]
        keep = []
        for r in remaining:
            if abs(r - seed) <= cluster_tol * max(1.0, abs(seed)):
                group.append(r)
            else:
                keep.append(r)
        remaining = keep
        zeros.append(complex(np.mean(group)))
        mults.append(len(group))
    order = sorted(range(len(zeros)), key=lambda i: (round(abs(zeros[i]), 9),
                                                     round(float(np.angle(zeros[i])), 9)))
    return ZeroSet(tuple(zeros[i] for i in order), tuple(mults[i] for i in order))


def deflate(L: LaurentPoly, Z: ZeroSet, i: int) -> LaurentPoly:
    """L_[i](z) = L_{N+} z^{-N-} prod_{j != i} (z - zeta_j)^{m_j}."""
    roots = []
    for j, (zj, mj) in enumerate(zip(Z.zeros, Z.multiplicities)):
        if j != i:
            roots.extend([zj] * mj)
    return LaurentPoly.from_roots(L.coef(L.n_plus), roots, L.n_minus)


def spectral_jet(f, Z: ZeroSet) -> np.ndarray:
    """Row [f(z_i), f'(z_i), ..., f^(m_i-1)(z_i)/(m_i-1)!] blocked by zero."""
    if not hasattr(f, "taylor"):
        raise CapabilityError("spectral jets need an object exposing taylor(z, order)")
    blocks = []
    for z, m in zip(Z.zeros, Z.multiplicities):
        blocks.append(np.asarray(f.taylor(np.asarray(z), m - 1)).reshape(m))
    if not blocks:
        return np.zeros(0, dtype=complex)
    return np.concatenate(blocks)


def h_sym(j: int, z1, z2):
    """Complete homogeneous symmetric polynomial h_j(z1, z2)."""
    return sum(z1 ** a * z2 ** (j - a) for a in range(j + 1))


def h_sym_dual(j: int, z1, z2):
    if np.any(_as_array(z1) == 0) or np.any(_as_array(z2) == 0):
        raise DomainError("dual symmetric polynomial needs nonzero arguments")
    return h_sym(j, 1 / z1, 1 / z2) / (z1 * z2)


def delta_L(L: LaurentPoly, z1, z2, switch: float = 1e-8):
    """Divided difference (L(z1) - L(z2)) / (z1 - z2), confluent near the diagonal."""
    z1, z2 = complex(z1), complex(z2)
    if z1 == 0 or z2 == 0:
        raise DomainError("divided difference needs nonzero arguments")
    if abs(z1 - z2) >= switch * max(abs(z1), abs(z2)):
        return (complex(L(z1)) - complex(L(z2))) / (z1 - z2)
    out = sum(L.coef(j) * h_sym(j - 1, z1, z2) for j in range(1, L.n_plus + 1))
    out -= sum(L.coef(-j) * h_sym_dual(j - 1, z1, z2) for j in range(1, L.n_minus + 1))
    return complex(out)


def delta_L_poly(L: LaurentPoly, a: complex) -> LaurentPoly:
    """The divided difference delta L(a, w) as a Laurent polynomial in w."""
    if a == 0:
        raise DomainError("divided difference needs a nonzero anchor")
    terms = {}
    for b in range(max(L.n_plus, 0)):
        terms[b] = sum(L.coef(j) * a ** (j - 1 - b) for j in range(b + 1, L.n_plus + 1))
    for b in range(max(L.n_minus, 0)):
        terms[-b - 1] = -sum(L.coef(-j) * a ** (-(j - b)) for j in range(b + 1, L.n_minus + 1))
    return LaurentPoly.from_dict(terms)


# ---------------------------------------------------------------------------
# analytic function objects

class CauchyKernel:
    """w -> scale / (center - w)^power."""

    def __init__(self, center: complex, power: int = 1, scale: complex = 1.0):
        self.center = complex(center)
        self.power = int(power)
        self.scale = complex(scale)

    def taylor(self, z, order: int) -> np.ndarray:
        z = _as_array(z)
        d = self.center - z
        if np.any(d == 0):
            raise DomainError("Cauchy kernel evaluated at its pole")
        p = self.power
        return np.stack([self.scale * comb(p + s - 1, s) / d ** (p + s) for s in range(order + 1)])

    def __call__(self, z):
        return self.taylor(z, 0)[0]


def series_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Cauchy product of two Taylor-coefficient stacks."""
    n = min(len(a), len(b))
    out = np.zeros((n,) + np.broadcast_shapes(a.shape[1:], b.shape[1:]), dtype=complex)
    for k in range(n):
        for j in range(k + 1):
            out[k] = out[k] + a[j] * b[k - j]
    return out


def series_div(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Taylor coefficients of a / b."""
    if np.any(b[0] == 0):
        raise DomainError("division by a function vanishing at the expansion point")
    n = min(len(a), len(b))
    out = np.zeros((n,) + np.broadcast_shapes(a.shape[1:], b.shape[1:]), dtype=complex)
    for k in range(n):
        acc = a[k] + 0
        for j in range(1, k + 1):
            acc = acc - b[j] * out[k - j]
        out[k] = acc / b[0]
    return out


class Product:
    def __init__(self, *factors):
        self.factors = factors

    def taylor(self, z, order: int) -> np.ndarray:
        out = self.factors[0].taylor(z, order)
        for f in self.factors[1:]:
            out = series_mul(out, f.taylor(z, order))
        return out

    def __call__(self, z):
        return self.taylor(z, 0)[0]


class Quotient:
    def __init__(self, num, den):
        self.num, self.den = num, den

    def taylor(self, z, order: int) -> np.ndarray:
        return series_div(self.num.taylor(z, order), self.den.taylor(z, order))

    def __call__(self, z):
        return self.taylor(z, 0)[0]


class Combination:
    """sum_i c_i f_i."""

    def __init__(self, coeffs, funcs):
        self.coeffs = list(coeffs)
        self.funcs = list(funcs)

    def taylor(self, z, order: int) -> np.ndarray:
        z = _as_array(z)
        out = np.zeros((order + 1,) + z.shape, dtype=complex)
        for c, f in zip(self.coeffs, self.funcs):
            if c != 0:
                out += c * f.taylor(z, order)
        return out

    def __call__(self, z):
        return self.taylor(z, 0)[0]


class Derivative:
    """Normalized derivative f^(k)/k! as a function in its own right."""

    def __init__(self, f, k: int):
        self.f, self.k = f, int(k)

    def taylor(self, z, order: int) -> np.ndarray:
        t = self.f.taylor(z, order + self.k)
        out = np.empty((order + 1,) + t.shape[1:], dtype=complex)
        for s in range(order + 1):
            out[s] = comb(s + self.k, s) * t[s + self.k]
        return out

    def __call__(self, z):
        return self.taylor(z, 0)[0]


def derivative_value(f, z, k: int):
    """f^(k)(z) (unnormalized)."""
    return factorial(k) * f.taylor(z, k)[k]
