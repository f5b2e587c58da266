"""Truncated derivative jets, determinant brackets and the integer coefficients
behind the fully affine arc length.

A :class:`Jet` stores raw derivatives ``f, f', f'', ..., f^(K)`` of a scalar
function at a point.  The leading axis of ``coeffs`` is the derivative order;
any trailing axes are a batch of independent points, so a single Jet can carry
the derivative stacks of every node of a sampled curve at once.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache, reduce
from typing import Callable, Sequence

import numpy as np

from .errors import DimensionMismatch, DivisionByZeroJet, OrderTooHigh

MAX_ORDER = 12
DIVISION_FLOOR = 1e-300


@lru_cache(maxsize=None)
def _factorials(order: int) -> np.ndarray:
    return np.array([math.factorial(k) for k in range(order + 1)], dtype=float)


def _as_coeffs(values) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim == 0:
        raise ValueError("a jet needs at least the order-0 coefficient")
    return arr


class Jet:
    """Raw derivative stack of a scalar function, optionally batched."""

    __slots__ = ("coeffs",)
    __array_priority__ = 100.0

    def __init__(self, coeffs):
        arr = _as_coeffs(coeffs)
        if arr.shape[0] - 1 > MAX_ORDER:
            raise OrderTooHigh(f"jet order {arr.shape[0] - 1} exceeds {MAX_ORDER}")
        arr.flags.writeable = False
        self.coeffs = arr

    # construction -------------------------------------------------------
    @classmethod
    def variable(cls, x, order: int) -> "Jet":
        """Jet of the identity map evaluated at ``x`` (scalar or array)."""
        x = np.asarray(x, dtype=float)
        c = np.zeros((order + 1,) + x.shape)
        c[0] = x
        if order >= 1:
            c[1] = 1.0
        return cls(c)

    @classmethod
    def constant(cls, c, order: int, batch_shape: tuple = ()) -> "Jet":
        c = np.broadcast_to(np.asarray(c, dtype=float), batch_shape)
        out = np.zeros((order + 1,) + c.shape)
        out[0] = c
        return cls(out)

    # basic accessors ----------------------------------------------------
    @property
    def order(self) -> int:
        return self.coeffs.shape[0] - 1

    @property
    def value(self):
        return self.coeffs[0]

    @property
    def batch_shape(self) -> tuple:
        return self.coeffs.shape[1:]

    def __getitem__(self, k):
        return self.coeffs[k]

    def derivative(self, k: int = 1) -> "Jet":
        """Jet of the k-th derivative; its order drops by k."""
        if k > self.order:
            raise OrderTooHigh(f"cannot differentiate an order-{self.order} jet {k} times")
        return Jet(self.coeffs[k:])

    def truncate(self, order: int) -> "Jet":
        if order > self.order:
            raise OrderTooHigh(f"cannot raise jet order from {self.order} to {order}")
        return Jet(self.coeffs[: order + 1])

    def __repr__(self) -> str:
        return f"Jet(order={self.order}, coeffs={self.coeffs.tolist()!r})"

    # Taylor-normalised helpers ------------------------------------------
    def _taylor(self) -> np.ndarray:
        f = _factorials(self.order).reshape((-1,) + (1,) * len(self.batch_shape))
        return self.coeffs / f

    @staticmethod
    def _from_taylor(t: np.ndarray) -> "Jet":
        order = t.shape[0] - 1
        f = _factorials(order).reshape((-1,) + (1,) * (t.ndim - 1))
        return Jet(t * f)

    def _coerce(self, other) -> "Jet":
        if isinstance(other, Jet):
            return other
        return Jet.constant(other, self.order, np.broadcast_shapes(self.batch_shape, np.shape(other)))

    @staticmethod
    def _match(a: "Jet", b: "Jet") -> tuple["Jet", "Jet"]:
        k = min(a.order, b.order)
        return (a if a.order == k else a.truncate(k)), (b if b.order == k else b.truncate(k))

    # arithmetic ---------------------------------------------------------
    def __neg__(self) -> "Jet":
        return Jet(-self.coeffs)

    def __pos__(self) -> "Jet":
        return self

    def __add__(self, other) -> "Jet":
        if not isinstance(other, Jet):
            c = np.array(np.broadcast_to(self.coeffs, np.broadcast_shapes(self.coeffs.shape, (1,) + np.shape(other))))
            c[0] = c[0] + other
            return Jet(c)
        a, b = Jet._match(self, other)
        return Jet(a.coeffs + b.coeffs)

    __radd__ = __add__

    def __sub__(self, other) -> "Jet":
        return self + (-other)

    def __rsub__(self, other) -> "Jet":
        return (-self) + other

    def __mul__(self, other) -> "Jet":
        if not isinstance(other, Jet):
            other = np.asarray(other, dtype=float)
            return Jet(self.coeffs * other)
        a, b = Jet._match(self, other)
        ta, tb = a._taylor(), b._taylor()
        out = np.empty(np.broadcast_shapes(ta.shape, tb.shape))
        for k in range(out.shape[0]):
            out[k] = np.sum(ta[: k + 1] * tb[k::-1], axis=0)
        return Jet._from_taylor(out)

    __rmul__ = __mul__

    def reciprocal(self) -> "Jet":
        return _series_divide(Jet.constant(1.0, self.order, self.batch_shape), self)

    def __truediv__(self, other) -> "Jet":
        if not isinstance(other, Jet):
            other = np.asarray(other, dtype=float)
            if np.any(np.abs(other) < DIVISION_FLOOR):
                raise DivisionByZeroJet("division by a vanishing constant")
            return Jet(self.coeffs / other)
        return _series_divide(self, other)

    def __rtruediv__(self, other) -> "Jet":
        return _series_divide(self._coerce(other), self)

    def __pow__(self, exponent) -> "Jet":
        if isinstance(exponent, Jet):
            return exp(exponent * log(self))
        if isinstance(exponent, (int, np.integer)) and exponent >= 0:
            result = Jet.constant(1.0, self.order, self.batch_shape)
            base = self
            e = int(exponent)
            while e:
                if e & 1:
                    result = result * base
                e >>= 1
                if e:
                    base = base * base
            return result
        return power(self, float(exponent))

    def __rpow__(self, base) -> "Jet":
        return exp(self * np.log(base))


def _series_divide(a: Jet, b: Jet) -> Jet:
    a, b = Jet._match(a, b)
    tb = b._taylor()
    if np.any(np.abs(tb[0]) < DIVISION_FLOOR):
        raise DivisionByZeroJet("jet division by a vanishing leading coefficient")
    ta = a._taylor()
    shape = np.broadcast_shapes(ta.shape, tb.shape)
    out = np.empty(shape)
    for k in range(shape[0]):
        acc = np.broadcast_to(ta[k], shape[1:]).copy()
        for j in range(1, k + 1):
            acc -= tb[j] * out[k - j]
        out[k] = acc / tb[0]
    return Jet._from_taylor(out)


# composition -------------------------------------------------------------

def compose(outer_derivs, inner: Jet) -> Jet:
    """Chain rule to full order.

    ``outer_derivs`` holds ``f(u0), f'(u0), ..., f^(K)(u0)`` for the outer
    function at ``u0 = inner.value`` (a Jet or an array with the derivative
    order on the leading axis).  Returns the jet of ``f(inner(p))``.
    """
    od = outer_derivs.coeffs if isinstance(outer_derivs, Jet) else np.asarray(outer_derivs, dtype=float)
    order = min(inner.order, od.shape[0] - 1)
    inner = inner.truncate(order) if inner.order != order else inner
    fac = _factorials(order).reshape((-1,) + (1,) * (od.ndim - 1))
    a = od[: order + 1] / fac
    h = inner._taylor().copy()
    h[0] = 0.0
    shape = np.broadcast_shapes(a.shape, h.shape)
    # Horner in truncated power-series arithmetic
    acc = np.zeros(shape)
    acc[0] = a[order]
    for k in range(order - 1, -1, -1):
        nxt = np.zeros(shape)
        for m in range(shape[0]):
            nxt[m] = np.sum(acc[: m + 1] * h[m::-1], axis=0)
        nxt[0] = nxt[0] + a[k]
        acc = nxt
    return Jet._from_taylor(acc)


def _elementwise(derivs: Callable[[np.ndarray, int], np.ndarray]):
    def apply(x):
        if isinstance(x, Jet):
            return compose(derivs(x.value, x.order), x)
        return derivs(np.asarray(x, dtype=float), 0)[0]
    return apply


def _sin_derivs(u, order):
    s, c = np.sin(u), np.cos(u)
    cycle = [s, c, -s, -c]
    return np.stack([cycle[k % 4] for k in range(order + 1)])


def _cos_derivs(u, order):
    s, c = np.sin(u), np.cos(u)
    cycle = [c, -s, -c, s]
    return np.stack([cycle[k % 4] for k in range(order + 1)])


def _exp_derivs(u, order):
    e = np.exp(u)
    return np.stack([e] * (order + 1))


def _log_derivs(u, order):
    if np.any(np.asarray(u) <= 0):
        raise ValueError("log of a non-positive jet value")
    out = [np.log(u)]
    for k in range(1, order + 1):
        out.append((-1) ** (k - 1) * math.factorial(k - 1) / u ** k)
    return np.stack(out)


def _sinh_derivs(u, order):
    s, c = np.sinh(u), np.cosh(u)
    return np.stack([s if k % 2 == 0 else c for k in range(order + 1)])


def _cosh_derivs(u, order):
    s, c = np.sinh(u), np.cosh(u)
    return np.stack([c if k % 2 == 0 else s for k in range(order + 1)])


def _power_derivs(exponent: float):
    def derivs(u, order):
        out = []
        coef = 1.0
        for k in range(order + 1):
            out.append(coef * np.power(u, exponent - k))
            coef *= exponent - k
        return np.stack(out)
    return derivs


sin = _elementwise(_sin_derivs)
cos = _elementwise(_cos_derivs)
exp = _elementwise(_exp_derivs)
log = _elementwise(_log_derivs)
sinh = _elementwise(_sinh_derivs)
cosh = _elementwise(_cosh_derivs)


def power(x, exponent: float):
    """``x**exponent`` for a positive-valued jet and real exponent."""
    if isinstance(x, Jet) and float(exponent).is_integer() and exponent >= 0:
        return x ** int(exponent)
    return _elementwise(_power_derivs(float(exponent)))(x)


def sqrt(x):
    return power(x, 0.5)


def tan(x):
    return sin(x) / cos(x)


def tanh(x):
    return sinh(x) / cosh(x)


def cot(x):
    return cos(x) / sin(x)


def coth(x):
    return cosh(x) / sinh(x)


def derivatives(fn: Callable, x, order: int) -> np.ndarray:
    """Raw derivatives of ``fn`` at ``x`` up to ``order``.

    ``fn`` must be built from jet-aware operations; a plain constant result is
    treated as a constant function.
    """
    out = fn(Jet.variable(x, order))
    if isinstance(out, Jet):
        return out.coeffs
    return Jet.constant(out, order, np.shape(x)).coeffs


# vector jets -------------------------------------------------------------

class VecJet:
    """Derivative stacks of an n-vector valued function.

    ``data`` has shape ``(K+1, n, *batch)``; ``data[k]`` is the k-th derivative.
    """

    __slots__ = ("data",)

    def __init__(self, data):
        arr = np.asarray(data, dtype=float)
        if arr.ndim < 2:
            raise ValueError("VecJet data needs an order axis and a component axis")
        arr.flags.writeable = False
        self.data = arr

    @classmethod
    def from_components(cls, comps: Sequence) -> "VecJet":
        jets = [c for c in comps if isinstance(c, Jet)]
        if not jets:
            raise ValueError("at least one component must be a Jet")
        order = min(j.order for j in jets)
        batch = np.broadcast_shapes(*(j.batch_shape for j in jets))
        cols = []
        for c in comps:
            if isinstance(c, Jet):
                c = c.truncate(order) if c.order != order else c
                cols.append(np.broadcast_to(c.coeffs, (order + 1,) + batch))
            else:
                cols.append(Jet.constant(c, order, batch).coeffs)
        return cls(np.stack(cols, axis=1))

    @property
    def order(self) -> int:
        return self.data.shape[0] - 1

    @property
    def dim(self) -> int:
        return self.data.shape[1]

    @property
    def batch_shape(self) -> tuple:
        return self.data.shape[2:]

    @property
    def components(self) -> list[Jet]:
        return [Jet(self.data[:, i]) for i in range(self.dim)]

    def component(self, i: int) -> Jet:
        return Jet(self.data[:, i])

    def __getitem__(self, k: int) -> np.ndarray:
        """The k-th derivative vector (shape ``(n, *batch)``)."""
        return self.data[k]

    def derivative(self, k: int = 1) -> "VecJet":
        if k > self.order:
            raise OrderTooHigh(f"cannot differentiate an order-{self.order} vector jet {k} times")
        return VecJet(self.data[k:])

    def truncate(self, order: int) -> "VecJet":
        return VecJet(self.data[: order + 1])

    def scale(self, factor: Jet) -> "VecJet":
        """Multiply every component by a scalar jet."""
        return VecJet.from_components([c * factor for c in self.components])

    def divide(self, factor: Jet) -> "VecJet":
        inv = factor.reciprocal()
        return VecJet.from_components([c * inv for c in self.components])

    def linear_map(self, matrix: np.ndarray, translation=None) -> "VecJet":
        out = np.einsum("ij,kj...->ki...", np.asarray(matrix, dtype=float), self.data)
        if translation is not None:
            t = np.asarray(translation, dtype=float).reshape((-1,) + (1,) * len(self.batch_shape))
            out[0] = out[0] + t
        return VecJet(out)

    def __repr__(self) -> str:
        return f"VecJet(order={self.order}, dim={self.dim}, batch={self.batch_shape})"


def dot(a: VecJet, b: VecJet) -> Jet:
    return reduce(lambda s, t: s + t, (x * y for x, y in zip(a.components, b.components)))


# brackets ----------------------------------------------------------------

def bracket(*columns) -> np.ndarray:
    """Determinant of the square matrix whose columns are the arguments.

    Each column is an array of shape ``(n, *batch)``.
    """
    cols = [np.asarray(c, dtype=float) for c in columns]
    n = len(cols)
    if any(c.shape[0] != n for c in cols):
        raise DimensionMismatch(f"bracket needs {n} vectors of dimension {n}")
    m = np.stack(cols, axis=1)  # (n, n, *batch), m[i, j] = cols[j][i]
    m = np.moveaxis(m, (0, 1), (-2, -1))
    if n == 2:
        return m[..., 0, 0] * m[..., 1, 1] - m[..., 0, 1] * m[..., 1, 0]
    return np.linalg.det(m)


@lru_cache(maxsize=None)
def _signed_permutations(n: int):
    out = []
    for perm in itertools.permutations(range(n)):
        inversions = sum(1 for i in range(n) for j in range(i + 1, n) if perm[i] > perm[j])
        out.append((perm, -1.0 if inversions % 2 else 1.0))
    return tuple(out)


def bracket_jet(*columns: VecJet) -> Jet:
    """Jet of the determinant of vector jets (Leibniz expansion)."""
    n = len(columns)
    if any(c.dim != n for c in columns):
        raise DimensionMismatch(f"bracket needs {n} vectors of dimension {n}")
    order = min(c.order for c in columns)
    comps = [[c.truncate(order).component(i) for i in range(n)] for c in columns]
    if n == 2:
        return comps[0][0] * comps[1][1] - comps[1][0] * comps[0][1]
    total = None
    for perm, sign in _signed_permutations(n):
        term = comps[0][perm[0]]
        for j in range(1, n):
            term = term * comps[j][perm[j]]
        term = term * sign
        total = term if total is None else total + term
    return total


# integer coefficients ------------------------------------------------------

def _closed_ab(k: int) -> tuple[int, int]:
    return k * (k - 1) * (k - 2) * (k - 3) // 8, k * (k - 1) * (k - 2) // 6


def iteration_coeffs(k: int) -> tuple[int, int]:
    """Return ``(A_k, B_k) = (k(k-1)(k-2)(k-3)/8, k(k-1)(k-2)/6)`` for k >= 4."""
    if k < 4:
        raise ValueError("iteration coefficients are defined for k >= 4")
    return _closed_ab(k)


def iteration_coeffs_recursive(k: int) -> tuple[int, int]:
    if k < 4:
        raise ValueError("iteration coefficients are defined for k >= 4")
    a, b = 3, 4
    for j in range(5, k + 1):
        c = math.comb(j - 1, 2)
        a, b = a + (j - 3) * c, b + c
    return a, b


@dataclass(frozen=True)
class GACoeffs:
    n: int
    alpha: int
    beta: int
    gamma: int
    omega: int


def ga_coefficients(n: int) -> GACoeffs:
    """Coprime positive coefficients of the fully affine arc length in R^n."""
    if n < 2:
        raise ValueError("dimension must be at least 2")
    num_a = n * (n + 1) * (n - 1)
    num_b = Fraction((n - 1) * (n + 2) * (2 * n + 1), 2)
    num_g = n * (n + 1) * (n + 2)
    # clear the half in num_b before taking the gcd
    scale = num_b.denominator
    ints = [num_a * scale, int(num_b * scale), num_g * scale]
    omega_scaled = math.gcd(*ints)
    a, b, g = (v // omega_scaled for v in ints)
    omega = Fraction(omega_scaled, scale)
    if omega.denominator != 1:
        raise ArithmeticError("non-integral normaliser")
    return GACoeffs(n, a, b, g, int(omega))


def coefficient_system_residuals(c: GACoeffs) -> tuple[int, int, int]:
    """Integer residuals of the three linear constraints the coefficients solve."""
    n = c.n
    cn2, cn12, cn22 = math.comb(n, 2), math.comb(n + 1, 2), math.comb(n + 2, 2)
    a_n1, b_n1 = _closed_ab(n + 1)
    a_n2, b_n2 = _closed_ab(n + 2)
    r1 = c.alpha * cn22 - 2 * c.beta * cn12 + c.gamma * cn2
    r2 = c.alpha * b_n2 - c.gamma * b_n1
    r3 = c.alpha * a_n2 - c.beta * cn12 ** 2 + c.gamma * (cn12 * cn2 - a_n1)
    return r1, r2, r3
