"""Curve representations with derivative access.

Two backends share the :class:`~affineflow.jets.VecJet` interface:

* :class:`AnalyticCurve` wraps a coordinate function written with jet-aware
  operations, so derivatives of any order up to the jet cap are exact up to
  rounding.
* :class:`SampledClosedCurve` holds uniform samples of a periodic curve and
  differentiates by trigonometric interpolation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import jets as J
from .errors import (
    NonMonotoneMap,
    NotClosed,
    OrderTooHigh,
    OutOfDomain,
    SingularMap,
    TooFewSamples,
)
from .jets import Jet, VecJet

CURVE_MAX_ORDER = J.MAX_ORDER
SPECTRAL_MAX_ORDER = 7
SPECTRAL_CHOP = 1e-14

CoordFn = Callable[[Jet], Sequence]


@dataclass(frozen=True)
class AnalyticCurve:
    """Parametrized curve whose coordinates are jet-aware functions of p."""

    func: CoordFn
    dim: int
    domain: tuple[float, float]
    closed: bool = False
    period: float | None = None
    name: str = "curve"

    def __post_init__(self):
        if self.closed and not self.period:
            raise ValueError("closed curves need a period")

    def contains(self, p) -> bool:
        if self.closed:
            return True
        p = np.asarray(p)
        lo, hi = self.domain
        span = hi - lo
        return bool(np.all((p >= lo - 1e-12 * span) & (p <= hi + 1e-12 * span)))

    def coords(self, t: Jet) -> list[Jet]:
        out = self.func(t)
        return [c if isinstance(c, Jet) else Jet.constant(c, t.order, t.batch_shape) for c in out]

    def __call__(self, p) -> np.ndarray:
        return eval_jets(self, p, 0)[0]


def eval_jets(curve: AnalyticCurve, p, order: int) -> VecJet:
    """Derivative stack ``x, x_p, ..., x_{p^order}`` at ``p`` (scalar or array)."""
    if order > CURVE_MAX_ORDER:
        raise OrderTooHigh(f"order {order} exceeds {CURVE_MAX_ORDER}")
    if not curve.contains(p):
        raise OutOfDomain(f"parameter outside {curve.domain} for {curve.name}")
    t = Jet.variable(p, order)
    return VecJet.from_components(curve.coords(t))


# affine maps -----------------------------------------------------------------

@dataclass(frozen=True)
class AffineMap:
    matrix: np.ndarray
    translation: np.ndarray = field(default=None)

    def __post_init__(self):
        m = np.atleast_2d(np.asarray(self.matrix, dtype=float))
        if m.shape[0] != m.shape[1]:
            raise SingularMap("affine matrix must be square")
        if abs(np.linalg.det(m)) < 1e-12:
            raise SingularMap("affine matrix is (numerically) singular")
        b = np.zeros(m.shape[0]) if self.translation is None else np.asarray(self.translation, dtype=float)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "translation", b)

    @property
    def det(self) -> float:
        return float(np.linalg.det(self.matrix))

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return np.einsum("ij,j...->i...", self.matrix, x) + self.translation.reshape((-1,) + (1,) * (np.ndim(x) - 1))


def apply_affine(curve, amap: AffineMap):
    """Image of a curve under ``x -> A x + b``."""
    if isinstance(curve, SampledClosedCurve):
        pts = curve.points @ amap.matrix.T + amap.translation
        return SampledClosedCurve(pts, curve.period)
    a, b = amap.matrix, amap.translation
    if a.shape[0] != curve.dim:
        raise SingularMap("map dimension does not match the curve")

    def func(t):
        comps = curve.coords(t)
        return [sum(a[i, j] * comps[j] for j in range(curve.dim)) + b[i] for i in range(curve.dim)]

    return AnalyticCurve(func, curve.dim, curve.domain, curve.closed, curve.period, f"A({curve.name})")


# reparametrization -------------------------------------------------------------

@dataclass(frozen=True)
class ParamMap:
    """Scalar map ``p -> r(p)`` written with jet-aware operations."""

    func: Callable[[Jet], Jet]
    domain: tuple[float, float]

    def jets(self, p, order: int) -> Jet:
        out = self.func(Jet.variable(p, order))
        return out if isinstance(out, Jet) else Jet.constant(out, order, np.shape(p))

    def __call__(self, p):
        return self.jets(p, 0).value


def check_monotone(rmap: ParamMap, samples: int = 257) -> None:
    p = np.linspace(*rmap.domain, samples)
    dr = rmap.jets(p, 1)[1]
    if np.any(dr <= 0):
        raise NonMonotoneMap("reparametrization must be strictly increasing")


def reparametrize(curve: AnalyticCurve, rmap: ParamMap, period: float | None = None) -> AnalyticCurve:
    """Curve ``p -> curve(r(p))``; derivatives propagate by the chain rule in jet arithmetic."""
    check_monotone(rmap)
    lo, hi = rmap(np.array(rmap.domain))
    if not curve.contains(np.array([lo, hi])):
        raise OutOfDomain("reparametrization leaves the curve domain")

    def func(t):
        return curve.coords(rmap.func(t))

    closed = curve.closed and period is not None
    return AnalyticCurve(func, curve.dim, rmap.domain, closed, period if closed else None, f"{curve.name}∘r")


def reverse(curve: AnalyticCurve) -> AnalyticCurve:
    lo, hi = curve.domain
    return AnalyticCurve(lambda t: curve.coords(-t), curve.dim, (-hi, -lo), curve.closed, curve.period, curve.name)


def normalize_orientation(curve: AnalyticCurve) -> AnalyticCurve:
    """Reverse the parameter of a plane curve when ``[x_p, x_pp] < 0``."""
    if curve.dim != 2:
        return curve
    mid = 0.5 * sum(curve.domain)
    x = eval_jets(curve, mid, 2)
    if J.bracket(x[1], x[2]) < 0:
        return reverse(curve)
    return curve


# catalogue ---------------------------------------------------------------------

TWO_PI = 2.0 * np.pi


def _plane(func, domain, name, closed=False, period=None) -> AnalyticCurve:
    return normalize_orientation(AnalyticCurve(func, 2, domain, closed, period, name))


def circle(radius: float = 1.0, center=(0.0, 0.0)) -> AnalyticCurve:
    return ellipse(radius, radius, center)


def ellipse(a: float = 2.0, b: float = 1.0, center=(0.0, 0.0), angle: float = 0.0) -> AnalyticCurve:
    c, s = np.cos(angle), np.sin(angle)
    x0, y0 = center

    def func(t):
        u, v = a * J.cos(t), b * J.sin(t)
        return [c * u - s * v + x0, s * u + c * v + y0]

    return _plane(func, (0.0, TWO_PI), "ellipse", True, TWO_PI)


def hyperbola(a: float = 1.0, b: float = 1.0, span: float = 2.0) -> AnalyticCurve:
    return _plane(lambda t: [a * J.cosh(t), b * J.sinh(t)], (-span, span), "hyperbola")


def power_curve(alpha: float, domain=(0.25, 4.0)) -> AnalyticCurve:
    """Graph ``y = x**alpha`` for ``x > 0``."""
    return _plane(lambda t: [t, J.power(t, alpha)], domain, f"power({alpha:g})")


def xlogx(domain=(0.2, 5.0)) -> AnalyticCurve:
    return _plane(lambda t: [t, t * J.log(t)], domain, "xlogx")


def log_spiral(beta: float, domain=(-2.0, 2.0)) -> AnalyticCurve:
    """Spiral ``exp(a θ)(sin θ, -cos θ)`` with growth ``a = 3 tan(beta)``."""
    rate = 3.0 * np.tan(beta)

    def func(t):
        r = J.exp(rate * t)
        return [r * J.sin(t), -(r * J.cos(t))]

    return _plane(func, domain, f"spiral({beta:g})")


def parabola(domain=(-2.0, 2.0)) -> AnalyticCurve:
    return _plane(lambda t: [t, 0.5 * t * t], domain, "parabola")


def quartic_oval(weight: float = 8.0) -> AnalyticCurve:
    """Level set ``x^4 + y^4 + weight (x^2 + y^2) = 1 + weight`` in polar form.

    ``weight > 0`` keeps the oval strictly convex (``x^4 + y^4 = 1`` alone has
    flat points on the axes); ``weight >= 6`` also keeps the equi-affine
    curvature positive, which the fully affine invariants need.
    """
    level = 1.0 + weight

    def func(t):
        c, s = J.cos(t), J.sin(t)
        q = c ** 4 + s ** 4
        r2 = (J.sqrt(weight * weight + 4.0 * level * q) - weight) / (2.0 * q)
        r = J.sqrt(r2)
        return [r * c, r * s]

    return _plane(func, (0.0, TWO_PI), "quartic-oval", True, TWO_PI)


def perturbed_ellipse(a: float = 2.0, b: float = 1.0, amplitude: float = 0.02, mode: int = 3) -> AnalyticCurve:
    """Ellipse with a radial ripple ``1 + amplitude cos(mode θ)``."""

    def func(t):
        r = 1.0 + amplitude * J.cos(mode * t)
        return [a * r * J.cos(t), b * r * J.sin(t)]

    return _plane(func, (0.0, TWO_PI), "perturbed-ellipse", True, TWO_PI)


def egg(skew: float = 0.15) -> AnalyticCurve:
    """Egg-shaped oval ``(cos θ (1 + skew sin θ), 0.8 sin θ)``."""

    def func(t):
        c, s = J.cos(t), J.sin(t)
        return [c * (1.0 + skew * s), 0.8 * s]

    return _plane(func, (0.0, TWO_PI), "egg", True, TWO_PI)


def moment_curve(n: int, weights: Sequence[float] | None = None) -> AnalyticCurve:
    """``(p, p^2/2, ..., p^n/n!)`` plus optional trigonometric wobble."""
    w = np.zeros(n) if weights is None else np.asarray(weights, dtype=float)
    facts = [float(np.prod(np.arange(1, k + 1))) for k in range(1, n + 1)]

    def func(t):
        return [t ** (k + 1) / facts[k] + w[k] * J.sin((k + 1) * t) for k in range(n)]

    return AnalyticCurve(func, n, (-1.0, 1.0), name=f"moment{n}")


CATALOG: dict[str, Callable[..., AnalyticCurve]] = {
    "circle": circle,
    "ellipse": ellipse,
    "hyperbola": hyperbola,
    "power": power_curve,
    "xlogx": xlogx,
    "spiral": log_spiral,
    "parabola": parabola,
    "quartic-oval": quartic_oval,
    "perturbed-ellipse": perturbed_ellipse,
    "egg": egg,
}


def builtin(name: str, **params) -> AnalyticCurve:
    try:
        factory = CATALOG[name]
    except KeyError:
        raise OutOfDomain(f"unknown curve {name!r}; choose from {sorted(CATALOG)}") from None
    return factory(**params)


# sampled closed curves ---------------------------------------------------------------

class SampledClosedCurve:
    """Uniform samples of a closed curve over one period."""

    def __init__(self, points, period: float = TWO_PI):
        pts = np.asarray(points, dtype=float)
        if pts.ndim != 2:
            raise ValueError("points must be an (N, n) array")
        n_pts = pts.shape[0]
        if n_pts < 32 or n_pts % 2:
            raise TooFewSamples(f"need an even number of at least 32 samples, got {n_pts}")
        if np.any(np.linalg.norm(np.diff(np.vstack([pts, pts[:1]]), axis=0), axis=1) == 0):
            raise ValueError("consecutive samples coincide")
        pts.flags.writeable = False
        self.points = pts
        self.period = float(period)

    @property
    def N(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def nodes(self) -> np.ndarray:
        return np.arange(self.N) * (self.period / self.N)


def sample_closed(curve: AnalyticCurve, N: int) -> SampledClosedCurve:
    if not curve.closed:
        raise NotClosed(f"{curve.name} is not closed")
    if N < 32 or N % 2:
        raise TooFewSamples("N must be even and at least 32")
    p = curve.domain[0] + np.arange(N) * (curve.period / N)
    return SampledClosedCurve(eval_jets(curve, p, 0)[0].T, curve.period)


def wavenumbers(N: int, period: float) -> np.ndarray:
    k = np.fft.rfftfreq(N, d=period / N) * TWO_PI
    return k


def spectral_derivatives(values: np.ndarray, period: float, order: int, axis: int = -1, chop: float = 0.0) -> np.ndarray:
    """Stack of derivatives 0..order of periodic samples along ``axis``.

    The Nyquist mode is dropped for every derivative of order >= 1.  Modes
    whose magnitude is below ``chop`` times the largest non-constant mode are
    treated as roundoff and removed before differentiating.
    """
    values = np.asarray(values, dtype=float)
    N = values.shape[axis]
    vhat = np.fft.rfft(values, axis=axis)
    if chop > 0:
        mag = np.abs(vhat)
        peak = np.max(np.delete(mag, 0, axis=axis), axis=axis, keepdims=True)
        small = mag < chop * peak
        zero = [slice(None)] * values.ndim
        zero[axis] = 0
        small[tuple(zero)] = False
        vhat = np.where(small, 0.0, vhat)
    k = wavenumbers(N, period)
    shape = [1] * values.ndim
    shape[axis] = k.size
    ik = (1j * k).reshape(shape)
    mask = np.ones(k.size)
    mask[-1] = 0.0
    mask = mask.reshape(shape)
    out = [values]
    for m in range(1, order + 1):
        out.append(np.fft.irfft(vhat * ik ** m * mask, n=N, axis=axis))
    return np.stack(out)


def spectral_jets(samples: SampledClosedCurve, order: int) -> VecJet:
    """Per-node derivative stacks; batch axis runs over the N nodes."""
    if order > SPECTRAL_MAX_ORDER:
        raise OrderTooHigh(f"spectral order {order} exceeds {SPECTRAL_MAX_ORDER}")
    data = spectral_derivatives(samples.points.T, samples.period, order, axis=-1, chop=SPECTRAL_CHOP)
    return VecJet(data)
