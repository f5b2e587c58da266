"""Variations of fully affine length and stability of extremal plane curves.

Deformations are ``C_t = W C_xi + U C_xi^2`` with ``U`` and ``W`` given as
callables of the fully affine arc length ``xi``.  ``U`` must accept jets
(build it from :mod:`affineflow.jets` functions and ordinary arithmetic) so
that its ``xi``-derivatives are exact.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import cumulative_simpson
from scipy.optimize import brentq

from . import jets as J
from .curves import AnalyticCurve, SampledClosedCurve, eval_jets
from .errors import BoundaryViolation, InvalidParams
from .invariants import Reconstruction, plane_frame, scalar_along
from .jets import Jet
from .periodic import closed_fields, cumulative

BOUNDARY_TOL = 1e-8
POLE_MARGIN = 1e-3
SIGN_TOL = 1e-12
QUADRATURE_NODES = 512

SQRT2 = np.sqrt(2.0)


# extremal equation ------------------------------------------------------------------

def _rows(derivs, count: int):
    if isinstance(derivs, Jet):
        if derivs.order < count - 1:
            raise InvalidParams(f"need a jet of order >= {count - 1}")
        return [derivs[k] for k in range(count)]
    arr = np.asarray(derivs, dtype=float)
    if arr.shape[0] < count:
        raise InvalidParams(f"need at least {count} derivative rows")
    return list(arr[:count])


def extremal_residual(derivs, eps, relative: bool = False):
    """Left side of ``phi''' + phi phi'' + (2 phi^2 + 3 phi' + eps) phi' / 9 = 0``.

    ``derivs`` holds ``phi`` and its first three ``xi``-derivatives (a jet or
    a stacked array).  With ``relative=True`` the value is divided by the
    magnitude of the largest term (floored at 1), which keeps the check
    meaningful near poles of the curvature.
    """
    a, b, c, d = _rows(derivs, 4)
    lam = (2 * a * a + 3 * b + eps) / 9.0
    terms = (d, a * c, lam * b)
    res = terms[0] + terms[1] + terms[2]
    if not relative:
        return res
    scale = np.maximum(1.0, np.maximum.reduce([np.abs(t) for t in terms]))
    return res / scale


# stability coefficients -------------------------------------------------------------

@dataclass(frozen=True)
class StabilityCoeffs:
    f0: np.ndarray
    f1: np.ndarray
    f2: np.ndarray
    f3: np.ndarray
    f4: np.ndarray
    f5: np.ndarray
    f6: np.ndarray
    P0: np.ndarray
    P1: np.ndarray
    P2: np.ndarray
    P3: np.ndarray
    eps: int

    @property
    def P(self) -> tuple:
        return (self.P0, self.P1, self.P2, self.P3)

    @property
    def f(self) -> tuple:
        return (self.f0, self.f1, self.f2, self.f3, self.f4, self.f5, self.f6)


def f_coefficients(a, b, c, e) -> tuple:
    """Coefficients of ``U_{xi^k}`` (k = 0..6) in the reduced second-variation integrand.

    Arguments are ``phi, phi_xi, phi_xi^2`` and ``eps``; works on arrays or jets.
    """
    f0 = (
        2 / 27 * b**2 + 6 * b**4 + 196 / 27 * e * b**3 - 2 * e * c**2
        + 8 / 9 * a**4 * b**2 - 100 * b * c**2 + 152 / 3 * c**2 * a**2
        + 16 / 27 * e * b**2 * a**2 + 152 / 9 * a**2 * b**3
        + 112 / 9 * e * a * c * b + 88 / 3 * a * b**2 * c + 176 / 9 * c * b * a**3
    )
    f1 = (
        4 / 9 * c - 8 / 27 * a**5 * b - 190 * a * c**2 - 200 * c * b**2
        - 122 / 3 * b**3 * a + 136 / 9 * b**2 * a**3 - 8 / 9 * c * a**4
        + 116 / 9 * e * a * b**2 - 2 / 27 * a * b - 8 / 27 * e * a**3 * b
        - 24 * e * b * c + 4 / 9 * e * a**2 * c - 16 * a**2 * b * c
    )
    f2 = (
        8 / 9 * b + 2 / 27 * e * a**4 - 76 / 3 * e * b**2 - 2 / 81 * a**6
        + 5 / 54 * a**2 + 375 / 2 * c**2 - 136 / 3 * b**3 + 28 / 3 * c * a**3
        - 145 / 2 * b**2 * a**2 + 26 / 9 * a**4 * b + 47 / 9 * e * a**2 * b
        + 2 / 3 * e * a * c - 176 * a * b * c + 2 / 81 * e
    )
    f3 = (
        -5 * e * c - 43 * c * a**2 + 285 * b * c - 46 / 3 * a**3 * b
        + 59 * a * b**2 - 41 / 3 * e * a * b
    )
    f4 = 5 * e * b - e * a**2 + 57 * b**2 + a**4 / 2 + 96 * a * c + 37 * a**2 * b + 0.5
    f5 = -9 * (2 * a * b + 9 * c)
    f6 = -3 * (a**2 + 9 * b - e)
    return f0, f1, f2, f3, f4, f5, f6


def p_coefficients(a, b, c, e) -> tuple:
    """``P0..P3`` on an extremal curve from ``phi, phi_xi, phi_xi^2`` and ``eps`` (eps^2 = 1)."""
    P0 = (
        2 / 3 * c**2 * (76 * a**2 - 3 * e - 150 * b)
        + 8 / 9 * a * c * b * (22 * a**2 + 33 * b + 14 * e)
        + 6 * b**4
        + 4 / 27 * (114 * a**2 + 49 * e) * b**3
        + 2 / 27 * (12 * a**4 + 8 * e * a**2 + 1) * b**2
    )
    P1 = (
        -117 / 2 * c**2
        - 1 / 3 * (2 * a**2 + 7 * e - 219 * b) * a * c
        + 88 / 3 * b**3
        + 5 / 6 * (39 * a**2 + 8 * e) * b**2
        + 1 / 9 * (2 * a**4 - 25 * e * a**2 - 4) * b
        + (a**2 - 4 * e) * (2 * a**2 + e) ** 2 / 162
    )
    P2 = 33 * c * a + 48 * b**2 + (19 * a**2 - 4 * e) * b + a**4 / 2 - e * a**2 + 0.5
    P3 = 3 * (a**2 + 9 * b - e)
    return P0, P1, P2, P3


def stability_coeffs(phi, phi_xi, phi_xixi, eps) -> StabilityCoeffs:
    a, b, c = (np.asarray(v, dtype=float) for v in (phi, phi_xi, phi_xixi))
    e = int(np.sign(eps)) if np.ndim(eps) == 0 else np.sign(np.asarray(eps, dtype=float))
    return StabilityCoeffs(*f_coefficients(a, b, c, e), *p_coefficients(a, b, c, e), eps=e)


def constant_case_coeffs(phi: float, eps: int) -> tuple[float, float, float, float]:
    """``P0..P3`` for a curve of constant fully affine curvature."""
    s = phi * phi
    return 0.0, (s - 4 * eps) * (2 * s + eps) ** 2 / 162, (s - eps) ** 2 / 2, 3 * (s - eps)


# curve sampling for the integral formulas ------------------------------------------------

@dataclass(frozen=True)
class _Samples:
    xi: np.ndarray
    weights: np.ndarray  # quadrature weights for  (.) g dp
    eps: int
    phi: np.ndarray  # rows phi, phi_xi, ...
    closed: bool


def _eps_of(eps: np.ndarray) -> int:
    vals = np.unique(eps)
    if vals.size != 1:
        raise InvalidParams("eps changes sign along the curve")
    return int(vals[0])


def _sample_curve(curve, nodes: int, phi_count: int) -> _Samples:
    nodes = max(int(nodes), QUADRATURE_NODES)
    if isinstance(curve, SampledClosedCurve):
        cf = closed_fields(curve)
        w = cf.g * (curve.period / curve.N)
        return _Samples(cf.xi, w, _eps_of(cf.eps), cf.phi_stack(phi_count), True)
    if isinstance(curve, Reconstruction):
        lo, hi = curve.span
        p = np.linspace(lo, hi, nodes + 1)
        x = curve.jets(p, 8)
    elif isinstance(curve, AnalyticCurve):
        lo, hi = curve.domain
        if curve.closed:
            nodes += nodes % 2
            p = lo + np.arange(nodes) * (curve.period / nodes)
        else:
            p = np.linspace(lo, hi, nodes + 1)
        x = eval_jets(curve, p, J.MAX_ORDER)
    else:
        raise InvalidParams("unsupported curve type")
    fr = plane_frame(x)
    g = fr.g.value
    phi = scalar_along(fr.phi, fr.g, phi_count)
    if isinstance(curve, AnalyticCurve) and curve.closed:
        return _Samples(cumulative(g, curve.period), g * (curve.period / nodes), _eps_of(fr.eps), phi, True)
    xi = cumulative_simpson(g, x=p, initial=0.0)
    w = np.full(p.size, (hi - lo) / nodes) * g
    w[0] *= 0.5
    w[-1] *= 0.5
    return _Samples(xi, w, _eps_of(fr.eps), phi, False)


def _check_boundary(U: Callable, W: Callable | None, xi: np.ndarray, order: int) -> None:
    ends = np.array([xi[0], xi[-1]])
    du = J.derivatives(U, ends, order)
    if np.max(np.abs(du)) > BOUNDARY_TOL:
        raise BoundaryViolation(f"U and its first {order} derivatives must vanish at both ends")
    if W is not None and np.max(np.abs(np.asarray(W(ends), dtype=float))) > BOUNDARY_TOL:
        raise BoundaryViolation("W must vanish at both ends")


def first_variation(curve, U: Callable, W: Callable | None = None, nodes: int = QUADRATURE_NODES) -> float:
    """Rate of change of fully affine length under ``C_t = W C_xi + U C_xi^2``.

    Closed curves are integrated spectrally over one period; open curves use
    composite trapezoid quadrature and require ``U``, its first three
    derivatives and ``W`` to vanish at both ends.
    """
    s = _sample_curve(curve, nodes, 3)
    if not s.closed:
        _check_boundary(U, W, s.xi, 3)
    u = np.broadcast_to(np.asarray(J.derivatives(U, s.xi, 0)[0], dtype=float), s.xi.shape)
    integrand = u * extremal_residual(s.phi, s.eps)
    return float(-0.5 * s.eps * np.sum(integrand * s.weights))


def second_variation(curve, U: Callable, nodes: int = QUADRATURE_NODES) -> float:
    """Quadratic form of the second variation at an extremal curve."""
    s = _sample_curve(curve, nodes, 2)
    if not s.closed:
        _check_boundary(U, None, s.xi, 3)
    du = np.broadcast_to(J.derivatives(U, s.xi, 4), (5,) + s.xi.shape)
    P0, P1, P2, P3 = p_coefficients(s.phi[0], s.phi[1], s.phi[2], s.eps)
    integrand = 4.5 * du[4] ** 2 + P3 * du[3] ** 2 + P2 * du[2] ** 2 + P1 * du[1] ** 2 + P0 * du[0] ** 2
    return float(-0.5 * np.sum(integrand * s.weights))


# extremal families -------------------------------------------------------------------

_R1 = np.cbrt(9250 * SQRT2 + 24 * np.sqrt(155171.0))
_R2 = np.cbrt(4450 * SQRT2 + 100 * np.sqrt(2398.0))
_ARG = np.arccos(185 * np.sqrt(163.0) / 26569)
_HALF = 1.5 * SQRT2  # 3 sqrt(2) / 2


def _hyp(value: float) -> float:
    return float(_HALF * np.arccosh(value))


THRESHOLDS: dict[str, float] = {
    "xi1": float(SQRT2 / 4 - _R1 / 4 - 217 / (2 * _R1)),
    "xi2": float(SQRT2 / 4 - _R2 / 4 - 125 / (2 * _R2)),
    "xi3": float(_R1 / 4 + 217 / (2 * _R1) - SQRT2 / 4),
    "xi4": float(_R2 / 4 + 125 / (2 * _R2) - SQRT2 / 4),
    "xi5": _hyp(np.sqrt(30 * np.sqrt(163.0) * np.cos(_ARG / 3) - 5) / 5),
    "xi6": _hyp(np.sqrt((175 + np.sqrt(12145.0)) / 56)),
    "xi7": _hyp(np.sqrt((175 - np.sqrt(12145.0)) / 56)),
    "xi8": _hyp(np.sqrt(1.2 * (np.sqrt(163.0) * np.cos((np.pi - _ARG) / 3) + 1))),
    "xi9": _hyp(np.sqrt(1.2 * (np.sqrt(163.0) * np.cos((np.pi + _ARG) / 3) + 1))),
}
"""Closed-form stability thresholds of the non-constant extremal families (shift 0)."""

THRESHOLD_DECIMALS = {
    "xi1": -10.55, "xi2": -8.03, "xi3": 10.55, "xi4": 8.03, "xi5": 4.17,
    "xi6": 3.08, "xi7": 0.82, "xi8": 4.25, "xi9": 1.57,
}

# which threshold names bound the sign changes of each family (positive side for symmetric ones)
_FAMILY_THRESHOLDS = {
    "reciprocal+": {"P0": ["xi1"], "P1": ["xi2"]},
    "reciprocal-": {"P0": ["xi3"], "P1": ["xi4"]},
    "coth": {"P1": ["xi5"]},
    "tanh": {"P0": ["xi6", "xi7"], "P1": ["xi8", "xi9"]},
}

FAMILIES = ("tan", "cot", "tanh", "coth", "reciprocal+", "reciprocal-", "const")


@dataclass(frozen=True)
class ExtremalFamily:
    name: str
    eps: int
    phi: Callable  # jet-compatible phi(xi)
    poles: Callable[[float, float], np.ndarray]  # poles inside [lo, hi]
    window: tuple[float, float]


def extremal_family(name: str, shift: float = 0.0, phi: float | None = None, eps: int | None = None) -> ExtremalFamily:
    """Curvature function, sign and natural scan window of a known extremal family."""
    k = SQRT2 / 3
    amp = _HALF
    if name == "const":
        if phi is None or eps not in (1, -1):
            raise InvalidParams("const family needs phi and eps = +-1")
        value = float(phi)
        return ExtremalFamily(name, eps, lambda x: 0.0 * x + value, lambda lo, hi: np.empty(0), (-np.inf, np.inf))
    expected = {"tan": -1, "cot": -1, "reciprocal+": -1, "reciprocal-": -1, "tanh": 1, "coth": 1}
    if name not in expected:
        raise InvalidParams(f"unknown family {name!r}; choose from {', '.join(FAMILIES)}")
    if eps is not None and eps != expected[name]:
        raise InvalidParams(f"family {name} is extremal only for eps = {expected[name]}")
    e = expected[name]
    centre = shift / k

    def lattice(offset: float, spacing: float):
        def poles(lo, hi):
            j0, j1 = np.ceil((lo - offset) / spacing), np.floor((hi - offset) / spacing)
            return offset + spacing * np.arange(j0, j1 + 1)
        return poles

    def single(at: float):
        return lambda lo, hi: np.array([at]) if lo <= at <= hi else np.empty(0)

    period = np.pi / k
    if name == "tan":
        fn = lambda x: amp * J.tan(shift - k * x)
        first = centre - 0.5 * period
        return ExtremalFamily(name, e, fn, lattice(first, period), (first, first + period))
    if name == "cot":
        fn = lambda x: amp * J.cot(k * x - shift)
        return ExtremalFamily(name, e, fn, lattice(centre, period), (centre, centre + period))
    if name == "tanh":
        return ExtremalFamily(name, e, lambda x: amp * J.tanh(k * x - shift), single(np.inf), (centre - 30, centre + 30))
    if name == "coth":
        return ExtremalFamily(name, e, lambda x: amp * J.coth(k * x - shift), single(centre), (centre - 30, centre + 30))
    sign = 1.0 if name == "reciprocal+" else -1.0
    fn = lambda x: 4.5 / (x - shift) + sign * SQRT2 / 2
    return ExtremalFamily(name, e, fn, single(shift), (shift - 30, shift + 30))


@dataclass(frozen=True)
class SignInterval:
    lo: float
    hi: float
    signs: tuple[int, int, int, int]  # sign of P0..P3 inside (0 means identically zero)
    verdict: str


@dataclass
class StabilityReport:
    family: str
    eps: int
    params: dict
    intervals: list[SignInterval]
    roots: dict[str, list[float]]
    poles: list[float]
    thresholds: dict[str, tuple[float, float]] = field(default_factory=dict)  # name -> (computed, closed form)

    def stable_set(self) -> list[tuple[float, float]]:
        """Maximal closed intervals on which the curve is a stable maximum."""
        merged: list[list[float]] = []
        for iv in self.intervals:
            if iv.verdict != "stable-maximal":
                continue
            if merged and merged[-1][1] == iv.lo and iv.lo not in self.poles:
                merged[-1][1] = iv.hi
            else:
                merged.append([iv.lo, iv.hi])
        return [(a, b) for a, b in merged]

    @property
    def verdict(self) -> str:
        kinds = {iv.verdict for iv in self.intervals}
        if kinds == {"stable-maximal"}:
            return "stable-maximal"
        if kinds == {"unstable"}:
            return "unstable"
        return "mixed"


def stability_fields(fam: ExtremalFamily, xi: np.ndarray) -> np.ndarray:
    """``P0..P3`` of an extremal family at ``xi`` (leading axis indexes the coefficient)."""
    d = J.derivatives(fam.phi, xi, 2)
    return np.stack(p_coefficients(d[0], d[1], d[2], fam.eps))


def _verdict(signs) -> str:
    if all(s >= 0 for s in signs):
        return "stable-maximal"
    return "unstable"


def _signs(values: np.ndarray) -> tuple[int, ...]:
    scale = max(1.0, float(np.max(np.abs(values))))
    return tuple(int(np.sign(v)) if abs(v) > SIGN_TOL * scale else 0 for v in values)


def classify_family(name: str, shift: float = 0.0, phi: float | None = None, eps: int | None = None,
                    grid: int = 6001) -> StabilityReport:
    """Sign intervals of ``P0..P3`` along an extremal family and the resulting verdicts.

    Sign changes are bracketed on a uniform grid of the family's window (poles
    excluded with a margin) and refined by Brent's method.
    """
    fam = extremal_family(name, shift, phi, eps)
    params = {"shift": shift} if name != "const" else {"phi": phi, "eps": eps}
    if name == "const":
        P = constant_case_coeffs(float(phi), int(eps))
        signs = _signs(np.array(P))
        iv = SignInterval(-np.inf, np.inf, signs, _verdict(signs))
        return StabilityReport(name, fam.eps, params, [iv], {f"P{i}": [] for i in range(4)}, [])

    lo, hi = fam.window
    poles = [float(v) for v in fam.poles(lo, hi)]
    segments, edges = [], sorted({lo, hi, *poles})
    for a, b in zip(edges[:-1], edges[1:]):
        a2 = a + POLE_MARGIN if a in poles else a
        b2 = b - POLE_MARGIN if b in poles else b
        if b2 > a2:
            segments.append((a2, b2))

    roots: dict[str, list[float]] = {f"P{i}": [] for i in range(4)}
    n_seg = max(2, grid // max(1, len(segments)))
    for a, b in segments:
        x = np.linspace(a, b, n_seg)
        vals = stability_fields(fam, x)
        for i in range(4):
            v = vals[i]
            for j in np.nonzero(np.sign(v[:-1]) * np.sign(v[1:]) < 0)[0]:
                f = lambda t, i=i: float(stability_fields(fam, np.array([t]))[i, 0])
                roots[f"P{i}"].append(brentq(f, x[j], x[j + 1], xtol=1e-14, rtol=4 * np.finfo(float).eps))
    for key in roots:
        roots[key].sort()

    unbounded = name not in ("tan", "cot")
    cuts = sorted({*edges, *(r for rs in roots.values() for r in rs)})
    intervals = []
    for a, b in zip(cuts[:-1], cuts[1:]):
        mid = 0.5 * (a + b)
        signs = _signs(stability_fields(fam, np.array([mid]))[:, 0])
        left = -np.inf if a == lo and unbounded else a
        right = np.inf if b == hi and unbounded else b
        intervals.append(SignInterval(left, right, signs, _verdict(signs)))

    report = StabilityReport(name, fam.eps, params, intervals, roots, poles)
    centre = shift if name.startswith("reciprocal") else shift * 3 / SQRT2
    for key, names in _FAMILY_THRESHOLDS.get(name, {}).items():
        positive = sorted((abs(r - centre) for r in roots[key] if r - centre >= 0) if name in ("tanh", "coth")
                          else (r - centre for r in roots[key]), key=abs)
        for tname in names:
            target = THRESHOLDS[tname]
            found = min(positive, key=lambda r: abs(r - target)) if positive else np.nan
            report.thresholds[tname] = (float(found), target)
    return report
