"""Group-invariant arc length elements and curvatures.

Everything here is computed from derivative stacks (:class:`VecJet`), so the
same code serves analytic curves (exact jets at chosen parameters) and sampled
closed curves (spectral jets at every node).
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Callable

import numpy as np
from numpy.polynomial import chebyshev as cheb
from scipy.integrate import solve_ivp

from . import jets as J
from .curves import AnalyticCurve, SampledClosedCurve, eval_jets, spectral_jets
from .errors import (
    BlowUp,
    Degenerate,
    DegenerateFrame,
    FlatPoint,
    InflectionPoint,
    SextacticPoint,
)
from .jets import Jet, VecJet, bracket, bracket_jet, ga_coefficients

INFLECTION_TOL = 1e-9
DEGENERACY_MARGIN = 1e-10


class Group(str, Enum):
    SE = "SE"
    Sim = "Sim"
    SL = "SL"
    GL = "GL"
    SA = "SA"
    GA = "GA"


def curve_jets(curve, p, order: int) -> VecJet:
    """Derivative stacks for either backend; sampled curves ignore ``p``."""
    if isinstance(curve, SampledClosedCurve):
        return spectral_jets(curve, order)
    if isinstance(curve, VecJet):
        return curve
    return eval_jets(curve, p, order)


def along(x: VecJet, density: Jet, count: int) -> list[VecJet]:
    """Derivatives with respect to the arc parameter ``ds = density dp``.

    Returns ``[x_s, x_ss, ...]`` (``count`` entries) as vector jets.
    """
    inv = density.reciprocal()
    out = []
    cur = x
    for _ in range(count):
        cur = cur.derivative().scale(inv)
        out.append(cur)
    return out


def scalar_along(f: Jet, density: Jet, count: int) -> np.ndarray:
    """Values of ``f, f_s, ..., f_{s^count}`` for ``ds = density dp``."""
    inv = density.reciprocal()
    vals = [f.value]
    cur = f
    for _ in range(count):
        cur = cur.derivative() * inv
        vals.append(cur.value)
    return np.stack(vals)


def as_s_jet(f: Jet, density: Jet) -> Jet:
    """Re-express a p-jet as a jet in the arc parameter."""
    return Jet(scalar_along(f, density, min(f.order, density.order + 1)))


# fully affine quantity -----------------------------------------------------------

def ga_quantity(x: VecJet) -> tuple[Jet, np.ndarray]:
    """The pre-root quantity ``F`` as a p-jet, plus a per-point magnitude scale."""
    n = x.dim
    c = ga_coefficients(n)
    d = [x.derivative(k) for k in range(n + 3)]
    tail = [d[k] for k in range(n - 1, 0, -1)]  # x_{p^{n-1}}, ..., x_p
    base = bracket_jet(d[n], *tail)
    t1 = bracket_jet(d[n + 2], *tail) / base
    t2 = bracket_jet(d[n + 1], *tail) / base
    t3 = bracket_jet(d[n + 1], d[n], *tail[1:]) / base
    a, b, g = t1 * c.alpha, (t2 * t2) * c.beta, t3 * c.gamma
    scale = np.abs(a.value) + np.abs(b.value) + np.abs(g.value)
    return a - b + g, scale


def ga_density(x: VecJet, scale_floor: float | None = None) -> tuple[Jet, np.ndarray, Jet]:
    """Return ``(g, eps, F)`` with ``g = sqrt(eps F)`` as p-jets."""
    F, scale = ga_quantity(x)
    ref = np.maximum(1.0, scale if scale_floor is None else max(scale_floor, np.max(scale)))
    if np.any(np.abs(F.value) < INFLECTION_TOL * ref):
        raise InflectionPoint("fully affine inflection point: F vanishes")
    eps = np.sign(F.value)
    return J.sqrt(F * eps), eps, F


# arc length elements ---------------------------------------------------------------

def _check(value, what: str):
    if np.any(np.abs(value) < DEGENERACY_MARGIN):
        raise Degenerate(f"{what} vanishes")


def density_jet(group: Group | str, x: VecJet) -> Jet:
    group = Group(group)
    n = x.dim
    d = [x.derivative(k) for k in range(min(x.order, n + 2) + 1)]
    if group is Group.SE:
        sq = J.dot(d[1], d[1])
        _check(sq.value, "speed")
        return J.sqrt(sq)
    if group is Group.Sim:
        sp = J.dot(d[1], d[1])
        _check(sp.value, "speed")
        coef = J.dot(d[1], d[2]) / sp
        perp = VecJet.from_components([a - coef * b for a, b in zip(d[2].components, d[1].components)])
        num = J.dot(perp, perp)
        _check(num.value, "normal acceleration")
        return J.sqrt(num / sp)
    if group is Group.SL:
        br = bracket_jet(*d[:n])
        _check(br.value, "[x, x_p, ...]")
        return J.power(br * np.sign(br.value), 2.0 / (n * (n - 1)))
    if group is Group.GL:
        top = bracket_jet(*d[1 : n + 1])
        bot = bracket_jet(*d[:n])
        _check(top.value, "[x_p, ..., x_{p^n}]")
        _check(bot.value, "[x, ..., x_{p^{n-1}}]")
        ratio = top / bot
        return J.power(ratio * np.sign(ratio.value), 1.0 / n)
    if group is Group.SA:
        br = bracket_jet(*d[1 : n + 1])
        _check(br.value, "[x_p, ..., x_{p^n}]")
        return J.power(br * np.sign(br.value), 2.0 / (n * (n + 1)))
    return ga_density(x)[0]


def density_order(group: Group | str, n: int) -> int:
    """Highest curve derivative the density of ``group`` uses in R^n."""
    return {Group.SE: 1, Group.Sim: 2, Group.SL: n - 1, Group.GL: n, Group.SA: n, Group.GA: n + 2}[Group(group)]


def arclength_element(group: Group | str, curve, p=None, order_extra: int = 0) -> np.ndarray:
    """Density ``f`` with ``ds = f dp`` for the given group."""
    group = Group(group)
    x = curve_jets(curve, p, max(density_order(group, curve.dim), 2) + order_extra)
    return density_jet(group, x).value


def segment_length(group: Group | str, curve: AnalyticCurve, a: float, b: float, nodes: int = 128) -> float:
    """Gauss-Legendre integral of the invariant density over ``[a, b]``."""
    t, w = np.polynomial.legendre.leggauss(nodes)
    p = 0.5 * (b - a) * t + 0.5 * (a + b)
    return float(0.5 * (b - a) * np.sum(w * arclength_element(group, curve, p)))


# plane fully affine invariants -----------------------------------------------------

@dataclass(frozen=True)
class PlaneInvariants:
    g: np.ndarray
    phi: np.ndarray
    lam: np.ndarray
    eps: np.ndarray
    F: np.ndarray
    phi_xi: np.ndarray  # phi and its xi-derivatives, leading axis = order

    @property
    def lam_residual(self) -> np.ndarray:
        if self.phi_xi.shape[0] < 2:
            raise Degenerate("phi_xi unavailable at this jet order")
        return self.lam - (2 * self.phi ** 2 + 3 * self.phi_xi[1] + self.eps) / 9.0


@dataclass(frozen=True)
class PlaneFrame:
    """p-jets needed by downstream code: metric, curvature and xi-derivatives."""

    g: Jet
    eps: np.ndarray
    F: Jet
    c_xi: list[VecJet]
    phi: Jet
    lam: Jet


def plane_frame(x: VecJet, scale_floor: float | None = None) -> PlaneFrame:
    if x.dim != 2:
        raise Degenerate("plane invariants need a plane curve")
    g, eps, F = ga_density(x, scale_floor)
    c1, c2, c3 = along(x, g, 3)
    base = bracket_jet(c1, c2)
    phi = -(bracket_jet(c1, c3) / base)
    lam = -(bracket_jet(c3, c2) / base)
    return PlaneFrame(g, eps, F, [c1, c2, c3], phi, lam)


def plane_ga_invariants(curve, p=None, order: int = 8) -> PlaneInvariants:
    """Fully affine metric density, curvature and λ of a plane curve."""
    x = curve_jets(curve, p, order if not isinstance(curve, SampledClosedCurve) else min(order, 7))
    fr = plane_frame(x)
    return PlaneInvariants(
        g=fr.g.value,
        phi=fr.phi.value,
        lam=fr.lam.value,
        eps=fr.eps,
        F=fr.F.value,
        phi_xi=scalar_along(fr.phi, fr.g, fr.phi.order),
    )


def xi_derivatives(curve, p=None, count: int = 4, order: int | None = None) -> tuple[list[np.ndarray], np.ndarray]:
    """Vectors ``C_xi, ..., C_{xi^count}`` and the metric density at ``p``."""
    x = curve_jets(curve, p, order if order is not None else count + 4)
    g = ga_density(x)[0]
    return [v[0] for v in along(x, g, count)], g.value


# reparametrization identity -----------------------------------------------------------

def repar_identity_residual(curve: AnalyticCurve, rmap, p) -> np.ndarray:
    """Relative mismatch of ``F_p = (dr/dp)^2 F_r`` for ``x(p) = y(r(p))``."""
    from .curves import reparametrize

    n = curve.dim
    composed = reparametrize(curve, rmap)
    lhs, _ = ga_quantity(eval_jets(composed, p, n + 2))
    r = rmap.jets(p, 1)
    rhs, _ = ga_quantity(eval_jets(curve, r.value, n + 2))
    expected = r[1] ** 2 * rhs.value
    return np.abs(lhs.value - expected) / np.maximum(np.abs(expected), 1e-300)


# higher dimensions -------------------------------------------------------------------------

@dataclass(frozen=True)
class HigherInvariants:
    n: int
    phi1: np.ndarray
    phis: np.ndarray  # phi_3 .. phi_n, leading axis
    lam: np.ndarray  # from the linear solve
    lam_formula: np.ndarray  # from the closed expression in phi1 and its derivative
    eps: np.ndarray
    residual: np.ndarray  # norm of the expansion residual


def higher_ga_invariants(curve, p, n: int | None = None) -> HigherInvariants:
    """Fully affine curvatures of a curve in R^n.

    ``x_{xi^{n+1}}`` is expanded on ``x_xi, ..., x_{xi^n}``; the coefficient of
    ``x_{xi^n}`` is ``phi1`` and that of ``x_{xi^{n-1}}`` is ``lambda``.
    ``lam_formula`` needs curve jets of order ``2n + 3`` and is NaN when that
    exceeds the jet cap.
    """
    n = n or curve.dim
    want = 2 * n + 3
    order = min(want, J.MAX_ORDER)
    x = curve_jets(curve, p, order)
    g, eps, _ = ga_density(x)
    xs = along(x, g, n + 1)
    cols = [v[0] for v in xs]  # x_xi .. x_{xi^{n+1}}
    basis = cols[:n]
    det = bracket(*basis)
    if np.any(np.abs(det) < DEGENERACY_MARGIN):
        raise Degenerate("x_xi, ..., x_{xi^n} are linearly dependent")
    mat = np.moveaxis(np.stack(basis, axis=1), (0, 1), (-2, -1))  # (..., n, n) columns
    rhs = np.moveaxis(cols[n], 0, -1)[..., None]
    coef = np.linalg.solve(mat, rhs)[..., 0]
    coef = np.moveaxis(coef, -1, 0)  # coef[j] multiplies x_{xi^{j+1}}
    resid_vec = cols[n] - sum(coef[j] * basis[j] for j in range(n))
    residual = np.linalg.norm(resid_vec, axis=0)

    tail = [xs[k] for k in range(n - 2, -1, -1)]  # x_{xi^{n-1}} .. x_xi
    phi1_jet = bracket_jet(xs[n], *tail) / bracket_jet(xs[n - 1], *tail)
    phi1 = phi1_jet.value
    lam = coef[n - 2]
    phis = np.stack([coef[n - i] for i in range(3, n + 1)]) if n >= 3 else np.zeros((0,) + np.shape(phi1))

    if phi1_jet.order >= 1:
        c = ga_coefficients(n)
        dphi1 = (phi1_jet.derivative() / g).value
        lam_formula = c.omega * ((c.alpha - c.beta) * phi1 ** 2 + c.alpha * dphi1 - eps) / (3 * n * (n + 1))
    else:
        lam_formula = np.full(np.shape(phi1), np.nan)
    return HigherInvariants(n, phi1, phis, lam, lam_formula, eps, residual)


# subgroup curvatures ------------------------------------------------------------------------

def _gram_schmidt(vectors: list[VecJet], lengths: Jet | None = None) -> list[VecJet]:
    """Orthonormal (or equal-length) frame from the leading vectors.

    The last vector is flipped where needed so the frame is positively oriented.
    """
    frame = []
    for v in vectors:
        w = v
        for e in frame:
            proj = J.dot(w, e)
            w = VecJet.from_components([a - proj * b for a, b in zip(w.components, e.components)])
        norm = J.sqrt(J.dot(w, w))
        if np.any(np.abs(norm.value) < DEGENERACY_MARGIN):
            raise Degenerate("frame vectors are linearly dependent")
        frame.append(w.scale(norm.reciprocal()))
    order = min(f.order for f in frame)
    frame = [f.truncate(order) for f in frame]
    orient = np.sign(bracket(*[f[0] for f in frame]))
    frame[-1] = VecJet(frame[-1].data * orient)
    if lengths is not None:
        frame = [f.scale(lengths) for f in frame]
    return frame


def subgroup_curvatures(group: Group | str, curve, p=None, order: int | None = None) -> np.ndarray:
    """Curvatures of the requested geometry; leading axis indexes the curvature."""
    group = Group(group)
    n = curve.dim
    x = curve_jets(curve, p, order or (n + 4))
    f = density_jet(group, x)
    if group in (Group.SE, Group.Sim):
        xs = along(x, f, n)
        if group is Group.SE:
            frame = _gram_schmidt(xs)
        else:
            speed = J.sqrt(J.dot(xs[0], xs[0]))
            frame = _gram_schmidt(xs, speed)
        dframe = [v.derivative().scale(f.reciprocal()) for v in frame]
        if group is Group.SE:
            out = [J.dot(dframe[0], frame[1])]
            out += [J.dot(dframe[i + 1], frame[i + 2]) for i in range(n - 2)]
        else:
            v1 = frame[0]
            out = [-(J.dot(dframe[0], v1) / J.dot(v1, v1))]
            out += [J.dot(dframe[i], frame[i + 1]) / J.dot(frame[i + 1], frame[i + 1]) for i in range(1, n - 1)]
        return np.stack([o.value for o in out])

    if group is Group.GA:
        if n != 2:
            h = higher_ga_invariants(curve, p, n)
            return np.concatenate([h.phi1[None], h.phis])
        return plane_ga_invariants(curve, p).phi[None]

    xs = [x] + along(x, f, n + 1)
    cols = [v[0] for v in xs]  # x, x_s, ..., x_{s^{n+1}}
    if group is Group.SL:
        eps = np.sign(bracket(*cols[:n]))
        out = [eps * bracket(cols[n], *cols[1:n])]
        for i in range(1, n - 1):
            c = list(cols[:n])
            c[i] = cols[n]
            out.append(eps * bracket(*c))
        return np.stack(out)
    if group is Group.GL:
        base = bracket(*cols[:n])
        out = []
        for i in range(1, n):
            c = list(cols[:n])
            c[i] = cols[n]
            out.append(bracket(*c) / base)
        return np.stack(out)
    # SA
    if n == 2:
        # plane convention: x_sss = -mu x_s, i.e. mu = [x_ss, x_sss]
        return bracket(cols[2], cols[3])[None]
    eps = np.sign(bracket(*cols[1 : n + 1]))
    out = []
    for i in range(1, n):
        c = list(cols[1 : n + 1])
        c[i - 1] = cols[n + 1]
        out.append(eps * bracket(*c))
    return np.stack(out)


# cross-geometry conversions -----------------------------------------------------------------

@dataclass(frozen=True)
class EquiAffineData:
    dsigma_ds: np.ndarray
    mu: Jet  # as a jet in the equi-affine parameter


def euclid_to_equiaffine(kappa: Jet) -> EquiAffineData:
    """Equi-affine curvature from the Euclidean curvature jet (in arc length s)."""
    if np.any(np.abs(kappa.value) < DEGENERACY_MARGIN):
        raise FlatPoint("Euclidean curvature vanishes")
    ks = kappa.derivative()
    kss = ks.derivative()
    k = kappa.truncate(kss.order)
    ks = ks.truncate(kss.order)
    mu = J.power(k, 4 / 3) - (5 / 9) * J.power(k, -8 / 3) * ks * ks + (1 / 3) * J.power(k, -5 / 3) * kss
    rate = J.power(k, 1 / 3)
    return EquiAffineData(rate.value, as_s_jet(mu, rate))


@dataclass(frozen=True)
class FullyAffineFromMu:
    eps: np.ndarray
    dxi_dsigma: np.ndarray
    phi: np.ndarray


def equiaffine_to_fullyaffine(mu: Jet) -> FullyAffineFromMu:
    if np.any(np.abs(mu.value) < DEGENERACY_MARGIN):
        raise SextacticPoint("equi-affine curvature vanishes")
    eps = np.sign(mu.value)
    em = mu.value * eps
    phi = 0.5 * eps * em ** -1.5 * mu[1]
    return FullyAffineFromMu(eps, 3.0 * np.sqrt(em), phi)


def euclidean_curvature_jet(x: VecJet) -> tuple[Jet, Jet]:
    """Signed curvature of a plane curve as a p-jet, with the speed jet."""
    d1, d2 = x.derivative(1), x.derivative(2)
    speed = J.sqrt(J.dot(d1, d1))
    return bracket_jet(d1, d2) / (speed * speed * speed), speed


# reconstruction ---------------------------------------------------------------------------

class Reconstruction:
    """Solution of the structure equations over a span.

    Position and first derivative come from the integrator's dense output.
    Higher derivatives come from piecewise Chebyshev fits of the second
    derivative, so re-deriving curvature does not reuse the right-hand side.
    """

    def __init__(self, sol, span: tuple[float, float], degree: int = 28, window: float = 4.0):
        self._sol = sol
        a, b = float(span[0]), float(span[1])
        self.span = (a, b)
        pieces = max(1, int(np.ceil((b - a) / window)))
        self._edges = np.linspace(a, b, pieces + 1)
        nodes = np.cos(np.pi * (np.arange(degree + 1) + 0.5) / (degree + 1))
        self._fits = []
        for lo, hi in zip(self._edges[:-1], self._edges[1:]):
            y = sol.sol(0.5 * (hi - lo) * nodes + 0.5 * (lo + hi))
            self._fits.append([cheb.chebfit(nodes, y[4 + i], degree) for i in range(2)])

    def points(self, xi) -> np.ndarray:
        return self._sol.sol(np.asarray(xi, dtype=float))[0:2].T

    def frame(self, xi) -> np.ndarray:
        """Rows ``(C, C', C'')`` stacked as shape ``(len(xi), 3, 2)``."""
        y = self._sol.sol(np.atleast_1d(np.asarray(xi, dtype=float)))
        return np.stack([y[0:2].T, y[2:4].T, y[4:6].T], axis=1)

    def jets(self, xi, order: int = 8) -> VecJet:
        """Derivative stacks in the curvature parameter at ``xi``."""
        xi = np.atleast_1d(np.asarray(xi, dtype=float))
        y = self._sol.sol(xi)
        idx = np.clip(np.searchsorted(self._edges, xi, side="right") - 1, 0, len(self._fits) - 1)
        data = np.empty((order + 1, 2, xi.size))
        data[0], data[1] = y[0:2], y[2:4]
        for j, (lo, hi) in enumerate(zip(self._edges[:-1], self._edges[1:])):
            sel = idx == j
            if not np.any(sel):
                continue
            half = 0.5 * (hi - lo)
            u = (xi[sel] - (lo + half)) / half
            for i, c in enumerate(self._fits[j]):
                for k in range(order - 1):
                    data[2 + k, i, sel] = cheb.chebval(u, cheb.chebder(c, k)) / half**k
        return VecJet(data)


def reconstruct_from_curvature(
    phi: Callable,
    eps: int,
    span: tuple[float, float],
    initial=((0.0, 0.0), (1.0, 0.0), (0.0, 1.0)),
    cap: float = 1e8,
) -> Reconstruction:
    """Integrate ``C''' = -lam C' - phi C''`` where ``lam = (2 phi^2 + 3 phi' + eps) / 9``.

    ``phi`` must accept jets (use the functions in :mod:`affineflow.jets`)
    so its derivative is exact.
    """
    c0, c1, c2 = (np.asarray(v, dtype=float) for v in initial)
    if bracket(c1, c2) <= 0:
        raise DegenerateFrame("initial frame must satisfy [C', C''] > 0")

    def rhs(t, y):
        d = J.derivatives(phi, t, 1)
        lam = (2 * d[0] ** 2 + 3 * d[1] + eps) / 9.0
        c1_, c2_ = y[2:4], y[4:6]
        return np.concatenate([c1_, c2_, -lam * c1_ - d[0] * c2_])

    def blowup(t, y):
        return cap - np.max(np.abs(y))

    blowup.terminal = True
    y0 = np.concatenate([c0, c1, c2])
    sol = solve_ivp(rhs, span, y0, method="DOP853", rtol=1e-13, atol=1e-14, dense_output=True, events=blowup)
    if sol.status == 1:
        raise BlowUp("reconstructed curve exceeded the state cap")
    if not sol.success:
        raise BlowUp(sol.message)
    return Reconstruction(sol, span)
