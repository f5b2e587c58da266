"""Invariant curve motions, the fully affine heat flow and its solitons.

Closed-curve states live on a fixed material grid ``p`` in ``[0, period)``
with an evolving metric density; arc-parameter derivatives are spectral in
``p`` divided by the density.  Time stepping uses the explicit RKC2 scheme in
:mod:`affineflow.stepping`.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy.optimize import minimize_scalar

from . import jets as J
from .curves import AnalyticCurve, SampledClosedCurve, TWO_PI, sample_closed, spectral_derivatives, spectral_jets
from .errors import (
    BlowUp,
    DenominatorVanishes,
    InvalidParams,
    LostConvexity,
    MuVanishes,
    NonFiniteField,
    NotConvex,
    StepUnderflow,
)
from .invariants import Group, along, density_jet, xi_derivatives
from .periodic import arc_stack, closed_fields, closed_integral, cumulative
from .stepping import adaptive_step, fixed_steps

BLOWUP_ENERGY = 1e6
DENOMINATOR_MARGIN = 1e-8


# general (W, U) motion -----------------------------------------------------------------

def rates_from_stacks(phi: np.ndarray, U: np.ndarray, W: np.ndarray, eps) -> tuple[np.ndarray, np.ndarray]:
    """``(g_t/g, phi_t)`` for ``C_t = W C_xi + U C_xi^2`` from derivative stacks.

    ``phi`` holds ``phi .. phi_xi^4``, ``U`` holds ``U .. U_xi^5`` and ``W``
    holds ``W, W_xi``; all stacks have the derivative order on the first axis.
    """
    a, b, c, d, e4 = phi[:5]
    u0, u1, u2, u3, u4, u5 = U[:6]
    w0, w1 = W[:2]
    e = eps
    gtog = e / 18.0 * (
        27 * u4 - 18 * a * u3 + u2 * (21 * e - 3 * a**2 - 72 * b)
        + u1 * (2 * a**3 + 9 * a * b - 17 * e * a - 63 * c)
        + 18 * e * w1
        + u0 * (4 * a**2 * b + 6 * a * c + 12 * b**2 - 18 * e * b - 18 * d)
    )
    phit = (
        w0 * b + 4.5 * e * u5 - 4.5 * e * a * u4
        + u3 * (0.5 * e * a**2 - 15 * e * b + 2.5)
        + u2 * (0.5 * e * a**3 - 2 * a + 4.5 * e * a * b - 22.5 * e * c)
        + u1 * (
            -e / 9 * a**4 + 7 / 18 * a**2 + 2 / 9 * e + 7 / 6 * e * a**2 * b - 13 / 6 * b
            + 3.5 * e * b**2 + 6 * e * a * c - 13.5 * e * d
        )
        + u0 * (
            -2 / 9 * e * a**3 * b + 2 / 3 * e * a * b**2 - a * b / 9 + e / 3 * a**2 * c
            + 5 * e * b * c - 4 / 3 * c + 2 * e * a * d - 3 * e * e4
        )
    )
    return gtog, phit


@dataclass(frozen=True)
class CurvatureState:
    """Curvature ``phi`` and metric density ``g`` on a periodic material grid."""

    phi: np.ndarray
    g: np.ndarray
    eps: int = 1
    t: float = 0.0
    period: float = TWO_PI

    @property
    def N(self) -> int:
        return self.phi.size

    def phi_stack(self, count: int) -> np.ndarray:
        return arc_stack(self.phi, self.g, self.period, count)

    def integral(self, values: np.ndarray) -> float:
        """``oint values dxi``."""
        return closed_integral(values * self.g, self.period)

    @property
    def length(self) -> float:
        return closed_integral(self.g, self.period)

    @property
    def energy(self) -> float:
        return self.integral(self.phi**2)

    @property
    def mean_phi(self) -> float:
        return self.integral(self.phi)

    def length_rate_identity(self) -> float:
        """``(1/3) oint phi_xi^2 dxi``."""
        return self.integral(self.phi_stack(1)[1] ** 2) / 3.0


def curvature_state(curve, N: int = 256) -> CurvatureState:
    """Initial curvature state of a closed convex plane curve."""
    samples = curve if isinstance(curve, SampledClosedCurve) else sample_closed(curve, N)
    cf = closed_fields(samples)
    eps = np.unique(cf.eps)
    if eps.size != 1:
        raise NotConvex("eps changes sign: the curve has equi-affine inflections")
    return CurvatureState(cf.phi.copy(), cf.g.copy(), int(eps[0]), 0.0, samples.period)


def _field_stack(values, state: CurvatureState, count: int) -> np.ndarray:
    arr = np.broadcast_to(np.asarray(values, dtype=float), state.phi.shape)
    return arc_stack(arr, state.g, state.period, count)


def invariant_rates(W, U, state: CurvatureState) -> tuple[np.ndarray, np.ndarray]:
    """Pointwise ``g_t/g`` and ``phi_t`` for motion coefficient fields on the grid."""
    return rates_from_stacks(state.phi_stack(4), _field_stack(U, state, 5), _field_stack(W, state, 1), state.eps)


def curvature_derivative_rate(state: CurvatureState, k: int, W=0.0, U=1.0) -> np.ndarray:
    """``d/dt`` of ``phi_{xi^k}`` at fixed material point, by the commutator recursion."""
    if not 0 <= k <= 3:
        raise InvalidParams("k must be between 0 and 3")
    gtog, rate = invariant_rates(W, U, state)
    stack = state.phi_stack(k)
    for j in range(1, k + 1):
        rate = arc_stack(rate, state.g, state.period, 1)[1] - gtog * stack[j]
    return rate


# fully affine heat flow on the curvature state --------------------------------------------

def heat_rates(state: CurvatureState) -> tuple[np.ndarray, np.ndarray]:
    """``(g_t, phi_t)`` of the heat flow ``C_t = C_xi^2``."""
    a, b, c, d, e4 = state.phi_stack(4)
    e = state.eps
    gtog = e / 9.0 * (2 * a**2 * b + 3 * a * c + 6 * b**2 - 9 * e * b - 9 * d)
    phit = (
        -2 / 9 * e * a**3 * b + 2 / 3 * e * a * b**2 - a * b / 9 + e / 3 * a**2 * c
        + 5 * e * b * c - 4 / 3 * c + 2 * e * a * d - 3 * e * e4
    )
    return gtog * state.g, phit


def _heat_system(template: CurvatureState):
    n = template.N

    def unpack(y: np.ndarray, t: float) -> CurvatureState:
        return replace(template, g=y[:n], phi=y[n:], t=t)

    def f(t, y):
        gt, pt = heat_rates(unpack(y, t))
        return np.concatenate([gt, pt])

    def rho(y):
        g, phi = y[:n], y[n:]
        k = template.N / 2 * TWO_PI / template.period / float(np.min(g))
        amp = float(np.max(np.abs(phi)))
        return 1.2 * (3 * k**4 + 2 * amp * k**3 + (4 / 3 + amp**2) * k**2) + 1.0

    return f, rho, unpack


def _validate(state: CurvatureState) -> None:
    if not (np.all(np.isfinite(state.phi)) and np.all(np.isfinite(state.g))):
        raise NonFiniteField("non-finite curvature state")
    if np.any(state.g <= 0):
        raise LostConvexity("metric density became non-positive")


def heat_step_curvature(state: CurvatureState, dt_max: float, dt_try: float | None = None,
                        rtol: float = 1e-7) -> tuple[CurvatureState, float]:
    """One adaptive step of the coupled ``(g, phi)`` heat flow.

    Returns the advanced state and a suggested next step size.
    """
    f, rho, unpack = _heat_system(state)
    y = np.concatenate([state.g, state.phi])
    res = adaptive_step(f, state.t, y, dt_try or dt_max, rho, rtol=rtol, atol=1e-12, h_max=dt_max, blocks=2)
    out = unpack(res.y, res.t)
    _validate(out)
    return out, res.h_next


@dataclass
class FlowMonitors:
    t: list[float] = field(default_factory=list)
    L: list[float] = field(default_factory=list)
    E: list[float] = field(default_factory=list)
    meanphi: list[float] = field(default_factory=list)
    dLdt: list[float] = field(default_factory=list)
    dt: list[float] = field(default_factory=list)

    def record(self, state: CurvatureState, dt: float) -> None:
        if self.t and state.t <= self.t[-1]:
            raise ValueError("monitor timestamps must increase")
        gt, _ = heat_rates(state)
        self.t.append(state.t)
        self.L.append(state.length)
        self.E.append(state.energy)
        self.meanphi.append(state.mean_phi)
        self.dLdt.append(closed_integral(gt, state.period))
        self.dt.append(dt)

    def rows(self) -> np.ndarray:
        return np.column_stack([self.t, self.L, self.E, self.meanphi, self.dLdt])


@dataclass
class FlowRun:
    state: CurvatureState
    monitors: FlowMonitors
    snapshots: list[CurvatureState]
    error: Exception | None = None


def run_heat_flow(state: CurvatureState, T: float, dt_max: float = 0.05, rtol: float = 1e-7,
                  snapshot_times=(), fixed_dt: float | None = None,
                  on_step: Callable[[CurvatureState], None] | None = None) -> FlowRun:
    """Integrate the fully affine heat flow to time ``T``.

    With ``fixed_dt`` the run uses uniform RKC2 steps instead of adaptive
    control (for convergence studies).  Blow-up and step failures are caught
    and returned in ``FlowRun.error`` together with the partial history.
    """
    _validate(state)
    mon = FlowMonitors()
    mon.record(state, 0.0)
    snaps = [state] if 0.0 in snapshot_times else []
    pending = sorted(state.t + t for t in snapshot_times if 0.0 < t <= T)
    t_end = state.t + T
    if fixed_dt is not None:
        f, rho, unpack = _heat_system(state)
        y = fixed_steps(f, state.t, np.concatenate([state.g, state.phi]), t_end, fixed_dt, rho)
        out = unpack(y, t_end)
        _validate(out)
        mon.record(out, fixed_dt)
        return FlowRun(out, mon, snaps + [out])
    h = min(dt_max, 1e-4)
    try:
        while state.t < t_end - 1e-14:
            stop = min(t_end, pending[0]) if pending else t_end
            new, h_next = heat_step_curvature(state, min(dt_max, stop - state.t), min(h, stop - state.t), rtol)
            h = h_next
            state = new
            mon.record(state, state.t - mon.t[-1])
            if on_step:
                on_step(state)
            if pending and state.t >= pending[0] - 1e-12:
                snaps.append(state)
                pending.pop(0)
            if mon.E[-1] > BLOWUP_ENERGY:
                raise BlowUp(f"energy {mon.E[-1]:.3e} exceeded {BLOWUP_ENERGY:.0e} at t={state.t:.6g}")
    except (BlowUp, NonFiniteField, LostConvexity, StepUnderflow) as exc:
        return FlowRun(state, mon, snaps, exc)
    return FlowRun(state, mon, snaps)


# curve recovery ----------------------------------------------------------------------

def _half_shift(values: np.ndarray) -> np.ndarray:
    """Trigonometric interpolant at the midpoints ``p_j + dp / 2``."""
    n = values.size
    vhat = np.fft.rfft(values)
    vhat[-1] = 0.0
    return np.fft.irfft(vhat * np.exp(1j * np.pi * np.arange(vhat.size) / n), n=n)


def curve_points(state: CurvatureState) -> tuple[np.ndarray, float]:
    """Points of a curve with the state's invariants, up to an affine map.

    The frame equations ``C_xxx = -lam C_x - phi C_xx`` (derivatives in
    ``xi``) are integrated across the material grid with classical RK4,
    taking midpoint coefficients from the trigonometric interpolant.  The
    result is centred and whitened (unit second moments), which removes the
    affine freedom up to a rotation.  The second return value is the closure
    gap relative to the curve's size.
    """
    phi1 = state.phi_stack(1)
    lam = (2 * phi1[0] ** 2 + 3 * phi1[1] + state.eps) / 9.0
    coeffs = np.stack([state.g, state.g * lam, state.g * phi1[0]])
    mids = np.stack([_half_shift(c) for c in coeffs])
    dp = state.period / state.N

    def rhs(y, c):
        g, gl, gp = c
        return np.concatenate([g * y[2:4], g * y[4:6], -gl * y[2:4] - gp * y[4:6]])

    y = np.array([0.0, 0.0, 1.0, 0.0, 0.0, 1.0])
    pts = np.empty((state.N + 1, 2))
    pts[0] = y[:2]
    for j in range(state.N):
        c0, cm, c1 = coeffs[:, j], mids[:, j], coeffs[:, (j + 1) % state.N]
        k1 = rhs(y, c0)
        k2 = rhs(y + 0.5 * dp * k1, cm)
        k3 = rhs(y + 0.5 * dp * k2, cm)
        k4 = rhs(y + dp * k3, c1)
        y = y + dp / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        pts[j + 1] = y[:2]
    body = pts[:-1]
    centred = body - body.mean(axis=0)
    cov = centred.T @ centred / state.N
    evals, evecs = np.linalg.eigh(cov)
    white = centred @ evecs / np.sqrt(evals)
    gap = float(np.linalg.norm(pts[-1] - pts[0]) / np.sqrt(np.max(evals)))
    return white, gap


# comparing curvature profiles ----------------------------------------------------------

def xi_fourier(phi: np.ndarray, g: np.ndarray, period: float, kmax: int) -> tuple[np.ndarray, float]:
    """Fourier coefficients of ``phi`` as a function of ``xi`` (modes ``0..kmax``) and the length.

    The transform is a quadrature in the material parameter, so it does not
    need ``phi`` resampled on a uniform ``xi`` grid.
    """
    w = g * (period / g.size)
    L = float(np.sum(w))
    xi = cumulative(g, period)
    k = np.arange(kmax + 1)
    basis = np.exp(-2j * np.pi * np.outer(k, xi) / L)
    return basis @ (phi * w) / L, L


def profile_distance(a: tuple[np.ndarray, np.ndarray, float], b: tuple[np.ndarray, np.ndarray, float],
                     kmax: int = 32, samples: int = 512) -> float:
    """Max difference of two ``(phi, g, period)`` profiles after the best shift in ``xi``.

    Both profiles are rescaled to a common period, so the result compares
    shapes, not lengths; the length difference is returned by the caller if
    needed.
    """
    ca, _ = xi_fourier(*a, kmax)
    cb, _ = xi_fourier(*b, kmax)
    k = np.arange(kmax + 1)
    weight = np.where(k == 0, 1.0, 2.0)

    def corr(shift):
        return float(np.sum(weight * np.real(np.conj(ca) * cb * np.exp(1j * k * shift))))

    grid = np.linspace(0, TWO_PI, 4 * samples, endpoint=False)
    best = grid[int(np.argmax([corr(x) for x in grid]))]
    step = TWO_PI / (4 * samples)
    best = minimize_scalar(lambda x: -corr(x), bounds=(best - step, best + step), method="bounded",
                           options={"xatol": 1e-12}).x
    theta = np.linspace(0, TWO_PI, samples, endpoint=False)
    modes = np.exp(1j * np.outer(theta, k))
    fa = np.real(modes @ (weight * ca))
    fb = np.real(modes @ (weight * cb * np.exp(1j * k * best)))
    return float(np.max(np.abs(fa - fb)))


# curve-level heat flow (Euclidean normal form) -----------------------------------------------

@dataclass(frozen=True)
class CurveState:
    curve: SampledClosedCurve
    t: float = 0.0


def _curve_geometry(points: np.ndarray, period: float):
    d = spectral_derivatives(points.T, period, 2)
    x1, x2 = d[1], d[2]
    speed = np.hypot(x1[0], x1[1])
    kappa = (x1[0] * x2[1] - x1[1] * x2[0]) / speed**3
    tangent = x1 / speed
    normal = np.array([-tangent[1], tangent[0]])  # left normal: inward for counter-clockwise curves
    return speed, kappa, normal


def normal_speed(curve: SampledClosedCurve) -> tuple[np.ndarray, np.ndarray]:
    """``(speed, inward normal)`` with speed ``1 / (9 k - 5 k^-3 k_s^2 + 3 k^-2 k_ss)``."""
    speed, kappa, normal = _curve_geometry(curve.points, curve.period)
    if np.any(kappa <= 0):
        raise LostConvexity("Euclidean curvature is not positive")
    ks = arc_stack(kappa, speed, curve.period, 2)
    denom = 9 * kappa - 5 * ks[1] ** 2 / kappa**3 + 3 * ks[2] / kappa**2
    if np.any(np.abs(denom) < DENOMINATOR_MARGIN):
        raise DenominatorVanishes("normal-speed denominator vanishes")
    return 1.0 / denom, normal


def dealias(values: np.ndarray) -> np.ndarray:
    """Drop Fourier modes above two thirds of the resolvable band (last axis)."""
    n = values.shape[-1]
    vhat = np.fft.rfft(values)
    vhat[..., n // 3 + 1:] = 0.0
    return np.fft.irfft(vhat, n=n)


def curve_velocity(curve: SampledClosedCurve) -> np.ndarray:
    """Dealiased normal velocity field, shape ``(2, N)``.

    Without the filter the radial Nyquist mode of the samples aliases through
    the normal vector and grows.
    """
    v, nrm = normal_speed(curve)
    return dealias(v * nrm)


def heat_step_curve(state: CurveState, dt_max: float, dt_try: float | None = None,
                    rtol: float = 1e-7) -> tuple[CurveState, float]:
    """One adaptive step moving the samples along the inward normal."""
    c = state.curve
    n = c.N

    def f(t, y):
        return curve_velocity(SampledClosedCurve(y.reshape(2, n).T, c.period)).ravel()

    def rho(y):
        pts = y.reshape(2, n).T
        speed, kappa, _ = _curve_geometry(pts, c.period)
        k = n / 3 * TWO_PI / c.period / float(np.min(speed))
        return 1.2 * 3 * k**4 / (81 * float(np.min(kappa)) ** 4) + 1.0

    res = adaptive_step(f, state.t, c.points.T.ravel(), dt_try or dt_max, rho, rtol=rtol, atol=1e-12, h_max=dt_max)
    pts = res.y.reshape(2, n).T
    if not np.all(np.isfinite(pts)):
        raise NonFiniteField("non-finite curve samples")
    return CurveState(SampledClosedCurve(pts, c.period), res.t), res.h_next


def run_curve_flow(state: CurveState, T: float, dt_max: float = 0.05, rtol: float = 1e-7) -> CurveState:
    h = min(dt_max, 1e-4)
    t_end = state.t + T
    while state.t < t_end - 1e-14:
        state, h = heat_step_curve(state, min(dt_max, t_end - state.t), min(h, t_end - state.t), rtol)
    return state


# equi-affine backend -------------------------------------------------------------------------

@dataclass(frozen=True)
class MuState:
    """Equi-affine curvature ``mu`` and density ``gbar = dsigma/dp`` on a periodic grid."""

    mu: np.ndarray
    gbar: np.ndarray
    t: float = 0.0
    period: float = TWO_PI

    def mu_stack(self, count: int) -> np.ndarray:
        return arc_stack(self.mu, self.gbar, self.period, count)

    def integral(self, values: np.ndarray) -> float:
        """``oint values dsigma``."""
        return closed_integral(values * self.gbar, self.period)

    def phi(self) -> np.ndarray:
        """Fully affine curvature ``mu_sigma / (2 mu^(3/2))`` on the grid."""
        m = self.mu_stack(1)
        return m[1] / (2 * m[0] ** 1.5)

    def xi_density(self) -> np.ndarray:
        """``dxi/dp = 3 sqrt(mu) gbar``."""
        return 3 * np.sqrt(self.mu) * self.gbar

    @property
    def isoperimetric(self) -> float:
        """``oint sqrt(mu) dsigma``."""
        return self.integral(np.sqrt(self.mu))

    def isoperimetric_rate_identity(self) -> float:
        """``(1/12) oint mu^(-3/2) mu_sigma^2 dsigma``."""
        m = self.mu_stack(1)
        return self.integral(m[0] ** -1.5 * m[1] ** 2) / 12.0


def mu_state(curve, N: int = 256) -> MuState:
    samples = curve if isinstance(curve, SampledClosedCurve) else sample_closed(curve, N)
    x = spectral_jets(samples, 5)
    gbar = density_jet(Group.SA, x)
    _, c2, c3 = along(x, gbar, 3)
    mu = c2[0][0] * c3[0][1] - c2[0][1] * c3[0][0]
    if np.any(mu <= 0):
        raise MuVanishes("equi-affine curvature is not positive")
    return MuState(mu, gbar.value.copy(), 0.0, samples.period)


def mu_rates_from_stacks(al: np.ndarray, be: np.ndarray, m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Pointwise ``(gbar_t/gbar, mu_t)`` from sigma-derivative stacks.

    ``al`` holds ``alpha, alpha_sigma``; ``be`` holds ``beta .. beta_sigma^4``;
    ``m`` holds ``mu, mu_sigma, mu_sigma^2``.
    """
    gtog = al[1] - 2 / 3 * be[0] * m[0] + be[2] / 3
    mut = (be[4] + 5 * m[0] * be[2] + 5 * be[1] * m[1] + 4 * be[0] * m[0] ** 2 + m[2] * be[0]) / 3 + al[0] * m[1]
    return gtog, mut


def equiaffine_rates(alpha, beta, state: MuState) -> tuple[np.ndarray, np.ndarray]:
    """``(gbar_t/gbar, mu_t)`` for ``C_t = alpha C_sigma + beta C_sigma^2``."""
    al = arc_stack(np.broadcast_to(np.asarray(alpha, dtype=float), state.mu.shape), state.gbar, state.period, 1)
    be = arc_stack(np.broadcast_to(np.asarray(beta, dtype=float), state.mu.shape), state.gbar, state.period, 4)
    return mu_rates_from_stacks(al, be, state.mu_stack(2))


def fullyaffine_coefficient_stacks(m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Derivative stacks of ``alpha = beta_sigma / 2`` and ``beta = 1 / (9 mu)`` from ``mu .. mu_sigma^4``."""
    beta = (J.Jet(np.asarray(m[:5], dtype=float)) * 9.0).reciprocal()
    be = beta.coeffs
    return 0.5 * be[1:3], be


def fourth_order_mu_rates(m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``(gbar_t/gbar, mu_t)`` of the fully affine heat flow in equi-affine variables.

    ``m`` stacks ``mu .. mu_sigma^4``.  The tangential coefficient is
    ``beta_sigma / 2`` with ``beta = 1 / (9 mu)``, which keeps the equi-affine
    parametrisation periodic.
    """
    u, u1, u2, u3, u4 = m[:5]
    mut = (
        -u4 / (27 * u**2) + 8 * u1 * u3 / (27 * u**3) + 2 * u2**2 / (9 * u**3)
        - 4 / (27 * u**4) * (9 * u1**2 + u**3) * u2 + 8 * u1**4 / (9 * u**5)
        + 7 * u1**2 / (54 * u**2) + 4 / 27 * u
    )
    gtog = (-4 * u**3 - 5 * u * u2 + 10 * u1**2) / (54 * u**3)
    return gtog, mut


def sigma_parametrised_mu_rate(m: np.ndarray, sigma: np.ndarray) -> np.ndarray:
    """``mu_t`` of the same flow when the material parameter stays ``sigma``.

    Here the tangential coefficient is ``(2 sigma - 9 beta_sigma) / 27``,
    which keeps ``gbar`` fixed but depends explicitly on the coordinate
    ``sigma``, so it only makes sense on an open arc or locally.
    """
    u, u1, u2, u3, u4 = m[:5]
    return (
        -u4 / (27 * u**2) + 8 * u1 * u3 / (27 * u**3) + 2 * u2**2 / (9 * u**3)
        - 4 / (27 * u**4) * (9 * u1**2 + u**3) * u2 + 8 * u1**4 / (9 * u**5)
        + 2 * u1**2 / (9 * u**2) + 2 / 27 * (sigma * u1 + 2 * u)
    )


def sigma_parametrised_coefficient_stacks(m: np.ndarray, sigma: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Stacks of ``alpha = (2 sigma - 9 beta_sigma) / 27`` and ``beta = 1 / (9 mu)``."""
    be = (J.Jet(np.asarray(m[:5], dtype=float)) * 9.0).reciprocal().coeffs
    al = np.stack([(2 * sigma - 9 * be[1]) / 27, (2 - 9 * be[2]) / 27])
    return al, be


def _mu_system(template: MuState, rates):
    n = template.mu.size

    def unpack(y, t):
        return replace(template, gbar=y[:n], mu=y[n:], t=t)

    def f(t, y):
        st = unpack(y, t)
        if np.any(st.mu <= 0):
            raise MuVanishes("equi-affine curvature reached zero")
        gtog, mut = rates(st)
        return np.concatenate([gtog * st.gbar, mut])

    return f, unpack


def _mu_rho(template: MuState, order: int):
    n = template.mu.size

    def rho(y):
        gbar, mu = y[:n], y[n:]
        k = n / 2 * TWO_PI / template.period / float(np.min(gbar))
        if order == 4:
            return 1.2 * k**4 / (27 * float(np.min(mu)) ** 2) * (1 + 1.0 / k) + 1.0
        return 1.2 * (k**2 / 3 + 8 / 3 * float(np.max(mu))) + 1.0

    return rho


def fullyaffine_via_equiaffine_step(state: MuState, dt_max: float, dt_try: float | None = None,
                                    rtol: float = 1e-7) -> tuple[MuState, float]:
    """One adaptive step of the fourth-order equation for ``mu``."""
    f, unpack = _mu_system(state, lambda st: fourth_order_mu_rates(st.mu_stack(4)))
    res = adaptive_step(f, state.t, np.concatenate([state.gbar, state.mu]), dt_try or dt_max,
                        _mu_rho(state, 4), rtol=rtol, atol=1e-12, h_max=dt_max, blocks=2)
    return unpack(res.y, res.t), res.h_next


def equiaffine_heat_step(state: MuState, dt_max: float, dt_try: float | None = None,
                         rtol: float = 1e-8) -> tuple[MuState, float]:
    """One adaptive step of the equi-affine heat flow ``C_t = C_sigma^2``."""
    f, unpack = _mu_system(state, lambda st: equiaffine_rates(0.0, 1.0, st))
    res = adaptive_step(f, state.t, np.concatenate([state.gbar, state.mu]), dt_try or dt_max,
                        _mu_rho(state, 2), rtol=rtol, atol=1e-12, h_max=dt_max, blocks=2)
    return unpack(res.y, res.t), res.h_next


def run_mu_flow(state: MuState, T: float, step=equiaffine_heat_step, dt_max: float = 0.01,
                rtol: float = 1e-8) -> list[MuState]:
    """States after every accepted step of ``step`` up to time ``T``."""
    out = [state]
    h = min(dt_max, 1e-4)
    t_end = state.t + T
    while state.t < t_end - 1e-14:
        state, h = step(state, min(dt_max, t_end - state.t), min(h, t_end - state.t), rtol)
        out.append(state)
    return out


# solitons ----------------------------------------------------------------------------------

SOLITON_TOL = 1e-6


@dataclass(frozen=True)
class SolitonFamily:
    kind: str  # constant, reciprocal, tanA, cotA, tanhA, cothA
    A: float
    a: float
    eps: int
    shift: float = 0.0
    motion: str = ""

    def phi(self, xi):
        """Curvature of the family as a jet-compatible function of ``xi``."""
        A, s = self.A, self.shift
        z = (xi - s) * (A / 3.0)
        if self.kind == "constant":
            return 0.0 * xi + self.shift
        if self.kind == "reciprocal":
            return -3.0 / (xi - s)
        return {
            "tanA": lambda: A * J.tan(z),
            "cotA": lambda: -A * J.cot(z),
            "tanhA": lambda: -A * J.tanh(z),
            "cothA": lambda: -A * J.coth(z),
        }[self.kind]()


@dataclass(frozen=True)
class NotASoliton:
    residual: float
    a: float


def _motion(a: float) -> str:
    if abs(a) <= SOLITON_TOL:
        return "translating"
    return "expanding" if a > 0 else "shrinking"


def soliton_classify(phi, eps: int, xi=None) -> SolitonFamily | NotASoliton:
    """Fit ``2 phi^2 - 6 phi_xi + 9a + eps = 0`` and identify the soliton family.

    ``phi`` is either a jet-compatible function (evaluated at ``xi``) or a
    stack ``[phi, phi_xi, phi_xi^2]`` of sampled values.
    """
    if callable(phi):
        if xi is None:
            raise InvalidParams("probe points xi are required for a function")
        xi = np.atleast_1d(np.asarray(xi, dtype=float))
        st = J.derivatives(phi, xi, 2)
        st = np.broadcast_to(st, (3,) + xi.shape)
    else:
        st = np.asarray(phi, dtype=float)
        if st.shape[0] < 3:
            raise InvalidParams("need phi, phi_xi and phi_xi^2")
    p0, p1, p2 = st[0], st[1], st[2]
    scale = np.maximum(1.0, np.abs(p0) ** 2 + np.abs(p1))
    a = float(np.mean(-(2 * p0**2 - 6 * p1 + eps) / 9.0))
    res1 = np.max(np.abs(2 * p0**2 - 6 * p1 + 9 * a + eps) / scale)
    res2 = np.max(np.abs(p2 - 2 / 3 * p0 * p1) / np.maximum(1.0, np.abs(p0 * p1) + np.abs(p2)))
    if max(res1, res2) > SOLITON_TOL:
        return NotASoliton(float(max(res1, res2)), a)
    c = 9 * a + eps
    motion = _motion(a)
    if np.max(np.abs(p1)) <= SOLITON_TOL:
        return SolitonFamily("constant", float(np.sqrt(abs(c) / 2)), a, eps, float(np.mean(p0)), motion)
    mid = int(np.argmin(np.abs(xi - np.median(xi)))) if xi is not None else p0.size // 2
    v, x0 = float(p0.flat[mid]), float(xi.flat[mid]) if xi is not None else 0.0
    if abs(c) <= 1e-8 * max(1.0, v * v):
        return SolitonFamily("reciprocal", 0.0, a, eps, x0 + 3.0 / v, motion)
    A = float(np.sqrt(abs(c) / 2))
    if c > 0:
        if abs(v) <= A:
            return SolitonFamily("tanA", A, a, eps, x0 - 3.0 / A * np.arctan(v / A), motion)
        return SolitonFamily("cotA", A, a, eps, x0 - 3.0 / A * np.arctan(-A / v), motion)
    if abs(v) < A:
        return SolitonFamily("tanhA", A, a, eps, x0 + 3.0 / A * np.arctanh(v / A), motion)
    return SolitonFamily("cothA", A, a, eps, x0 + 3.0 / A * np.arctanh(A / v), motion)


def soliton_families(A: float = 1.5) -> list[tuple[SolitonFamily, tuple[float, float]]]:
    """Representative non-constant and constant soliton curvatures with pole-free windows."""
    w = 3 * np.pi / (2 * A)
    return [
        (SolitonFamily("constant", A, -(2 * A**2 + 1) / 9, 1, A), (-5.0, 5.0)),
        (SolitonFamily("constant", A, (2 * A**2 + 1) / 9, -1, 0.0), (-5.0, 5.0)),
        (SolitonFamily("reciprocal", 0.0, -1 / 9, 1), (0.2, 6.0)),
        (SolitonFamily("tanA", A, (2 * A**2 - 1) / 9, 1), (-0.95 * w, 0.95 * w)),
        (SolitonFamily("cotA", A, (2 * A**2 - 1) / 9, 1), (0.05 * w, 1.95 * w)),
        (SolitonFamily("tanhA", A, -(2 * A**2 + 1) / 9, 1), (-6.0, 6.0)),
        (SolitonFamily("cothA", A, -(2 * A**2 + 1) / 9, 1), (0.2, 6.0)),
    ]


# explicit solitons --------------------------------------------------------------------------

SOLITON_EXAMPLES = ("ellipse", "hyperbola", "xlogx", "power", "spiral")


def _soliton_coords(kind: str, params: dict, theta, t):
    x0, y0 = params.get("x0", 0.0), params.get("y0", 0.0)
    if kind == "ellipse":
        a0, b0 = params.get("a0", 2.0), params.get("b0", 1.0)
        s = J.exp(-t / 9.0)
        return [s * (a0 * J.cos(theta)) + x0, s * (b0 * J.sin(theta)) + y0]
    if kind == "hyperbola":
        a0, b0 = params.get("a0", 1.0), params.get("b0", 1.0)
        s = J.exp(t / 9.0)
        return [s * (a0 * J.cosh(theta)) + x0, s * (b0 * J.sinh(theta)) + y0]
    if kind == "xlogx":
        s = J.exp(t)
        return [s * (2 * theta) + x0, s * (2 * t * theta + theta * J.log(theta)) + y0]
    if kind == "power":
        al = params["alpha"]
        d = abs(2 * al**2 - 5 * al + 2)
        return [theta * J.exp(t / d) + x0, J.power(theta, al) * J.exp(al**2 * t / d) + y0]
    if kind == "spiral":
        al = 3 * np.tan(params["beta"])
        rot = theta + 2 * al * t / (al**2 + 9)
        s = J.exp(al * theta + (al**2 - 1) / (al**2 + 9) * t)
        return [s * J.sin(rot) + x0, -(s * J.cos(rot)) + y0]
    raise InvalidParams(f"unknown soliton example {kind!r}")


_EXAMPLE_DOMAINS = {
    "ellipse": ((0.0, TWO_PI), True),
    "hyperbola": ((-2.0, 2.0), False),
    "xlogx": ((0.2, 5.0), False),
    "power": ((0.25, 4.0), False),
    "spiral": ((-2.0, 2.0), False),
}


def _check_params(kind: str, params: dict) -> None:
    if kind == "power":
        al = params.get("alpha")
        if al is None or any(abs(al - v) < 1e-12 for v in (0.0, 0.5, 1.0, 2.0)):
            raise InvalidParams("power soliton needs alpha outside {0, 1/2, 1, 2}")
    if kind == "spiral":
        b = params.get("beta")
        if b is None or not 0 < b < np.pi / 2:
            raise InvalidParams("spiral soliton needs beta in (0, pi/2)")
    if kind in ("ellipse", "hyperbola") and (params.get("a0", 1.0) == 0 or params.get("b0", 1.0) == 0):
        raise InvalidParams("semi-axes must be non-zero")


def explicit_soliton(kind: str, params: dict | None = None, t: float = 0.0) -> AnalyticCurve:
    """Closed-form self-similar solution of the heat flow at time ``t``."""
    params = dict(params or {})
    if kind not in SOLITON_EXAMPLES:
        raise InvalidParams(f"unknown soliton example {kind!r}; choose from {', '.join(SOLITON_EXAMPLES)}")
    _check_params(kind, params)
    domain, closed = _EXAMPLE_DOMAINS[kind]
    domain = params.pop("domain", domain)
    return AnalyticCurve(lambda th: _soliton_coords(kind, params, th, t), 2, tuple(domain), closed,
                         TWO_PI if closed else None, f"soliton-{kind}")


def verify_soliton_flow(kind: str, params: dict | None = None, t: float = 0.0, probes=50) -> float:
    """Max relative mismatch between ``dC/dt`` and ``C_xi^2`` over probe parameters."""
    params = dict(params or {})
    curve = explicit_soliton(kind, params, t)
    params.pop("domain", None)
    lo, hi = curve.domain
    theta = np.linspace(lo, hi, probes + 2)[1:-1] if np.ndim(probes) == 0 else np.asarray(probes, dtype=float)
    tt = np.full(theta.shape, float(t))
    ct = np.stack([J.derivatives(lambda s, i=i: _soliton_coords(kind, params, theta, s)[i], tt, 1)[1]
                   for i in range(2)])
    vecs, _ = xi_derivatives(curve, theta, 2)
    scale = max(1.0, float(np.max(np.linalg.norm(curve(theta), axis=0))))
    return float(np.max(np.linalg.norm(ct - vecs[1], axis=0)) / scale)
