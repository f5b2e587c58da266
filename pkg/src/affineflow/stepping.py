"""Explicit second-order Runge-Kutta-Chebyshev stepping with step-doubling control.

The stage count grows with the stiffness ``rho * h`` (roughly as its square
root), so diffusion-dominated problems take steps far beyond the forward
Euler limit while staying explicit and second order.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np

from .errors import NonFiniteField, StepUnderflow

DAMPING = 2.0 / 13.0
MIN_STEP = 1e-12


@lru_cache(maxsize=512)
def rkc_coefficients(stages: int):
    """Per-stage ``(mu, nu, mu_tilde, gamma_tilde)`` and the first-stage weight."""
    s = stages
    w0 = 1.0 + DAMPING / s**2
    T = np.zeros(s + 1)
    dT = np.zeros(s + 1)
    ddT = np.zeros(s + 1)
    T[0], T[1], dT[1] = 1.0, w0, 1.0
    for j in range(2, s + 1):
        T[j] = 2 * w0 * T[j - 1] - T[j - 2]
        dT[j] = 2 * T[j - 1] + 2 * w0 * dT[j - 1] - dT[j - 2]
        ddT[j] = 4 * dT[j - 1] + 2 * w0 * ddT[j - 1] - ddT[j - 2]
    w1 = dT[s] / ddT[s]
    b = np.empty(s + 1)
    b[2:] = ddT[2:] / dT[2:] ** 2
    b[0] = b[1] = b[2]
    a = 1.0 - b * T
    rows = []
    for j in range(2, s + 1):
        mu = 2 * w0 * b[j] / b[j - 1]
        nu = -b[j] / b[j - 2]
        mut = 2 * w1 * b[j] / b[j - 1]
        rows.append((mu, nu, mut, -a[j - 1] * mut))
    return b[1] * w1, tuple(rows)


def stages_for(h: float, rho: float) -> int:
    """Smallest stage count whose real stability interval covers ``h * rho``."""
    return max(2, int(np.ceil(np.sqrt(1.0 + h * rho / 0.653))))


def rkc2_step(f: Callable[[float, np.ndarray], np.ndarray], t: float, y: np.ndarray, h: float, rho: float,
              f0: np.ndarray | None = None) -> np.ndarray:
    s = stages_for(h, rho)
    mu1, rows = rkc_coefficients(s)
    f0 = f(t, y) if f0 is None else f0
    prev2, prev = y, y + mu1 * h * f0
    for mu, nu, mut, gt in rows:
        # stage times are not needed: the fields here are autonomous
        nxt = (1 - mu - nu) * y + mu * prev + nu * prev2 + mut * h * f(t, prev) + gt * h * f0
        prev2, prev = prev, nxt
    return prev


@dataclass
class StepResult:
    t: float
    y: np.ndarray
    h_used: float
    h_next: float
    error: float


def error_norm(diff: np.ndarray, ref: np.ndarray, rtol: float, atol: float, blocks: int = 1) -> float:
    """Max-norm error scaled per block by ``atol + rtol * max|block|``."""
    worst = 0.0
    for d, r in zip(np.array_split(diff, blocks), np.array_split(ref, blocks)):
        worst = max(worst, float(np.max(np.abs(d))) / (atol + rtol * float(np.max(np.abs(r)))))
    return worst


def adaptive_step(f, t: float, y: np.ndarray, h: float, rho_fn: Callable[[np.ndarray], float], *,
                  rtol: float = 1e-7, atol: float = 1e-12, h_max: float = np.inf, blocks: int = 1) -> StepResult:
    """One accepted step with error estimated by comparing one full step and two half steps."""
    h = min(h, h_max)
    while True:
        if h < MIN_STEP:
            raise StepUnderflow(f"step size {h:.3e} fell below {MIN_STEP:.0e}")
        rho = rho_fn(y)
        f0 = f(t, y)
        full = rkc2_step(f, t, y, h, rho, f0)
        half = rkc2_step(f, t, y, 0.5 * h, rho, f0)
        half = rkc2_step(f, t + 0.5 * h, half, 0.5 * h, rho_fn(half))
        if not (np.all(np.isfinite(full)) and np.all(np.isfinite(half))):
            h *= 0.25
            continue
        # local error of the two-half-step result, second-order Richardson estimate
        err = error_norm((half - full) / 3.0, half, rtol, atol, blocks)
        factor = 0.9 * (1.0 / err) ** (1.0 / 3.0) if err > 0 else 2.0
        factor = min(2.0, max(0.2, factor))
        if err <= 1.0:
            return StepResult(t + h, half, h, min(h * factor, h_max), err)
        h *= factor


def fixed_steps(f, t: float, y: np.ndarray, t_end: float, h: float, rho_fn) -> np.ndarray:
    """Uniform RKC2 steps of size ``h`` (last one shortened) up to ``t_end``."""
    n = max(1, int(np.ceil((t_end - t) / h - 1e-12)))
    dt = (t_end - t) / n
    for _ in range(n):
        y = rkc2_step(f, t, y, dt, rho_fn(y))
        if not np.all(np.isfinite(y)):
            raise NonFiniteField("non-finite state during fixed-step integration")
        t += dt
    return y
