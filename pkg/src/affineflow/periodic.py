"""Periodic field helpers shared by the variation, flow and isoperimetric code.

Fields live on a uniform material grid ``p_j = j * period / N``; arc-parameter
derivatives are taken spectrally in ``p`` and divided by the metric density.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .curves import SampledClosedCurve, spectral_jets, wavenumbers
from .invariants import plane_frame


@lru_cache(maxsize=64)
def _derivative_symbol(N: int, period: float) -> np.ndarray:
    ik = 1j * wavenumbers(N, period)
    ik[-1] = 0.0  # Nyquist mode
    ik.flags.writeable = False
    return ik


def p_derivative(values: np.ndarray, period: float, order: int = 1) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    N = values.shape[-1]
    return np.fft.irfft(np.fft.rfft(values) * _derivative_symbol(N, float(period)) ** order, n=N)


def arc_stack(values: np.ndarray, density: np.ndarray, period: float, count: int) -> np.ndarray:
    """``[f, f_s, ..., f_{s^count}]`` for ``ds = density dp`` on a periodic grid."""
    values = np.asarray(values, dtype=float)
    N = values.shape[-1]
    ik = _derivative_symbol(N, float(period))
    inv = 1.0 / density
    out = np.empty((count + 1,) + values.shape)
    out[0] = values
    for j in range(count):
        out[j + 1] = np.fft.irfft(np.fft.rfft(out[j]) * ik, n=N) * inv
    return out


def closed_integral(values: np.ndarray, period: float) -> float:
    """Trapezoid (spectrally accurate) integral over one period."""
    values = np.asarray(values, dtype=float)
    return float(np.sum(values, axis=-1) * (period / values.shape[-1]))


def cumulative(values: np.ndarray, period: float) -> np.ndarray:
    """Spectral antiderivative vanishing at the first node, linear drift included."""
    values = np.asarray(values, dtype=float)
    N = values.shape[-1]
    vhat = np.fft.rfft(values)
    k = wavenumbers(N, period)
    mean = vhat[0].real / N
    vhat[0] = 0.0
    vhat[-1] = 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        ihat = np.where(k > 0, vhat / (1j * np.where(k > 0, k, 1.0)), 0.0)
    osc = np.fft.irfft(ihat, n=N)
    p = np.arange(N) * (period / N)
    return mean * p + osc - osc[0]


@dataclass(frozen=True)
class ClosedFields:
    """Fully affine data on the nodes of a sampled closed plane curve."""

    samples: SampledClosedCurve
    g: np.ndarray
    eps: np.ndarray
    phi: np.ndarray
    xi: np.ndarray  # cumulative fully affine arc length from the first node

    @property
    def period(self) -> float:
        return self.samples.period

    @property
    def length(self) -> float:
        return closed_integral(self.g, self.period)

    def phi_stack(self, count: int) -> np.ndarray:
        return arc_stack(self.phi, self.g, self.period, count)


def closed_fields(samples: SampledClosedCurve) -> ClosedFields:
    fr = plane_frame(spectral_jets(samples, 7))
    g = fr.g.value
    return ClosedFields(samples, g, fr.eps, fr.phi.value, cumulative(g, samples.period))
