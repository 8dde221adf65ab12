"""Triangle spread kernel for real-valued recurrent delays.

A spike emitted at step ``t`` by a neuron with delay parameter ``d`` is
scheduled around step ``t + 1 + d``. During training the scheduled weight is
spread over neighbouring integer offsets with a triangle of half-width
``1 + sigma``; at ``sigma = 0`` the spread reduces to two-point linear
interpolation between the closest integer offsets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


def sig(x):
    """Logistic function, stable for large ``|x|``."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class SpreadParams:
    sigma: float
    d: float
    p: float | None = None

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError(f"sigma must be nonnegative, got {self.sigma}")

    @property
    def sigma_eff(self) -> float:
        if self.p is None:
            return float(self.sigma)
        return 2.0 * float(sig(self.p)) * float(self.sigma)


@dataclass(frozen=True)
class SigmaSchedule:
    sigma_init: float = 10.0
    decay: float = 0.95
    n_epochs: int = 100

    def __post_init__(self):
        if self.sigma_init < 0:
            raise ValueError("sigma_init must be nonnegative")
        if not 0.0 < self.decay < 1.0:
            raise ValueError("decay must lie in (0, 1)")
        if self.n_epochs <= 0:
            raise ValueError("n_epochs must be positive")


@dataclass(frozen=True)
class Horizon:
    """Offsets ``0..upper`` that may receive scheduled input."""

    upper: int

    @property
    def length(self) -> int:
        return self.upper + 1


def spread_value(tau: float, params: SpreadParams) -> float:
    """Scalar triangle weight at integer offset ``tau``."""
    a = 1.0 + params.sigma_eff
    return max(0.0, (a - abs(tau - (1.0 + params.d))) / (a * a))


def support_bounds(params: SpreadParams) -> tuple[float, float]:
    s = params.sigma_eff
    return (params.d - s, 2.0 + params.d + s)


def horizon(sigma: float, delays) -> Horizon:
    delays = np.asarray(delays, dtype=np.float64)
    if delays.size == 0:
        raise ValueError("horizon needs at least one delay")
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    upper = math.ceil(1.0 + float(delays.max()) + (1.0 + sigma))
    return Horizon(max(upper, 1))


def sigma_at_epoch(schedule: SigmaSchedule, epoch: int) -> float:
    if epoch < 0:
        raise ValueError(f"epoch must be nonnegative, got {epoch}")
    if epoch > schedule.n_epochs:
        raise ValueError(f"epoch {epoch} beyond schedule length {schedule.n_epochs}")
    return schedule.sigma_init * schedule.decay ** (100.0 * epoch / schedule.n_epochs)


def effective_sigma(sigma: float, p=None):
    """Per-neuron width ``2 * sig(p) * sigma`` (or ``sigma`` without ``p``)."""
    if p is None:
        return np.float64(sigma)
    return 2.0 * sig(p) * sigma


def kernel_table(length: int, d, sigma: float, p=None) -> np.ndarray:
    """Spread weights for every offset ``0..length-1``.

    Returns an array of shape ``(length, *d.shape)``.
    """
    d = np.asarray(d, dtype=np.float64)
    a = 1.0 + effective_sigma(sigma, p)
    tau = np.arange(length, dtype=np.float64).reshape((length,) + (1,) * d.ndim)
    u = tau - (1.0 + d)
    return np.maximum(0.0, (a - np.abs(u)) / (a * a))


def kernel_table_grads(length: int, d, sigma: float, p=None):
    """Partial derivatives of :func:`kernel_table` w.r.t. ``d`` and ``p``.

    Kinks take the left-slope value (limit from below in ``d``). The
    ``p`` partial is ``None`` when ``p`` is absent.
    """
    d = np.asarray(d, dtype=np.float64)
    a = 1.0 + effective_sigma(sigma, p)
    tau = np.arange(length, dtype=np.float64).reshape((length,) + (1,) * d.ndim)
    u = tau - (1.0 + d)
    # left limit in d means u -> u + 0
    inside = (u >= -a) & (u < a)
    slope = np.where(u >= 0, 1.0, -1.0)
    dd = np.where(inside, slope / (a * a), 0.0)
    if p is None:
        return dd, None
    inside_a = np.abs(u) < a
    dh_da = np.where(inside_a, (2.0 * np.abs(u) - a) / a**3, 0.0)
    s = sig(p)
    da_dp = 2.0 * sigma * s * (1.0 - s)
    return dd, dh_da * da_dp


def kink_distance(d, sigma: float, p=None) -> np.ndarray:
    """Distance of each delay from the nearest kink of its kernel row."""
    d = np.asarray(d, dtype=np.float64)
    a = 1.0 + effective_sigma(sigma, p)
    c = 1.0 + d
    dist = np.abs(c - np.round(c))
    for shift in (a, -a):
        x = c + shift
        dist = np.minimum(dist, np.abs(x - np.round(x)))
    return dist
