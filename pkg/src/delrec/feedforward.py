"""Feedforward synapses with real-valued per-synapse delays.

A delay ``d`` splits each weight between the two integer shifts around it:
``(1 - frac(d))`` at ``floor(d)`` and ``frac(d)`` at ``floor(d) + 1``.
Unlike recurrent connections there is no intrinsic one-step offset.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Var, record, value_of
from .recurrent import round_half_up


def interp_weights(d, n_shifts: int) -> np.ndarray:
    """``max(0, 1 - |k - d|)`` for shifts ``k = 0..n_shifts-1``."""
    d = np.asarray(d, dtype=np.float64)
    k = np.arange(n_shifts, dtype=np.float64).reshape((n_shifts,) + (1,) * d.ndim)
    return np.maximum(0.0, 1.0 - np.abs(k - d))


def interp_weight_grads(d, n_shifts: int) -> np.ndarray:
    d = np.asarray(d, dtype=np.float64)
    k = np.arange(n_shifts, dtype=np.float64).reshape((n_shifts,) + (1,) * d.ndim)
    u = k - d
    inside = (u >= -1.0) & (u < 1.0)
    return np.where(inside, np.where(u >= 0, 1.0, -1.0), 0.0)


def delayed_linear(x, w, d, n_shifts: int | None = None):
    """Delayed projection of a ``(T, B, in)`` sequence to ``(T, B, out)``."""
    xv, wv, dv = value_of(x), value_of(w), value_of(d)
    steps = xv.shape[0]
    if n_shifts is None:
        n_shifts = int(np.floor(dv.max())) + 2 if dv.size else 1
    lin = interp_weights(dv, n_shifts)  # (K, out, in)
    eff = wv[None] * lin
    out = np.zeros(xv.shape[:-1] + (wv.shape[0],))
    for k in range(min(n_shifts, steps)):
        if np.any(lin[k]):
            out[k:] += xv[: steps - k] @ eff[k].T

    def bw(g):
        gx = np.zeros_like(xv)
        geff = np.zeros_like(eff)
        slope = interp_weight_grads(dv, n_shifts)
        for k in range(min(n_shifts, steps)):
            if not (np.any(lin[k]) or np.any(slope[k])):
                continue
            gk = g[k:].reshape(-1, g.shape[-1])
            xk = xv[: steps - k].reshape(-1, xv.shape[-1])
            geff[k] = gk.T @ xk
            if np.any(lin[k]):
                gx[: steps - k] += g[k:] @ eff[k]
        gw = (geff * lin).sum(axis=0)
        gd = (geff * wv[None] * slope).sum(axis=0)
        return gx, gw, gd

    return record(out, (x, w, d), bw, "delayed_linear")


@dataclass
class FeedforwardDelayLayer:
    w: Var
    d_ff: Var
    mode: str = "train"

    def __post_init__(self):
        if self.d_ff.shape != self.w.shape:
            raise ValueError("d_ff must match the weight shape")

    def forward(self, s_in):
        d = self.d_ff
        if self.mode == "eval_rounded":
            d = Var(round_half_up(d.value))
        return delayed_linear(s_in, self.w, d)

    def round_delays_for_eval(self) -> "FeedforwardDelayLayer":
        return FeedforwardDelayLayer(self.w, Var(round_half_up(self.d_ff.value)), "eval_rounded")


def ff_forward(layer: FeedforwardDelayLayer, s_in):
    return layer.forward(s_in)


def dense_kernel_oracle(w, d, s_in) -> np.ndarray:
    """Brute-force per-synapse temporal kernels convolved with the input."""
    w, d, s_in = (np.asarray(a, dtype=np.float64) for a in (w, d, s_in))
    steps, batch, n_in = s_in.shape
    n_out = w.shape[0]
    out = np.zeros((steps, batch, n_out))
    for i in range(n_out):
        for j in range(n_in):
            lo = int(np.floor(d[i, j]))
            frac = d[i, j] - lo
            for lag, share in ((lo, 1.0 - frac), (lo + 1, frac)):
                if lag < steps:
                    out[lag:, :, i] += w[i, j] * share * s_in[: steps - lag, :, j]
    return out


def init_ff_delays(shape, rng: np.random.Generator, high: float = 50.0) -> np.ndarray:
    return rng.uniform(0.0, high, size=shape)
