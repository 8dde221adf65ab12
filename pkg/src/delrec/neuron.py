"""Discrete-time spiking neuron: charge, fire, reset.

Fire uses a Heaviside step with ``Theta(0) = 1`` in the forward pass and a
surrogate derivative in the backward pass. In *soft* mode the step is
replaced by ``sig(k * x)`` in the forward pass as well, so the whole
network is smooth and finite differences are meaningful.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .autodiff import Var, record, value_of
from .kernel import sig

SOFT_K = 10.0
ARCTAN_ALPHA = 2.0


@dataclass(frozen=True)
class NeuronConfig:
    tau_mem: float = 2.0
    v_threshold: float = 1.0
    reset_kind: str = "soft"
    v_reset: float = 0.0
    detach_reset: bool = False
    surrogate_kind: str = "triangle"
    train_tau: bool = False

    def __post_init__(self):
        if not self.tau_mem > 1.0:
            raise ValueError(f"tau_mem must exceed 1, got {self.tau_mem}")
        if not math.isfinite(self.v_threshold):
            raise ValueError("v_threshold must be finite")
        if self.reset_kind not in ("hard", "soft"):
            raise ValueError(f"unknown reset_kind {self.reset_kind!r}")
        if self.surrogate_kind not in ("triangle", "arctan"):
            raise ValueError(f"unknown surrogate_kind {self.surrogate_kind!r}")


@dataclass
class NeuronState:
    v: np.ndarray | Var
    h: np.ndarray | Var | None = None


def surrogate_grad(x, kind: str = "triangle"):
    x = np.asarray(x, dtype=np.float64)
    if kind == "triangle":
        return np.maximum(0.0, 1.0 - np.abs(x))
    if kind == "arctan":
        a = ARCTAN_ALPHA
        return a / (2.0 * (1.0 + (math.pi / 2.0 * a * x) ** 2))
    raise ValueError(f"unknown surrogate kind {kind!r}")


def charge(v, i, tau):
    """LIF charge ``H = (1 - 1/tau) V + (1/tau) I``.

    ``tau`` may be a tracked scalar ``Var``.
    """
    vv, iv, tv = value_of(v), value_of(i), float(value_of(tau))
    if not np.all(np.isfinite(iv)):
        raise FloatingPointError("non-finite input current")
    a = 1.0 - 1.0 / tv
    out = a * vv + iv / tv

    def bw(g):
        gt = np.sum(g * (vv - iv)) / (tv * tv)
        return g * a, g / tv, np.asarray(gt).reshape(np.shape(value_of(tau)))

    return record(out, (v, i, tau), bw, "charge")


def fire(h, cfg: NeuronConfig, soft: bool = False):
    x = value_of(h) - cfg.v_threshold
    if soft:
        s = np.asarray(sig(SOFT_K * x))
        return record(s, (h,), lambda g: (g * SOFT_K * s * (1.0 - s),), "fire")
    s = (x >= 0).astype(np.float64)
    kind = cfg.surrogate_kind
    return record(s, (h,), lambda g: (g * surrogate_grad(x, kind),), "fire")


def reset(h, s, cfg: NeuronConfig):
    hv, sv = value_of(h), value_of(s)
    detach = cfg.detach_reset
    if cfg.reset_kind == "hard":
        out = hv * (1.0 - sv) + cfg.v_reset * sv

        def bw(g):
            return g * (1.0 - sv), None if detach else g * (cfg.v_reset - hv)
    else:
        out = hv - cfg.v_threshold * sv

        def bw(g):
            return g, None if detach else -cfg.v_threshold * g

    return record(out, (h, s), bw, "reset")


def neuron_step(v, i, tau, cfg: NeuronConfig, soft: bool = False):
    """One charge/fire/reset update. Returns ``(spikes, new_v)``."""
    h = charge(v, i, tau)
    s = fire(h, cfg, soft)
    return s, reset(h, s, cfg)


def leaky_integrate(currents, tau):
    """Membrane trace of never-firing LIF neurons over axis 0.

    ``V[t] = (1 - 1/tau) V[t-1] + I[t] / tau`` with ``V[-1] = 0``.
    """
    iv, tv = value_of(currents), float(value_of(tau))
    a, b = 1.0 - 1.0 / tv, 1.0 / tv
    out = np.empty_like(iv)
    v = np.zeros(iv.shape[1:])
    for t in range(iv.shape[0]):
        v = a * v + b * iv[t]
        out[t] = v

    def bw(g):
        gi = np.empty_like(iv)
        lam = np.zeros(iv.shape[1:])
        gt = 0.0
        for t in range(iv.shape[0] - 1, -1, -1):
            lam = g[t] + a * lam
            gi[t] = b * lam
            prev = out[t - 1] if t > 0 else 0.0
            gt += np.sum(lam * (prev - iv[t]))
        return gi, np.asarray(gt / (tv * tv)).reshape(np.shape(value_of(tau)))

    return record(out, (currents, tau), bw, "leaky_integrate")
