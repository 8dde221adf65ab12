"""Output heads, classification losses and the spike-count penalty."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Var, value_of

LINEAR_CE = "linear_ce"
SOFTMAX_OVER_TIME = "softmax_over_time"


@dataclass(frozen=True)
class ReadoutConfig:
    kind: str = SOFTMAX_OVER_TIME
    n_classes: int = 20
    lambda_spike: float = 0.0
    pool: str = "mean"  # linear_ce only: mean | sum | last

    def __post_init__(self):
        if self.kind not in (LINEAR_CE, SOFTMAX_OVER_TIME):
            raise ValueError(f"unknown readout kind {self.kind!r}")
        if self.n_classes < 2:
            raise ValueError("n_classes must be at least 2")
        if self.lambda_spike < 0:
            raise ValueError("lambda_spike must be nonnegative")
        if self.pool not in ("mean", "sum", "last"):
            raise ValueError(f"unknown pooling {self.pool!r}")


def softmax_over_time(v_readout) -> Var:
    """Per-step softmax over classes, summed over time.

    ``v_readout`` is ``(T, ..., n_classes)``; scores sum to ``T``.
    """
    return ad.sum_(ad.softmax(v_readout, axis=-1), axis=0)


def pool_logits(logits, pool: str = "mean") -> Var:
    if pool == "mean":
        return ad.mean(logits, axis=0)
    if pool == "sum":
        return ad.sum_(logits, axis=0)
    return ad.getitem(logits, -1)


def _pick(a, labels):
    labels = np.asarray(labels, dtype=np.int64)
    return ad.getitem(a, (np.arange(labels.shape[0]), labels))


def cross_entropy(scores, labels, from_logits: bool = False) -> Var:
    """Mean of ``-log`` true-class score (or softmax probability for logits)."""
    sv = value_of(scores)
    if not np.all(np.isfinite(sv)):
        raise FloatingPointError("non-finite scores in cross_entropy")
    if from_logits:
        picked = _pick(ad.log_softmax(scores, axis=-1), labels)
        return ad.mul(ad.mean(picked), -1.0)
    return ad.mul(ad.mean(ad.log(_pick(scores, labels))), -1.0)


def spike_penalty(spikes) -> Var:
    """``sum(S^2) / (2 T B N)`` over one or several ``(T, B, N_l)`` tensors.

    ``N`` is the total neuron count across all tensors.
    """
    if isinstance(spikes, (Var, np.ndarray)):
        spikes = [spikes]
    spikes = list(spikes)
    if not spikes:
        return Var(0.0)
    steps, batch = value_of(spikes[0]).shape[:2]
    n_total = sum(value_of(s).shape[2] for s in spikes)
    total = ad.sum_(ad.square(spikes[0]))
    for s in spikes[1:]:
        total = ad.add(total, ad.sum_(ad.square(s)))
    return ad.mul(total, 1.0 / (2.0 * steps * batch * n_total))


def mean_firing_rate(spikes) -> float:
    """Spikes per neuron per time step (equals twice the penalty)."""
    if isinstance(spikes, (Var, np.ndarray)):
        spikes = [spikes]
    vals = [value_of(s) for s in spikes]
    n = sum(v.shape[2] for v in vals)
    steps, batch = vals[0].shape[:2]
    return float(sum(v.sum() for v in vals) / (steps * batch * n))


def predict(scores) -> np.ndarray:
    return np.argmax(value_of(scores), axis=-1)
