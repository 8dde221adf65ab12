"""Adam / AdamW updates and learning-rate schedules."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

BETAS = (0.9, 0.999)
EPS = 1e-8


@dataclass
class OptimState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    step: int = 0
    weight_decay: float = 0.0
    decoupled: bool = True


def adam_step(params: dict, grads: dict, state: OptimState, lr: float,
              decoupled: bool | None = None, weight_decay: float | None = None):
    """Apply one bias-corrected Adam update in place.

    ``params`` maps names to arrays (updated in place); ``grads`` maps the
    same names to gradients. With ``decoupled`` the weight decay shrinks
    parameters directly (AdamW); otherwise it is added to the gradient.
    """
    decoupled = state.decoupled if decoupled is None else decoupled
    wd = state.weight_decay if weight_decay is None else weight_decay
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient for parameter {name!r}")
    state.step += 1
    b1, b2 = BETAS
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for name, p in params.items():
        g = grads[name]
        if wd and not decoupled:
            g = g + wd * p
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        if wd and decoupled:
            p -= lr * wd * p
        p -= lr * (m / c1) / (np.sqrt(v / c2) + EPS)
    return params, state


@dataclass(frozen=True)
class LrSchedule:
    kind: str = "constant"
    max_lr: float = 1e-3
    total_steps: int = 1
    warmup_frac: float = 0.3
    div_factor: float = 25.0
    final_div_factor: float = 1e4

    def __post_init__(self):
        if self.kind not in ("one_cycle", "cosine_annealing", "constant"):
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if self.total_steps <= 0:
            raise ValueError("total_steps must be positive")
        if self.max_lr < 0:
            raise ValueError("max_lr must be nonnegative")


def _cos_interp(start: float, end: float, frac: float) -> float:
    return end + (start - end) * (1.0 + math.cos(math.pi * frac)) / 2.0


def lr_at(schedule: LrSchedule, step: int) -> float:
    """Learning rate at ``step`` (0-based, inclusive up to ``total_steps``)."""
    if not 0 <= step <= schedule.total_steps:
        raise ValueError(f"step {step} outside [0, {schedule.total_steps}]")
    total = schedule.total_steps
    if schedule.kind == "constant":
        return schedule.max_lr
    if schedule.kind == "cosine_annealing":
        return schedule.max_lr * (1.0 + math.cos(math.pi * step / total)) / 2.0
    peak = schedule.warmup_frac * total
    initial = schedule.max_lr / schedule.div_factor
    final = initial / schedule.final_div_factor
    if step <= peak:
        return _cos_interp(initial, schedule.max_lr, step / peak if peak > 0 else 1.0)
    return _cos_interp(schedule.max_lr, final, (step - peak) / (total - peak))
