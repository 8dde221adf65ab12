"""Recurrent spiking layer with learnable transmission delays.

Recurrent input is scheduled into a circular buffer: when neuron ``j``
fires at step ``t`` the weighted spike ``w_ij`` is added to the slots of
steps ``t + tau`` with weights ``h(tau)`` from the triangle kernel, so an
integer delay parameter ``d`` arrives exactly at ``t + 1 + d``.

Forward values come from the buffer itself. Each buffer read is recorded
on the tape as one node whose parents are the spikes it actually depends
on, which makes full-sequence BPTT possible without storing the buffer.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass

import numpy as np

from .autodiff import Var, active_tape, dropout_apply, record, stack, unstack, value_of
from .kernel import SpreadParams, effective_sigma, horizon, kernel_table, kernel_table_grads, spread_value
from .neuron import NeuronConfig, neuron_step

AXONAL = "axonal"
SYNAPTIC = "synaptic"
TRAIN_SPREAD = "train_spread"
EVAL_ROUNDED = "eval_rounded"


class ScheduleBuffer:
    """Circular buffer of future recurrent input, one slot per step offset."""

    def __init__(self, length: int, shape: tuple):
        if length < 2:
            raise ValueError(f"buffer length must be at least 2, got {length}")
        self.b = np.zeros((length,) + tuple(shape))
        self.pointer = 0

    @property
    def length(self) -> int:
        return self.b.shape[0]

    def read(self) -> np.ndarray:
        return self.b[self.pointer].copy()

    def clear(self):
        self.b[self.pointer] = 0.0

    def schedule(self, contrib: np.ndarray):
        """Add ``contrib[k]`` to the slot ``k + 1`` steps after the pointer."""
        n = contrib.shape[0]
        if n >= self.length:
            raise ValueError("contribution longer than the buffer horizon")
        idx = (self.pointer + np.arange(1, n + 1)) % self.length
        self.b[idx] += contrib

    def advance(self):
        self.pointer = (self.pointer + 1) % self.length


def round_half_up(x) -> np.ndarray:
    return np.floor(np.asarray(x, dtype=np.float64) + 0.5)


@dataclass
class RecurrentDelayLayer:
    """``n`` LIF neurons with delayed all-to-all recurrence.

    ``delays`` has shape ``(n,)`` (axonal) or ``(n, n)`` (synaptic, indexed
    ``[post, pre]``). ``p`` optionally modulates the spread width per
    presynaptic neuron. Frozen delays (``delays.requires_grad`` false) are
    always applied without spread.
    """

    w_rec: Var
    delays: Var
    tau: Var
    neuron: NeuronConfig
    p: Var | None = None
    granularity: str = AXONAL
    mode: str = TRAIN_SPREAD
    sigma: float = 0.0
    rec_dropout: float = 0.0

    def __post_init__(self):
        n = self.w_rec.shape[0]
        if self.w_rec.shape != (n, n):
            raise ValueError("w_rec must be square")
        want = (n,) if self.granularity == AXONAL else (n, n)
        if self.granularity not in (AXONAL, SYNAPTIC):
            raise ValueError(f"unknown granularity {self.granularity!r}")
        if self.delays.shape != want:
            raise ValueError(f"{self.granularity} delays need shape {want}, got {self.delays.shape}")

    @property
    def n(self) -> int:
        return self.w_rec.shape[0]

    @property
    def effective_sigma(self) -> float:
        if self.mode == EVAL_ROUNDED or not self.delays.requires_grad:
            return 0.0
        return float(self.sigma)

    def horizon(self):
        # modulation can widen the spread up to twice the global sigma
        sigma = self.effective_sigma
        if self.p is not None and sigma > 0:
            sigma = float(np.max(effective_sigma(sigma, self.p.value)))
        return horizon(sigma, self.delays.value)

    def kernel(self, length: int) -> Var:
        """Spread table of shape ``(length, *delays.shape)``."""
        sigma = self.effective_sigma
        d = self.delays.value
        p = None
        if self.p is not None and sigma > 0:
            p = self.p.value if self.granularity == AXONAL else self.p.value[None, :]
        if self.mode == EVAL_ROUNDED:
            d = round_half_up(d)
        table = kernel_table(length, d, sigma, p)

        def bw(g):
            gd, gp = kernel_table_grads(length, d, sigma, p)
            grad_d = (g * gd).sum(axis=0)
            if gp is None:
                return grad_d, None
            grad_p = (g * gp).sum(axis=0)
            if self.granularity == SYNAPTIC:
                grad_p = grad_p.sum(axis=0)
            return grad_d, grad_p

        parents = (self.delays, self.p if p is not None else None)
        if self.mode == EVAL_ROUNDED:
            return Var(table)
        return record(table, parents, bw, "spread_kernel")

    def weighted_kernel(self, k: Var) -> Var:
        """Synaptic mode: ``M[tau] = w_rec * K[tau]``."""
        wv, kv = self.w_rec.value, value_of(k)
        return record(wv[None] * kv, (self.w_rec, k),
                      lambda g: ((g * kv).sum(axis=0), g * wv[None]), "weighted_kernel")

    def new_buffer(self, batch: int) -> ScheduleBuffer:
        return ScheduleBuffer(self.horizon().length, (batch, self.n))

    def forward(self, x, training: bool = False, rng=None, soft: bool = False,
                return_xrec: bool = False):
        """Run the layer over a ``(T, B, n)`` drive; returns spikes ``(T, B, n)``."""
        xv = value_of(x)
        steps, batch = xv.shape[0], xv.shape[1]
        buf = self.new_buffer(batch)
        k = self.kernel(buf.length)
        m = self.weighted_kernel(k) if self.granularity == SYNAPTIC else None
        x_steps = unstack(x) if isinstance(x, Var) else [xv[t] for t in range(steps)]
        v = np.zeros((batch, self.n))
        spikes: list = []
        xrec_stream = []
        for t in range(steps):
            s, v, xrec = self.step(buf, x_steps[t], v, spikes, k, m, training, rng, soft)
            spikes.append(s)
            xrec_stream.append(xrec)
        out = stack(spikes)
        if return_xrec:
            return out, np.stack(xrec_stream)
        return out

    def step(self, buffer: ScheduleBuffer, x_t, v, history: list, k: Var, m: Var | None,
             training: bool = False, rng=None, soft: bool = False):
        """Advance one time step. Returns ``(spikes, v, xrec_value)``."""
        kv = value_of(k)
        if buffer.length != kv.shape[0]:
            raise ValueError(f"buffer length {buffer.length} does not match horizon {kv.shape[0]}")
        xrec_val = buffer.read()
        xrec = self._record_read(xrec_val, history, k, m)
        xrec = dropout_apply(xrec, self.rec_dropout, rng, training)
        s, v = neuron_step(v, xrec + x_t, self.tau, self.neuron, soft)
        buffer.clear()
        buffer.schedule(self._contributions(value_of(s), kv, m))
        buffer.advance()
        return s, v, xrec_val

    def _contributions(self, s: np.ndarray, kv: np.ndarray, m: Var | None) -> np.ndarray:
        # offsets 1..L-1; offset 0 would land on the step just consumed
        if self.granularity == AXONAL:
            return (s[None] * kv[1:, None, :]) @ self.w_rec.value.T
        return np.einsum("bj,kij->kbi", s, value_of(m)[1:])

    def _record_read(self, value, history, k, m):
        t = len(history)
        kv = value_of(k)
        lags = list(range(1, min(t, kv.shape[0] - 1) + 1))
        if not lags or active_tape() is None:
            return Var(value)
        past = [history[t - tau] for tau in lags]
        rows = kv[lags]
        live = [i for i, tau in enumerate(lags) if np.any(rows[i] != 0.0)]
        live_parents = tuple(past[i] for i in live)

        if self.granularity == AXONAL:
            wv = self.w_rec.value

            def bw(g):
                past_vals = np.stack([value_of(s) for s in past])
                gz = g @ wv
                z = np.einsum("kn,kbn->bn", rows, past_vals)
                gw = g.T @ z
                gk = np.zeros_like(kv)
                gk[lags] = np.einsum("bn,kbn->kn", gz, past_vals)
                return (gw, gk) + tuple(gz * rows[i] for i in live)

            return record(value, (self.w_rec, k) + live_parents, bw, "recurrent_read")

        mv = value_of(m)

        def bw_syn(g):
            past_vals = np.stack([value_of(s) for s in past])
            gm = np.zeros_like(mv)
            gm[lags] = np.einsum("bi,kbj->kij", g, past_vals)
            return (gm,) + tuple(g @ mv[lags[i]] for i in live)

        return record(value, (m,) + live_parents, bw_syn, "recurrent_read")

    def round_delays_for_eval(self) -> "RecurrentDelayLayer":
        if self.mode != TRAIN_SPREAD:
            raise ValueError("layer is already in eval_rounded mode")
        out = copy.copy(self)
        out.delays = Var(round_half_up(self.delays.value), requires_grad=False,
                         name=self.delays.name, group=self.delays.group)
        out.mode = EVAL_ROUNDED
        return out


def dense_oracle_forward(layer: RecurrentDelayLayer, x_seq) -> tuple[np.ndarray, np.ndarray]:
    """Reference forward with a full ``(T + horizon)`` scheduling matrix.

    Kernel weights come from scalar :func:`spread_value` calls and the
    neuron update is written out inline. Returns ``(spikes, xrec)``.
    """
    x_seq = np.asarray(x_seq, dtype=np.float64)
    steps, batch, n = x_seq.shape
    sigma = layer.effective_sigma
    d = value_of(layer.delays)
    if layer.mode == EVAL_ROUNDED:
        d = round_half_up(d)
    p = None if (layer.p is None or sigma == 0) else value_of(layer.p)
    # generous span: covers the widest possible spread without consulting horizon()
    upper = int(np.ceil(2.0 + float(np.max(d)) + 2.0 * sigma)) + 1
    w = value_of(layer.w_rec)
    weights = np.zeros((upper + 1, n, n))  # [tau, post, pre]
    for tau in range(1, upper + 1):
        for i in range(n):
            for j in range(n):
                dij = d[j] if layer.granularity == AXONAL else d[i, j]
                pj = None if p is None else float(p[j])
                weights[tau, i, j] = w[i, j] * spread_value(tau, SpreadParams(sigma, float(dij), pj))
    sched = np.zeros((steps + upper + 1, batch, n))
    cfg = layer.neuron
    tau_m = float(value_of(layer.tau))
    v = np.zeros((batch, n))
    spikes = np.zeros_like(x_seq)
    for t in range(steps):
        h = (1.0 - 1.0 / tau_m) * v + (x_seq[t] + sched[t]) / tau_m
        s = (h - cfg.v_threshold >= 0).astype(np.float64)
        if cfg.reset_kind == "hard":
            v = h * (1.0 - s) + cfg.v_reset * s
        else:
            v = h - cfg.v_threshold * s
        spikes[t] = s
        for tau in range(1, upper + 1):
            sched[t + tau] += s @ weights[tau].T
    return spikes, sched[:steps]
