"""Finite-difference verification of the reverse pass and buffer-vs-dense checks."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tape, Var
from .config import RunConfig
from .kernel import kink_distance
from .network import Network, build
from .readout import LINEAR_CE, cross_entropy, spike_penalty
from .neuron import NeuronConfig
from .recurrent import AXONAL, SYNAPTIC, RecurrentDelayLayer, dense_oracle_forward

PARAM_CLASSES = ("w", "w_rec", "d", "d_ff", "p", "tau_mem")
TOLERANCE = 1e-4


@dataclass
class GradcheckReport:
    max_rel_err: dict = field(default_factory=dict)  # class -> worst relative error
    n_checked: dict = field(default_factory=dict)
    n_excluded: int = 0
    tolerance: float = TOLERANCE

    @property
    def passed(self) -> bool:
        return bool(self.max_rel_err) and all(e < self.tolerance for e in self.max_rel_err.values())

    def lines(self) -> list[str]:
        out = []
        for cls in sorted(self.max_rel_err, key=lambda c: PARAM_CLASSES.index(c)
                          if c in PARAM_CLASSES else len(PARAM_CLASSES)):
            err = self.max_rel_err[cls]
            status = "ok" if err < self.tolerance else "FAIL"
            out.append(f"{cls:8s} max_rel_err={err:.3e} checked={self.n_checked[cls]:4d} {status}")
        out.append(f"excluded (kink-adjacent): {self.n_excluded}")
        return out


def param_class(name: str) -> str:
    leaf = name.rsplit(".", 1)[1]
    return {"tau": "tau_mem"}.get(leaf, leaf)


def rel_err(a: float, b: float, floor: float = 1e-6) -> float:
    return abs(a - b) / max(abs(a), abs(b), floor)


def _loss(net: Network, x, y, lam: float):
    scores, spikes = net.forward(x, training=False, soft=True)
    ce = cross_entropy(scores, y, from_logits=net.spec.readout.kind == LINEAR_CE)
    return ce + spike_penalty(spikes) * lam if lam else ce


def _excluded(net: Network, name: str, idx: tuple, tol: float) -> bool:
    """Is entry ``idx`` of parameter ``name`` within ``tol`` of a kernel kink?"""
    layer = net.layers[int(name.split(".")[0][len("layer"):])] if name.startswith("layer") else None
    cls = param_class(name)
    if cls == "d_ff":
        frac = float(layer.ff_delay.d_ff.value[idx]) % 1.0
        return min(frac, 1.0 - frac) < tol
    if cls not in ("d", "p"):
        return False
    rec: RecurrentDelayLayer = layer.rec
    sigma = rec.effective_sigma
    d = rec.delays.value
    p = None
    if rec.p is not None and sigma > 0:
        p = rec.p.value if rec.granularity == AXONAL else rec.p.value[None, :]
    dist = kink_distance(d, sigma, p)
    if rec.granularity == SYNAPTIC and p is not None:
        dist = np.broadcast_to(dist, d.shape)
    if cls == "d":
        return float(dist[idx]) < tol
    # a modulation entry moves every kernel row that uses it
    col = dist[idx] if rec.granularity == AXONAL else dist[:, idx[0]]
    return float(np.min(col)) < tol


def check_network(net: Network, x, y, rng: np.random.Generator, report: GradcheckReport,
                  lam: float = 0.1, eps: float = 1e-4, per_class: int = 25,
                  kink_tol: float = 1e-3, corrupt: str | None = None) -> GradcheckReport:
    """Compare tape gradients to central differences on sampled entries."""
    params = net.parameters()
    with Tape() as tape:
        loss = _loss(net, x, y, lam)
    tape.backward(loss)
    analytic = {k: (v.grad.copy() if v.grad is not None else np.zeros_like(v.value))
                for k, v in params.items()}
    if corrupt is not None:
        for k in analytic:
            if param_class(k) == corrupt:
                analytic[k] = analytic[k] * 1.01 + 1e-3
    by_class: dict[str, list] = {}
    for name, var in params.items():
        for flat in range(var.value.size):
            by_class.setdefault(param_class(name), []).append((name, np.unravel_index(flat, var.shape)))
    for cls, entries in by_class.items():
        order = rng.permutation(len(entries))
        taken = 0
        for i in order:
            if taken >= per_class:
                break
            name, idx = entries[i]
            if _excluded(net, name, idx, kink_tol):
                report.n_excluded += 1
                continue
            var = params[name]
            orig = float(var.value[idx])
            var.value[idx] = orig + eps
            up = float(_loss(net, x, y, lam).value)
            var.value[idx] = orig - eps
            down = float(_loss(net, x, y, lam).value)
            var.value[idx] = orig
            numeric = (up - down) / (2.0 * eps)
            err = rel_err(float(analytic[name][idx]), numeric)
            report.max_rel_err[cls] = max(report.max_rel_err.get(cls, 0.0), err)
            report.n_checked[cls] = report.n_checked.get(cls, 0) + 1
            taken += 1
    return report


def random_net_spec(cfg: RunConfig, rng: np.random.Generator, index: int):
    """Small architecture exercising every parameter class."""
    n_in = int(rng.integers(2, 6))
    sizes = [int(rng.integers(2, 9)), int(rng.integers(1, 9))]
    granularity = AXONAL if index % 2 == 0 else SYNAPTIC
    base = cfg.architecture(n_in)
    neuron = dataclasses.replace(base.neuron, train_tau=True,
                                 tau_mem=float(rng.uniform(1.5, 4.0)))
    readout = dataclasses.replace(base.readout, n_classes=int(rng.integers(2, 5)))
    return dataclasses.replace(
        base, hidden_sizes=tuple(sizes), recurrent_flags=(False, True),
        rec_delay_mode="learned", ff_delay_mode="learned", ff_delay_layers=(1,),
        granularity=granularity, use_p=True, bias=True, batchnorm=False,
        neuron=neuron, readout=readout, init_gain=float(rng.uniform(1.0, 3.0)),
        rec_delay_scale=3.0, ff_delay_high=4.0, ff_dropout=0.0, rec_dropout=0.0, d_max=None)


def gradcheck(cfg: RunConfig, n_nets: int = 10, seed: int | None = None,
              corrupt: str | None = None, per_class: int = 25) -> GradcheckReport:
    rng = np.random.default_rng(cfg.run.seed if seed is None else seed)
    report = GradcheckReport()
    for i in range(n_nets):
        spec = random_net_spec(cfg, rng, i)
        net = build(spec, rng)
        if net.layers[1].rec.p is not None:
            net.layers[1].rec.p.value[...] = rng.normal(0.0, 1.0, net.layers[1].rec.p.shape)
        net.sigma = float(rng.uniform(0.3, 3.0))
        steps = int(rng.integers(6, 21))
        batch = int(rng.integers(1, 4))
        x = (rng.random((steps, batch, spec.n_inputs)) < 0.3).astype(np.float64)
        y = rng.integers(0, spec.readout.n_classes, size=batch)
        check_network(net, x, y, rng, report, corrupt=corrupt, per_class=per_class)
    return report


# -- buffered vs dense recurrent forward ------------------------------------------------

def random_recurrent_layer(rng: np.random.Generator, n: int, granularity: str,
                           sigma: float) -> RecurrentDelayLayer:
    shape = (n,) if granularity == AXONAL else (n, n)
    use_p = bool(rng.random() < 0.5)
    neuron = NeuronConfig(tau_mem=float(rng.uniform(1.5, 5.0)),
                          reset_kind="soft" if rng.random() < 0.5 else "hard")
    return RecurrentDelayLayer(
        Var(rng.normal(0.0, 1.5, (n, n)), requires_grad=True),
        Var(rng.uniform(0.0, 12.0, shape), requires_grad=True),
        Var(neuron.tau_mem), neuron,
        Var(rng.normal(0.0, 1.0, n), requires_grad=True) if use_p else None,
        granularity, sigma=sigma)


def oracle_check(n_trials: int = 100, synaptic: bool = True, seed: int = 0) -> float:
    """Max absolute deviation between buffered and dense forwards.

    Trials alternate axonal and (when enabled) synaptic layers; the first
    trial always uses a single neuron.
    """
    rng = np.random.default_rng(seed)
    worst = 0.0
    for trial in range(n_trials):
        n = 1 if trial == 0 else int(rng.integers(1, 17))
        steps = int(rng.integers(1, 65))
        batch = int(rng.integers(1, 4))
        gran = SYNAPTIC if (synaptic and trial % 2 == 1) else AXONAL
        layer = random_recurrent_layer(rng, n, gran, float(rng.uniform(0.0, 10.0)))
        x = rng.normal(0.6, 1.0, (steps, batch, n))
        spikes, xrec = layer.forward(x, training=False, return_xrec=True)
        ref_s, ref_x = dense_oracle_forward(layer, x)
        dev = max(float(np.max(np.abs(spikes.value - ref_s))), float(np.max(np.abs(xrec - ref_x))))
        worst = max(worst, dev)
    return worst
