"""Layer composition for the hidden-layer spiking architectures."""

from __future__ import annotations

import copy
from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff as ad
from .autodiff import Var
from .data import init_params
from .feedforward import FeedforwardDelayLayer
from .neuron import NeuronConfig, leaky_integrate, neuron_step
from .readout import LINEAR_CE, ReadoutConfig, pool_logits, softmax_over_time
from .recurrent import AXONAL, SYNAPTIC, RecurrentDelayLayer

WEIGHTS = "weights"
POSITIONS = "positions"

REC_DELAY_MODES = ("none", "fixed_random", "learned")
FF_DELAY_MODES = ("none", "learned")


class SpecError(ValueError):
    """Architecture description violates a placement rule."""


@dataclass(frozen=True)
class ArchitectureSpec:
    n_inputs: int = 140
    hidden_sizes: tuple = (42, 42)
    recurrent_flags: tuple = (False, True)
    rec_delay_mode: str = "learned"
    ff_delay_mode: str = "none"
    ff_delay_layers: tuple = (1,)
    granularity: str = AXONAL
    use_p: bool = False
    readout: ReadoutConfig = field(default_factory=ReadoutConfig)
    neuron: NeuronConfig = field(default_factory=NeuronConfig)
    bias: bool = False
    batchnorm: bool = False
    weight_init: str = "uniform_fan_in"
    init_gain: float = 1.0
    rec_delay_init: str = "half_normal"
    rec_delay_scale: float = 12.0
    ff_delay_high: float = 50.0
    ff_dropout: float = 0.0
    rec_dropout: float = 0.0
    d_max: float | None = None

    def validate(self):
        n_layers = len(self.hidden_sizes)
        if n_layers == 0:
            raise SpecError("at least one hidden layer is required")
        if any(int(h) <= 0 for h in self.hidden_sizes):
            raise SpecError("hidden layer sizes must be positive")
        if len(self.recurrent_flags) != n_layers:
            raise SpecError("recurrent_flags needs one entry per hidden layer")
        if self.rec_delay_mode not in REC_DELAY_MODES:
            raise SpecError(f"rec_delay_mode must be one of {REC_DELAY_MODES}")
        if self.ff_delay_mode not in FF_DELAY_MODES:
            raise SpecError(f"ff_delay_mode must be one of {FF_DELAY_MODES}")
        if self.rec_delay_mode != "none" and not any(self.recurrent_flags):
            raise SpecError("recurrent delays require at least one recurrent layer")
        if self.ff_delay_mode == "learned":
            for i in self.ff_delay_layers:
                if i == 0:
                    raise SpecError("the input map never carries delays")
                if not 0 < i < n_layers:
                    raise SpecError(f"ff delay layer index {i} must connect two hidden layers")
        if not self.init_gain > 0:
            raise SpecError("init_gain must be positive")
        if self.granularity not in (AXONAL, SYNAPTIC):
            raise SpecError(f"unknown granularity {self.granularity!r}")
        if self.use_p and self.granularity == SYNAPTIC and self.rec_delay_mode != "learned":
            raise SpecError("spread modulation needs learned delays")
        return self


@dataclass
class HiddenLayer:
    w: Var
    b: Var | None
    tau: Var
    neuron: NeuronConfig
    ff_delay: FeedforwardDelayLayer | None = None
    rec: RecurrentDelayLayer | None = None
    bn: dict | None = None

    def drive(self, x, training: bool):
        if self.ff_delay is not None:
            out = self.ff_delay.forward(x)
            if self.b is not None:
                out = ad.add(out, self.b)
        else:
            out = ad.linear(x, self.w, self.b)
        if self.bn is not None:
            out = ad.batch_norm(out, self.bn["gamma"], self.bn["beta"], self.bn["mean"],
                                self.bn["var"], training)
        return out


class Network:
    """Stack of spiking hidden layers followed by a readout head."""

    def __init__(self, spec: ArchitectureSpec, layers: list, readout_w: Var,
                 readout_b: Var | None, readout_tau: Var):
        self.spec = spec
        self.layers = layers
        self.readout_w = readout_w
        self.readout_b = readout_b
        self.readout_tau = readout_tau
        self.sigma = 0.0

    # -- parameters -----------------------------------------------------------

    def named_tensors(self) -> dict:
        """Every stored tensor (trainable or not) keyed by a stable name."""
        out = {}
        for i, layer in enumerate(self.layers):
            pre = f"layer{i}"
            out[f"{pre}.w"] = layer.w
            if layer.b is not None:
                out[f"{pre}.b"] = layer.b
            out[f"{pre}.tau"] = layer.tau
            if layer.ff_delay is not None:
                out[f"{pre}.d_ff"] = layer.ff_delay.d_ff
            if layer.rec is not None:
                out[f"{pre}.w_rec"] = layer.rec.w_rec
                out[f"{pre}.d"] = layer.rec.delays
                if layer.rec.p is not None:
                    out[f"{pre}.p"] = layer.rec.p
            if layer.bn is not None:
                out[f"{pre}.bn_gamma"] = layer.bn["gamma"]
                out[f"{pre}.bn_beta"] = layer.bn["beta"]
        out["readout.w"] = self.readout_w
        if self.readout_b is not None:
            out["readout.b"] = self.readout_b
        out["readout.tau"] = self.readout_tau
        return out

    def parameters(self) -> dict:
        return {k: v for k, v in self.named_tensors().items() if v.requires_grad}

    def buffers(self) -> dict:
        out = {}
        for i, layer in enumerate(self.layers):
            if layer.bn is not None:
                out[f"layer{i}.bn_mean"] = layer.bn["mean"]
                out[f"layer{i}.bn_var"] = layer.bn["var"]
        return out

    def state_dict(self) -> dict:
        state = {k: v.value.copy() for k, v in self.named_tensors().items()}
        state.update({k: v.copy() for k, v in self.buffers().items()})
        return state

    def load_state_dict(self, state: dict):
        tensors = self.named_tensors()
        bufs = self.buffers()
        missing = (set(tensors) | set(bufs)) - set(state)
        if missing:
            raise KeyError(f"state is missing {sorted(missing)}")
        for k, var in tensors.items():
            if state[k].shape != var.value.shape:
                raise ValueError(f"shape mismatch for {k}: {state[k].shape} vs {var.value.shape}")
            var.value = np.array(state[k], dtype=np.float64)
        for k, arr in bufs.items():
            arr[...] = state[k]

    def recurrent_layers(self):
        return [layer.rec for layer in self.layers if layer.rec is not None]

    def clamp_delays(self):
        """Project delay parameters back onto ``[0, d_max]``."""
        hi = self.spec.d_max if self.spec.d_max is not None else np.inf
        for layer in self.layers:
            for d in ([layer.ff_delay.d_ff] if layer.ff_delay else []) + (
                    [layer.rec.delays] if layer.rec else []):
                if d.requires_grad:
                    np.clip(d.value, 0.0, hi, out=d.value)

    # -- forward ----------------------------------------------------------------

    def forward(self, x, training: bool = False, rng=None, soft: bool = False):
        """``x`` is ``(T, B, n_inputs)``. Returns ``(scores, hidden_spikes)``.

        Scores are summed softmax probabilities or pooled logits depending
        on the readout kind.
        """
        h = x
        spikes = []
        for layer in self.layers:
            drive = layer.drive(h, training)
            if layer.rec is not None:
                layer.rec.sigma = self.sigma
                s = layer.rec.forward(drive, training, rng, soft)
            else:
                s = lif_forward(drive, layer.tau, layer.neuron, soft)
            spikes.append(s)
            h = ad.dropout_apply(s, self.spec.ff_dropout, rng, training)
        out = ad.linear(h, self.readout_w, self.readout_b)
        ro = self.spec.readout
        if ro.kind == LINEAR_CE:
            return pool_logits(out, ro.pool), spikes
        v = leaky_integrate(out, self.readout_tau)
        return softmax_over_time(v), spikes

    def rounded(self) -> "Network":
        """Copy with every delay rounded to the nearest integer (half up)."""
        net = copy.copy(self)
        net.layers = []
        for layer in self.layers:
            new = copy.copy(layer)
            if layer.rec is not None:
                new.rec = layer.rec.round_delays_for_eval()
            if layer.ff_delay is not None:
                new.ff_delay = layer.ff_delay.round_delays_for_eval()
            net.layers.append(new)
        net.sigma = 0.0
        return net


def lif_forward(drive, tau, cfg: NeuronConfig, soft: bool = False):
    """Non-recurrent LIF population over a ``(T, B, n)`` drive."""
    dv = ad.value_of(drive)
    steps = ad.unstack(drive) if isinstance(drive, Var) else list(dv)
    v = np.zeros(dv.shape[1:])
    out = []
    for x_t in steps:
        s, v = neuron_step(v, x_t, tau, cfg, soft)
        out.append(s)
    return ad.stack(out)


# -- building -------------------------------------------------------------------

def _param(value, name, group=WEIGHTS, trainable=True) -> Var:
    return Var(value, requires_grad=trainable, name=name, group=group)


def build(spec: ArchitectureSpec, rng: np.random.Generator) -> Network:
    spec.validate()
    layers = []
    fan_in = spec.n_inputs
    bias_kind = "kaiming_bias" if spec.weight_init == "kaiming_uniform" else spec.weight_init
    for i, n in enumerate(spec.hidden_sizes):
        n = int(n)
        pre = f"layer{i}"
        w = _param(spec.init_gain * init_params(spec.weight_init, (n, fan_in), rng, fan_in=fan_in),
                   f"{pre}.w")
        b = _param(init_params(bias_kind, (n,), rng, fan_in=fan_in), f"{pre}.b") if spec.bias else None
        tau = _param(spec.neuron.tau_mem, f"{pre}.tau", trainable=spec.neuron.train_tau)
        ff = None
        if spec.ff_delay_mode == "learned" and i in spec.ff_delay_layers:
            d_ff = _param(rng.uniform(0.0, spec.ff_delay_high, size=(n, fan_in)), f"{pre}.d_ff",
                          POSITIONS)
            ff = FeedforwardDelayLayer(w, d_ff)
        rec = None
        if spec.recurrent_flags[i]:
            rec = _build_recurrent(spec, n, pre, tau, rng)
        bn = None
        if spec.batchnorm:
            bn = {"gamma": _param(np.ones(n), f"{pre}.bn_gamma"),
                  "beta": _param(np.zeros(n), f"{pre}.bn_beta"),
                  "mean": np.zeros(n), "var": np.ones(n)}
        layers.append(HiddenLayer(w, b, tau, spec.neuron, ff, rec, bn))
        fan_in = n
    n_cls = spec.readout.n_classes
    rw = _param(init_params(spec.weight_init, (n_cls, fan_in), rng, fan_in=fan_in), "readout.w")
    rb = _param(init_params(bias_kind, (n_cls,), rng, fan_in=fan_in), "readout.b") if spec.bias else None
    rtau = _param(spec.neuron.tau_mem, "readout.tau", trainable=spec.neuron.train_tau)
    return Network(spec, layers, rw, rb, rtau)


def _build_recurrent(spec, n, pre, tau, rng) -> RecurrentDelayLayer:
    w_rec = _param(spec.init_gain * init_params("uniform_fan_in", (n, n), rng, fan_in=n),
                   f"{pre}.w_rec")
    shape = (n,) if spec.granularity == AXONAL else (n, n)
    mode = spec.rec_delay_mode
    if mode == "none":
        d = np.zeros(shape)
    else:
        d = init_params(spec.rec_delay_init, shape, rng, scale=spec.rec_delay_scale)
        if spec.d_max is not None:
            d = np.minimum(d, spec.d_max)
    learned = mode == "learned"
    if mode == "fixed_random":
        d = np.floor(d + 0.5)
    delays = _param(d, f"{pre}.d", POSITIONS, trainable=learned)
    p = _param(np.zeros(n), f"{pre}.p", POSITIONS) if (spec.use_p and learned) else None
    return RecurrentDelayLayer(w_rec, delays, tau, spec.neuron, p, spec.granularity,
                               rec_dropout=spec.rec_dropout)


def fixed_random_delays(layer: RecurrentDelayLayer, rng: np.random.Generator,
                        kind: str = "half_normal", scale: float = 12.0) -> RecurrentDelayLayer:
    """Redraw integer delays from the learned-init distribution and freeze them."""
    d = np.floor(init_params(kind, layer.delays.shape, rng, scale=scale) + 0.5)
    out = copy.copy(layer)
    out.delays = Var(d, requires_grad=False, name=layer.delays.name, group=POSITIONS)
    out.p = None
    return out


def count_params(net: Network) -> int:
    return int(sum(v.value.size for v in net.parameters().values()))


# Ablation roster: (name, hidden sizes, recurrent in layer 2, rec delay mode, ff delay mode)
ABLATION_VARIANTS = {
    "vanilla_snn": dict(hidden_sizes=(52, 52), recurrent_flags=(False, False),
                        rec_delay_mode="none", ff_delay_mode="none"),
    "vanilla_rsnn": dict(hidden_sizes=(42, 42), recurrent_flags=(False, True),
                         rec_delay_mode="none", ff_delay_mode="none"),
    "learned_ff": dict(hidden_sizes=(42, 42), recurrent_flags=(False, False),
                       rec_delay_mode="none", ff_delay_mode="learned"),
    "fixed_rec": dict(hidden_sizes=(42, 42), recurrent_flags=(False, True),
                      rec_delay_mode="fixed_random", ff_delay_mode="none"),
    "learned_rec": dict(hidden_sizes=(42, 42), recurrent_flags=(False, True),
                        rec_delay_mode="learned", ff_delay_mode="none"),
    "learned_ff_rec": dict(hidden_sizes=(38, 38), recurrent_flags=(False, True),
                           rec_delay_mode="learned", ff_delay_mode="learned"),
}

ABLATION_PARAM_COUNTS = {
    "vanilla_rsnn": 10_000, "vanilla_snn": 11_000, "learned_ff_rec": 10_000,
    "learned_ff": 10_000, "fixed_rec": 10_000, "learned_rec": 10_000,
}


def ablation_spec(variant: str, base: ArchitectureSpec | None = None, **overrides) -> ArchitectureSpec:
    if variant not in ABLATION_VARIANTS:
        raise KeyError(f"unknown ablation variant {variant!r}")
    base = base or ArchitectureSpec()
    fields = dict(ABLATION_VARIANTS[variant], ff_delay_layers=(1,))
    fields.update(overrides)
    return replace(base, **fields)
