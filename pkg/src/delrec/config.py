"""Typed run configuration loaded from TOML.

Every section maps onto a dataclass; unknown sections or keys and values
of the wrong type are rejected so that misspelled hyperparameters fail
loudly instead of silently falling back to defaults.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import typing
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .network import ArchitectureSpec
from .neuron import NeuronConfig
from .readout import ReadoutConfig


class ConfigError(ValueError):
    pass


@dataclass
class RunSection:
    seed: int
    epochs: int = 30
    batch_size: int = 32
    out: str = "runs/default"


@dataclass
class ModelSection:
    hidden_sizes: list = field(default_factory=lambda: [42, 42])
    recurrent_flags: list = field(default_factory=lambda: [False, True])
    rec_delay_mode: str = "learned"
    ff_delay_mode: str = "none"
    ff_delay_layers: list = field(default_factory=lambda: [1])
    granularity: str = "axonal"
    use_p: bool = False
    bias: bool = False
    batchnorm: bool = False
    weight_init: str = "uniform_fan_in"
    init_gain: float = 1.0
    rec_delay_init: str = "half_normal"
    rec_delay_scale: float = 12.0
    ff_delay_high: float = 50.0
    d_max: typing.Optional[float] = None


@dataclass
class ReadoutSection:
    kind: str = "softmax_over_time"
    n_classes: int = 20
    lambda_spike: float = 0.0
    pool: str = "mean"


@dataclass
class NeuronSection:
    tau_mem: float = 2.0
    v_threshold: float = 1.0
    reset_kind: str = "soft"
    v_reset: float = 0.0
    detach_reset: bool = False
    surrogate_kind: str = "triangle"
    train_tau: bool = False


@dataclass
class OptimSection:
    optimizer: str = "adamw"
    lr_weights: float = 5e-3
    lr_positions: float = 5e-2
    weight_decay: float = 1e-5
    sched_weights: str = "one_cycle"
    sched_positions: str = "cosine_annealing"
    warmup_frac: float = 0.3


@dataclass
class DelaysSection:
    sigma_init: float = 10.0
    decay: float = 0.95


@dataclass
class DropoutSection:
    ff: float = 0.0
    rec: float = 0.0


@dataclass
class DataSection:
    kind: str = "synthetic"
    lags: list = field(default_factory=lambda: [2, 6, 11, 17])
    n_steps: int = 60
    background_rate: float = 0.02
    n_probes: int = 3
    n_samples: int = 1000
    data_seed: int = 0
    train_path: str = ""
    test_path: str = ""
    val_fraction: float = 0.2
    augment: bool = False
    max_shift: int = 100
    blend: bool = False


SECTIONS = {
    "run": RunSection, "model": ModelSection, "readout": ReadoutSection,
    "neuron": NeuronSection, "optim": OptimSection, "delays": DelaysSection,
    "dropout": DropoutSection, "data": DataSection,
}


@dataclass
class RunConfig:
    run: RunSection
    model: ModelSection = field(default_factory=ModelSection)
    readout: ReadoutSection = field(default_factory=ReadoutSection)
    neuron: NeuronSection = field(default_factory=NeuronSection)
    optim: OptimSection = field(default_factory=OptimSection)
    delays: DelaysSection = field(default_factory=DelaysSection)
    dropout: DropoutSection = field(default_factory=DropoutSection)
    data: DataSection = field(default_factory=DataSection)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def architecture(self, n_inputs: int) -> ArchitectureSpec:
        m = self.model
        return ArchitectureSpec(
            n_inputs=n_inputs,
            hidden_sizes=tuple(m.hidden_sizes),
            recurrent_flags=tuple(m.recurrent_flags),
            rec_delay_mode=m.rec_delay_mode,
            ff_delay_mode=m.ff_delay_mode,
            ff_delay_layers=tuple(m.ff_delay_layers),
            granularity=m.granularity,
            use_p=m.use_p,
            readout=ReadoutConfig(**dataclasses.asdict(self.readout)),
            neuron=NeuronConfig(**dataclasses.asdict(self.neuron)),
            bias=m.bias,
            batchnorm=m.batchnorm,
            weight_init=m.weight_init,
            init_gain=m.init_gain,
            rec_delay_init=m.rec_delay_init,
            rec_delay_scale=m.rec_delay_scale,
            ff_delay_high=m.ff_delay_high,
            ff_dropout=self.dropout.ff,
            rec_dropout=self.dropout.rec,
            d_max=m.d_max,
        )

    def replace(self, **sections) -> "RunConfig":
        """Copy with per-section field overrides, e.g. ``replace(run={"seed": 3})``."""
        raw = self.to_dict()
        for name, updates in sections.items():
            raw.setdefault(name, {}).update(updates)
        return from_dict(raw)


def _check_type(section: str, key: str, value, hint):
    where = f"[{section}] {key}"
    origin = typing.get_origin(hint)
    if origin is typing.Union:
        args = [a for a in typing.get_args(hint) if a is not type(None)]
        if value is None:
            return None
        return _check_type(section, key, value, args[0])
    if hint is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{where} must be a boolean, got {value!r}")
        return value
    if hint is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where} must be an integer, got {value!r}")
        return value
    if hint is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where} must be a number, got {value!r}")
        return float(value)
    if hint is str:
        if not isinstance(value, str):
            raise ConfigError(f"{where} must be a string, got {value!r}")
        return value
    if hint is list:
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{where} must be an array, got {value!r}")
        return list(value)
    return value


def parse_section(name: str, cls, raw: dict):
    hints = typing.get_type_hints(cls)
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown key(s) in [{name}]: {', '.join(sorted(unknown))}")
    values = {k: _check_type(name, k, v, hints[k]) for k, v in raw.items()}
    try:
        return cls(**values)
    except TypeError as exc:
        raise ConfigError(f"[{name}]: {exc}") from None


def from_dict(raw: dict) -> RunConfig:
    unknown = set(raw) - set(SECTIONS)
    if unknown:
        raise ConfigError(f"unknown section(s): {', '.join(sorted(unknown))}")
    if "run" not in raw or "seed" not in raw["run"]:
        raise ConfigError("[run] seed is mandatory")
    return RunConfig(**{name: parse_section(name, cls, raw.get(name, {}))
                        for name, cls in SECTIONS.items()})


def loads(text: str) -> RunConfig:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML: {exc}") from None
    return from_dict(raw)


def load(path) -> RunConfig:
    return loads(Path(path).read_text())


def dumps(cfg: RunConfig) -> str:
    """Serialise to TOML (flat sections, ``None`` values omitted)."""
    lines = []
    for name, values in cfg.to_dict().items():
        lines.append(f"[{name}]")
        for key, value in values.items():
            if value is None:
                continue
            lines.append(f"{key} = {_toml_value(value)}")
        lines.append("")
    return "\n".join(lines)


def _toml_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, float)):
        return repr(value)
    if isinstance(value, str):
        return json.dumps(value)
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_toml_value(v) for v in value) + "]"
    raise TypeError(f"cannot serialise {value!r}")
