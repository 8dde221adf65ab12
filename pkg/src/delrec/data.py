"""Input pipelines: event binning, augmentation, synthetic tasks, file formats
and parameter initialisers."""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

N_RAW_CHANNELS = 700
MAGIC = b"DREC"
FORMAT_VERSION = 1
KIND_DATASET = 1
KIND_CHECKPOINT = 2


@dataclass(frozen=True)
class EventRecord:
    time: float
    channel: int


@dataclass
class BinnedSample:
    grid: np.ndarray  # (T, C)
    label: int


@dataclass
class Dataset:
    x: np.ndarray  # (n, T, C)
    y: np.ndarray  # (n,)

    def __len__(self):
        return len(self.y)

    @property
    def n_steps(self) -> int:
        return self.x.shape[1]

    @property
    def n_channels(self) -> int:
        return self.x.shape[2]

    def subset(self, idx) -> "Dataset":
        return Dataset(self.x[idx], self.y[idx])


@dataclass
class Splits:
    train: Dataset
    val: Dataset
    test: Dataset


# -- binning -------------------------------------------------------------------

def bin_events(events, delta_t: float, spatial_factor: int = 5, n_steps: int | None = None,
               label: int = 0, binary: bool = False,
               n_raw_channels: int = N_RAW_CHANNELS) -> BinnedSample:
    """Accumulate events into a ``(T, n_raw_channels // spatial_factor)`` grid."""
    times = np.array([e.time for e in events], dtype=np.float64)
    chans = np.array([e.channel for e in events], dtype=np.int64)
    return bin_event_arrays(times, chans, delta_t, spatial_factor, n_steps, label, binary,
                            n_raw_channels)


def bin_event_arrays(times, chans, delta_t: float, spatial_factor: int = 5,
                     n_steps: int | None = None, label: int = 0, binary: bool = False,
                     n_raw_channels: int = N_RAW_CHANNELS) -> BinnedSample:
    if delta_t <= 0:
        raise ValueError("delta_t must be positive")
    times = np.asarray(times, dtype=np.float64)
    chans = np.asarray(chans, dtype=np.int64)
    n_channels = math.ceil(n_raw_channels / spatial_factor)
    if chans.size and (chans.max() >= n_raw_channels or chans.min() < 0):
        raise ValueError(f"channel out of range [0, {n_raw_channels})")
    if times.size and times.min() < 0:
        raise ValueError("event times must be nonnegative")
    t_idx = np.floor(times / delta_t).astype(np.int64)
    if n_steps is None:
        n_steps = int(t_idx.max()) + 1 if t_idx.size else 1
    keep = t_idx < n_steps
    grid = np.zeros((n_steps, n_channels), dtype=np.float64)
    np.add.at(grid, (t_idx[keep], chans[keep] // spatial_factor), 1.0)
    if binary:
        grid = np.minimum(grid, 1.0)
    return BinnedSample(grid, int(label))


# -- augmentation ---------------------------------------------------------------

def shift_grid(grid: np.ndarray, shift: int) -> np.ndarray:
    out = np.zeros_like(grid)
    n = grid.shape[0]
    if abs(shift) >= n:
        return out
    if shift >= 0:
        out[shift:] = grid[: n - shift]
    else:
        out[: n + shift] = grid[-shift:]
    return out


def augment_shift(sample: BinnedSample, rng: np.random.Generator, max_shift: int = 100,
                  shift: int | None = None) -> BinnedSample:
    if shift is None:
        shift = int(rng.integers(-max_shift, max_shift + 1))
    return BinnedSample(shift_grid(sample.grid, shift), sample.label)


def center_of_mass(grid: np.ndarray) -> float:
    counts = grid.sum(axis=1)
    total = counts.sum()
    if total == 0:
        return 0.0
    return float((np.arange(grid.shape[0]) * counts).sum() / total)


def augment_blend(a: BinnedSample, b: BinnedSample, rng: np.random.Generator) -> BinnedSample:
    if a.label != b.label:
        raise ValueError("blend requires samples of the same class")
    if not b.grid.any() or not a.grid.any():
        shift = 0
    else:
        shift = int(round(center_of_mass(a.grid) - center_of_mass(b.grid)))
    b_aligned = shift_grid(b.grid, shift)
    take_a = rng.random(a.grid.shape[0]) < 0.5
    return BinnedSample(np.where(take_a[:, None], a.grid, b_aligned), a.label)


# -- synthetic delayed-coincidence task -------------------------------------------

@dataclass(frozen=True)
class SyntheticTaskSpec:
    n_classes: int = 4
    lags: tuple = (2, 6, 11, 17)
    n_steps: int = 60
    background_rate: float = 0.02
    n_probes: int = 3
    n_samples: int = 1000
    seed: int = 0

    def __post_init__(self):
        if len(self.lags) != self.n_classes:
            raise ValueError("need one lag per class")
        if len(set(self.lags)) != len(self.lags):
            raise ValueError("lags must be distinct")
        if max(self.lags) >= self.n_steps:
            raise ValueError("every lag must be shorter than the sequence")
        if not 0.0 <= self.background_rate < 1.0:
            raise ValueError("background_rate must lie in [0, 1)")


def gen_delayed_coincidence(spec: SyntheticTaskSpec, rng: np.random.Generator | None = None,
                            split: tuple = (0.70, 0.15, 0.15)) -> Splits:
    """Two-channel task where the class is the probe-to-echo lag.

    Channel 0 carries probe spikes at random times, channel 1 repeats each
    probe ``lags[k]`` steps later; both carry Bernoulli background noise.
    """
    rng = np.random.default_rng(spec.seed) if rng is None else rng
    n, steps = spec.n_samples, spec.n_steps
    y = np.arange(n) % spec.n_classes
    rng.shuffle(y)
    x = (rng.random((n, steps, 2)) < spec.background_rate).astype(np.float64)
    for i in range(n):
        lag = spec.lags[y[i]]
        times = rng.choice(steps - lag, size=min(spec.n_probes, steps - lag), replace=False)
        x[i, times, 0] = 1.0
        x[i, times + lag, 1] = 1.0
    return split_dataset(Dataset(x, y), split)


def split_dataset(ds: Dataset, split=(0.70, 0.15, 0.15)) -> Splits:
    n = len(ds)
    n_train = int(round(split[0] * n))
    n_val = int(round(split[1] * n))
    idx = np.arange(n)
    return Splits(ds.subset(idx[:n_train]), ds.subset(idx[n_train:n_train + n_val]),
                  ds.subset(idx[n_train + n_val:]))


def xcorr_lag_classifier(x: np.ndarray, lags) -> np.ndarray:
    """Predict the lag maximising channel-0/channel-1 coincidences."""
    scores = np.stack([(x[:, : x.shape[1] - lag, 0] * x[:, lag:, 1]).sum(axis=1) for lag in lags],
                      axis=1)
    return np.argmax(scores, axis=1)


# -- permuted sequential images ----------------------------------------------------

def permuted_sequence(images: np.ndarray, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Flatten ``(n, H, W)`` images to ``(n, H*W, 1)`` sequences in a fixed pixel order."""
    flat = images.reshape(images.shape[0], -1)
    perm = np.random.default_rng(seed).permutation(flat.shape[1])
    return flat[:, perm][..., None], perm


def unpermute_sequence(seq: np.ndarray, perm: np.ndarray, shape: tuple) -> np.ndarray:
    flat = np.empty_like(seq[..., 0])
    flat[:, perm] = seq[..., 0]
    return flat.reshape((seq.shape[0],) + tuple(shape))


# -- initialisers ------------------------------------------------------------------

INIT_KINDS = ("uniform_fan_in", "kaiming_uniform", "kaiming_bias", "half_normal",
              "uniform_10_30", "uniform_0_50", "zeros")


def init_params(kind: str, shape, rng: np.random.Generator, fan_in: int | None = None,
                scale: float = 12.0) -> np.ndarray:
    shape = tuple(np.atleast_1d(shape)) if not isinstance(shape, tuple) else shape
    if fan_in is None:
        fan_in = shape[-1]
    if kind == "uniform_fan_in":
        bound = math.sqrt(1.0 / fan_in)
        return rng.uniform(-bound, bound, size=shape)
    if kind == "kaiming_uniform":
        a = math.sqrt(5.0)
        bound = math.sqrt(6.0 / ((1.0 + a * a) * fan_in))
        return rng.uniform(-bound, bound, size=shape)
    if kind == "kaiming_bias":
        bound = 1.0 / math.sqrt(fan_in)
        return rng.uniform(-bound, bound, size=shape)
    if kind == "half_normal":
        return np.abs(rng.normal(0.0, scale, size=shape))
    if kind == "uniform_10_30":
        return rng.uniform(10.0, 30.0, size=shape)
    if kind == "uniform_0_50":
        return rng.uniform(0.0, 50.0, size=shape)
    if kind == "zeros":
        return np.zeros(shape)
    raise ValueError(f"unknown init kind {kind!r}; expected one of {INIT_KINDS}")


# -- text event format ---------------------------------------------------------------

def write_event_text(path, samples, n_channels: int | None = None):
    """One block per sample: ``label T`` header, then ``t_bin channel`` lines.

    Counts above one are written as repeated lines.
    """
    lines = []
    if n_channels is not None:
        lines.append(f"# channels={n_channels}")
    for s in samples:
        lines.append(f"{s.label} {s.grid.shape[0]}")
        ts, cs = np.nonzero(s.grid)
        for t, c in zip(ts, cs):
            lines.extend([f"{t} {c}"] * int(s.grid[t, c]))
        lines.append("")
    Path(path).write_text("\n".join(lines))


def read_event_text(path, n_channels: int | None = None, binary: bool = False) -> list[BinnedSample]:
    blocks: list[tuple[int, int, list]] = []
    current = None
    for raw in Path(path).read_text().splitlines():
        line = raw.strip()
        if line.startswith("#"):
            if "channels=" in line and n_channels is None:
                n_channels = int(line.split("channels=")[1].split()[0])
            continue
        if not line:
            current = None
            continue
        fields = line.split()
        if len(fields) != 2:
            raise ValueError(f"malformed line {raw!r}")
        a, b = int(fields[0]), int(fields[1])
        if current is None:
            current = (a, b, [])
            blocks.append(current)
        else:
            current[2].append((a, b))
    if n_channels is None:
        n_channels = 1 + max((c for _, _, ev in blocks for _, c in ev), default=0)
    out = []
    for label, steps, ev in blocks:
        grid = np.zeros((steps, n_channels))
        for t, c in ev:
            if not (0 <= t < steps and 0 <= c < n_channels):
                raise ValueError(f"event ({t}, {c}) outside a {steps}x{n_channels} grid")
            grid[t, c] += 1.0
        if binary:
            grid = np.minimum(grid, 1.0)
        out.append(BinnedSample(grid, label))
    return out


def samples_to_dataset(samples) -> Dataset:
    steps = max(s.grid.shape[0] for s in samples)
    chans = samples[0].grid.shape[1]
    x = np.zeros((len(samples), steps, chans))
    for i, s in enumerate(samples):
        x[i, : s.grid.shape[0]] = s.grid
    return Dataset(x, np.array([s.label for s in samples], dtype=np.int64))


# -- binary envelope ----------------------------------------------------------------------

def write_header(fh, kind: int):
    fh.write(MAGIC)
    fh.write(struct.pack("<HH", FORMAT_VERSION, kind))


def read_header(fh, kind: int):
    magic = fh.read(4)
    if magic != MAGIC:
        raise ValueError(f"bad magic {magic!r}")
    version, got = struct.unpack("<HH", fh.read(4))
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported format version {version}")
    if got != kind:
        raise ValueError(f"expected record kind {kind}, found {got}")


def save_dataset(path, ds: Dataset):
    """``DREC`` v1 dataset: u32 n, T, C; u32 labels; u8 counts (n*T*C)."""
    n, steps, chans = ds.x.shape
    with open(path, "wb") as fh:
        write_header(fh, KIND_DATASET)
        fh.write(struct.pack("<III", n, steps, chans))
        fh.write(np.asarray(ds.y, dtype="<u4").tobytes())
        fh.write(np.clip(ds.x, 0, 255).astype(np.uint8).tobytes())


def load_dataset(path) -> Dataset:
    with open(path, "rb") as fh:
        read_header(fh, KIND_DATASET)
        n, steps, chans = struct.unpack("<III", fh.read(12))
        y = np.frombuffer(fh.read(4 * n), dtype="<u4").astype(np.int64)
        raw = fh.read(n * steps * chans)
        if len(raw) != n * steps * chans:
            raise ValueError("truncated dataset file")
        x = np.frombuffer(raw, dtype=np.uint8).reshape(n, steps, chans).astype(np.float64)
    return Dataset(x, y)


def convert_shd(src, dst, delta_t: float = 0.01, spatial_factor: int = 5,
                n_steps: int | None = None, binary: bool = True) -> Dataset:
    """Bin an SHD/SSC HDF5 archive (``spikes/times``, ``spikes/units``, ``labels``)."""
    import h5py

    with h5py.File(src, "r") as f:
        times = f["spikes"]["times"]
        units = f["spikes"]["units"]
        labels = np.asarray(f["labels"])
        if n_steps is None:
            t_max = max(float(np.max(t)) if len(t) else 0.0 for t in times)
            n_steps = int(math.floor(t_max / delta_t)) + 1
        samples = []
        for t, u, lab in zip(times, units, labels):
            samples.append(bin_event_arrays(t, u, delta_t, spatial_factor, n_steps, int(lab), binary))
    ds = samples_to_dataset(samples)
    save_dataset(dst, ds)
    return ds
