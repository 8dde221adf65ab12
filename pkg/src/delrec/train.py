"""Training loop with annealed spread, evaluation and run-directory bookkeeping."""

from __future__ import annotations

import csv
import json
import math
import subprocess
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import config as config_mod
from .autodiff import Tape
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .config import RunConfig
from .data import (Dataset, Splits, SyntheticTaskSpec, augment_shift, BinnedSample,
                   gen_delayed_coincidence, load_dataset, split_dataset)
from .kernel import SigmaSchedule, sigma_at_epoch
from .network import POSITIONS, WEIGHTS, Network, build
from .optim import LrSchedule, OptimState, adam_step, lr_at
from .readout import LINEAR_CE, cross_entropy, mean_firing_rate, predict, spike_penalty

METRICS_HEADER = ("epoch", "train_loss", "train_acc", "val_loss", "val_acc",
                  "firing_rate", "sigma")


@dataclass
class EvalResult:
    accuracy: float
    loss: float
    firing_rate: float

    def as_dict(self) -> dict:
        return {"accuracy": self.accuracy, "loss": self.loss, "firing_rate": self.firing_rate}


@dataclass
class TrainResult:
    net: Network
    history: list
    out_dir: Path | None
    best_epoch: int
    best_val_acc: float
    test: dict = field(default_factory=dict)  # "rounded" / "interpolated" -> EvalResult


# -- data ---------------------------------------------------------------------------

def load_splits(cfg: RunConfig) -> Splits:
    d = cfg.data
    if d.kind == "synthetic":
        spec = SyntheticTaskSpec(n_classes=len(d.lags), lags=tuple(d.lags), n_steps=d.n_steps,
                                 background_rate=d.background_rate, n_probes=d.n_probes,
                                 n_samples=d.n_samples, seed=d.data_seed)
        splits = gen_delayed_coincidence(spec)
    elif d.kind == "binary":
        for p in (d.train_path, d.test_path):
            if p and not Path(p).is_file():
                raise FileNotFoundError(f"dataset file not found: {p}")
        if not d.train_path:
            raise FileNotFoundError("[data] train_path is required for binary datasets")
        full = load_dataset(d.train_path)
        perm = np.random.default_rng(d.data_seed).permutation(len(full))
        full = full.subset(perm)
        if d.test_path:
            n_val = int(round(d.val_fraction * len(full)))
            splits = Splits(full.subset(np.arange(n_val, len(full))), full.subset(np.arange(n_val)),
                            load_dataset(d.test_path))
        else:
            rest = (1.0 - d.val_fraction) / 2.0
            splits = split_dataset(full, (1.0 - d.val_fraction - rest, d.val_fraction, rest))
    else:
        raise config_mod.ConfigError(f"unknown data kind {d.kind!r}")
    n_labels = max(int(s.y.max()) + 1 for s in (splits.train, splits.val, splits.test) if len(s))
    if n_labels > cfg.readout.n_classes:
        raise config_mod.ConfigError(
            f"dataset has {n_labels} classes but readout.n_classes = {cfg.readout.n_classes}")
    return splits


def _time_major(x: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(np.transpose(x, (1, 0, 2)))


def _augment(x: np.ndarray, y: np.ndarray, cfg: RunConfig, rng) -> np.ndarray:
    return np.stack([augment_shift(BinnedSample(g, int(lab)), rng, cfg.data.max_shift).grid
                     for g, lab in zip(x, y)])


# -- evaluation -----------------------------------------------------------------------

def _loss_terms(net: Network, scores, spikes, labels):
    ce = cross_entropy(scores, labels, from_logits=net.spec.readout.kind == LINEAR_CE)
    return ce, spike_penalty(spikes)


def evaluate(net: Network, ds: Dataset, rounded: bool = True, batch_size: int = 256) -> EvalResult:
    """Accuracy, loss and firing rate at zero spread.

    ``rounded`` snaps every delay to the nearest integer; otherwise real
    delays are kept and delivered by linear interpolation.
    """
    if ds.n_channels != net.spec.n_inputs:
        raise ValueError(f"dataset has {ds.n_channels} channels, network expects {net.spec.n_inputs}")
    model = net.rounded() if rounded else net
    saved = model.sigma
    model.sigma = 0.0
    correct = 0
    loss_sum = 0.0
    spikes_sum = 0.0
    try:
        for start in range(0, len(ds), batch_size):
            xb = _time_major(ds.x[start:start + batch_size])
            yb = ds.y[start:start + batch_size]
            scores, spikes = model.forward(xb, training=False)
            ce, _ = _loss_terms(model, scores, spikes, yb)
            correct += int((predict(scores) == yb).sum())
            loss_sum += float(ce.value) * len(yb)
            spikes_sum += mean_firing_rate(spikes) * len(yb)
    finally:
        model.sigma = saved
    n = max(len(ds), 1)
    return EvalResult(correct / n, loss_sum / n, spikes_sum / n)


# -- optimisation state -------------------------------------------------------------------

def _groups(net: Network) -> dict:
    out = {WEIGHTS: {}, POSITIONS: {}}
    for name, var in net.parameters().items():
        out[var.group][name] = var
    return out


def _schedules(cfg: RunConfig, total_steps: int) -> dict:
    o = cfg.optim
    return {
        WEIGHTS: LrSchedule(o.sched_weights, o.lr_weights, total_steps, o.warmup_frac),
        POSITIONS: LrSchedule(o.sched_positions, o.lr_positions, total_steps, o.warmup_frac),
    }


def _optim_states(cfg: RunConfig) -> dict:
    o = cfg.optim
    if o.optimizer not in ("adam", "adamw"):
        raise config_mod.ConfigError(f"unknown optimizer {o.optimizer!r}")
    decoupled = o.optimizer == "adamw"
    return {WEIGHTS: OptimState(weight_decay=o.weight_decay, decoupled=decoupled),
            POSITIONS: OptimState(weight_decay=0.0, decoupled=decoupled)}


def build_network(cfg: RunConfig, n_inputs: int) -> Network:
    return build(cfg.architecture(n_inputs), np.random.default_rng([cfg.run.seed, 0]))


def _git_describe() -> str:
    try:
        res = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"],
                             capture_output=True, text=True, timeout=10,
                             cwd=Path(__file__).resolve().parent)
        return res.stdout.strip() or "unknown"
    except (OSError, subprocess.SubprocessError):
        return "unknown"


def _fmt(x) -> str:
    return repr(float(x)) if isinstance(x, (float, np.floating)) else str(x)


def _checkpoint(net, states, epoch, sigma, rng, cfg, extra) -> Checkpoint:
    optim = {g: {"step": st.step, "m": dict(st.m), "v": dict(st.v)} for g, st in states.items()}
    return Checkpoint(params=net.state_dict(), optim=optim, epoch=epoch, sigma=sigma,
                      rng_state=rng.bit_generator.state, config=cfg.to_dict(),
                      config_hash=cfg.hash(), extra=extra)


def _restore(ckpt: Checkpoint, net: Network, states: dict, rng, cfg: RunConfig):
    if ckpt.config_hash != cfg.hash():
        raise ValueError("checkpoint was written with a different configuration")
    net.load_state_dict(ckpt.params)
    for g, st in states.items():
        saved = ckpt.optim.get(g, {"step": 0, "m": {}, "v": {}})
        st.step = saved["step"]
        st.m = {k: np.array(v) for k, v in saved["m"].items()}
        st.v = {k: np.array(v) for k, v in saved["v"].items()}
    rng.bit_generator.state = ckpt.rng_state


# -- training -----------------------------------------------------------------------------

def train(cfg: RunConfig, out_dir=None, resume: bool = False, splits: Splits | None = None,
          log=None) -> TrainResult:
    """Train per ``cfg``; with ``out_dir`` the run directory is populated.

    ``resume`` continues from ``out_dir/last.ckpt`` and reproduces the same
    metrics an uninterrupted run would have written.
    """
    splits = load_splits(cfg) if splits is None else splits
    log = log or (lambda msg: None)
    net = build_network(cfg, splits.train.n_channels)
    rng = np.random.default_rng([cfg.run.seed, 1])
    epochs, bs = cfg.run.epochs, cfg.run.batch_size
    n_train = len(splits.train)
    steps_per_epoch = math.ceil(n_train / bs)
    schedules = _schedules(cfg, max(epochs * steps_per_epoch, 1))
    states = _optim_states(cfg)
    sigma_sched = SigmaSchedule(cfg.delays.sigma_init, cfg.delays.decay, max(epochs, 1))
    lam = cfg.readout.lambda_spike

    out = Path(out_dir) if out_dir is not None else None
    start_epoch, best_val, best_epoch = 0, -1.0, -1
    history: list[dict] = []
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        if resume and (out / "last.ckpt").is_file():
            ckpt = load_checkpoint(out / "last.ckpt")
            _restore(ckpt, net, states, rng, cfg)
            start_epoch = ckpt.epoch + 1
            best_val, best_epoch = ckpt.extra["best_val"], ckpt.extra["best_epoch"]
            history = _read_metrics(out / "metrics.csv")[: start_epoch]
            _write_metrics(out / "metrics.csv", history)
        else:
            (out / "config.toml").write_text(config_mod.dumps(cfg))
            (out / "git_describe.txt").write_text(_git_describe() + "\n")
            _write_metrics(out / "metrics.csv", [])
            (out / "timing.csv").write_text("epoch,wall_seconds\n")

    groups = _groups(net)
    for epoch in range(start_epoch, epochs):
        t0 = time.perf_counter()
        sigma = sigma_at_epoch(sigma_sched, epoch)
        net.sigma = sigma
        order = rng.permutation(n_train)
        loss_sum, correct, rate_sum = 0.0, 0, 0.0
        for b in range(steps_per_epoch):
            idx = order[b * bs:(b + 1) * bs]
            xb, yb = splits.train.x[idx], splits.train.y[idx]
            if cfg.data.augment:
                xb = _augment(xb, yb, cfg, rng)
            with Tape() as tape:
                scores, spikes = net.forward(_time_major(xb), training=True, rng=rng)
                ce, pen = _loss_terms(net, scores, spikes, yb)
                loss = ce + pen * lam if lam else ce
            if not np.isfinite(loss.value):
                raise FloatingPointError(f"non-finite loss at epoch {epoch}, batch {b}")
            tape.backward(loss)
            step = epoch * steps_per_epoch + b
            for g, params in groups.items():
                if not params:
                    continue
                grads = {k: (v.grad if v.grad is not None else np.zeros_like(v.value))
                         for k, v in params.items()}
                adam_step({k: v.value for k, v in params.items()}, grads, states[g],
                          lr_at(schedules[g], step))
            net.clamp_delays()
            loss_sum += float(loss.value) * len(idx)
            correct += int((predict(scores) == yb).sum())
            rate_sum += mean_firing_rate(spikes) * len(idx)
        val = evaluate(net, splits.val, rounded=True)
        row = {"epoch": epoch, "train_loss": loss_sum / n_train, "train_acc": correct / n_train,
               "val_loss": val.loss, "val_acc": val.accuracy, "firing_rate": rate_sum / n_train,
               "sigma": sigma}
        history.append(row)
        improved = val.accuracy > best_val
        if improved:
            best_val, best_epoch = val.accuracy, epoch
        if out is not None:
            extra = {"best_val": best_val, "best_epoch": best_epoch,
                     "n_inputs": net.spec.n_inputs}
            ck = _checkpoint(net, states, epoch, sigma, rng, cfg, extra)
            if improved:
                save_checkpoint(out / "best.ckpt", ck)
            save_checkpoint(out / "last.ckpt", ck)
            _append_metrics(out / "metrics.csv", row)
            with open(out / "timing.csv", "a") as fh:
                fh.write(f"{epoch},{time.perf_counter() - t0:.3f}\n")
        else:
            if improved:
                best_state = net.state_dict()
        log(f"epoch {epoch:3d}  sigma {sigma:7.4f}  loss {row['train_loss']:.4f}  "
            f"train {row['train_acc']:.3f}  val {val.accuracy:.3f}  rate {row['firing_rate']:.4f}")

    if best_epoch >= 0:
        if out is not None:
            net.load_state_dict(load_checkpoint(out / "best.ckpt").params)
        elif epochs > start_epoch:
            net.load_state_dict(best_state)
    test = {"rounded": evaluate(net, splits.test, rounded=True),
            "interpolated": evaluate(net, splits.test, rounded=False)}
    if out is not None:
        summary = {"best_epoch": best_epoch, "best_val_acc": best_val,
                   "test": {k: v.as_dict() for k, v in test.items()},
                   "n_params": int(sum(v.value.size for v in net.parameters().values()))}
        (out / "results.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return TrainResult(net, history, out, best_epoch, best_val, test)


def _write_metrics(path: Path, rows: list):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(METRICS_HEADER)
        for row in rows:
            w.writerow([_fmt(row[k]) for k in METRICS_HEADER])


def _append_metrics(path: Path, row: dict):
    with open(path, "a", newline="") as fh:
        csv.writer(fh).writerow([_fmt(row[k]) for k in METRICS_HEADER])


def _read_metrics(path: Path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [{k: (int(r[k]) if k == "epoch" else float(r[k])) for k in METRICS_HEADER} for r in rows]


def read_metrics(path) -> list[dict]:
    return _read_metrics(Path(path))


def load_network(path) -> tuple[Network, RunConfig]:
    """Rebuild the network stored in a checkpoint."""
    ckpt = load_checkpoint(path)
    cfg = config_mod.from_dict(ckpt.config)
    net = build_network(cfg, int(ckpt.extra["n_inputs"]))
    net.load_state_dict(ckpt.params)
    return net, cfg
