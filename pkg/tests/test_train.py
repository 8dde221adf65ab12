from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest

from conftest import tiny_config
from delrec.autodiff import Tape
from delrec.config import ConfigError, load
from delrec.data import Dataset, save_dataset
from delrec.kernel import SigmaSchedule, sigma_at_epoch
from delrec.readout import spike_penalty
from delrec.train import (METRICS_HEADER, _time_major, evaluate, load_network, load_splits,
                          read_metrics, train)

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


class Interrupt(Exception):
    pass


def test_one_epoch_run_directory(tmp_path):
    result = train(tiny_config(run={"epochs": 1}), tmp_path / "run")
    out = result.out_dir
    for name in ("config.toml", "git_describe.txt", "metrics.csv", "timing.csv", "best.ckpt",
                 "last.ckpt", "results.json"):
        assert (out / name).is_file(), name
    lines = (out / "metrics.csv").read_text().splitlines()
    assert lines[0] == ",".join(METRICS_HEADER)
    assert len(lines) == 2
    summary = json.loads((out / "results.json").read_text())
    assert set(summary["test"]) == {"rounded", "interpolated"}


def test_sigma_follows_schedule():
    cfg = tiny_config(run={"epochs": 4}, delays={"sigma_init": 6.0, "decay": 0.9})
    history = train(cfg).history
    sched = SigmaSchedule(6.0, 0.9, 4)
    assert [row["sigma"] for row in history] == [sigma_at_epoch(sched, e) for e in range(4)]


def test_bit_identical_reruns(tmp_path):
    cfg = tiny_config(seed=5)
    train(cfg, tmp_path / "a")
    train(cfg, tmp_path / "b")
    assert (tmp_path / "a/metrics.csv").read_bytes() == (tmp_path / "b/metrics.csv").read_bytes()
    other = train(tiny_config(seed=6), tmp_path / "c")
    assert (tmp_path / "c/metrics.csv").read_bytes() != (tmp_path / "a/metrics.csv").read_bytes()
    assert other.history


def test_resume_matches_uninterrupted(tmp_path):
    cfg = tiny_config(seed=2, run={"epochs": 3})
    train(cfg, tmp_path / "full")

    def stop_after_first(msg):
        if msg.startswith("epoch   0"):
            raise Interrupt

    with pytest.raises(Interrupt):
        train(cfg, tmp_path / "resumed", log=stop_after_first)
    assert len(read_metrics(tmp_path / "resumed/metrics.csv")) == 1
    train(cfg, tmp_path / "resumed", resume=True)
    assert (tmp_path / "full/metrics.csv").read_bytes() == (tmp_path / "resumed/metrics.csv").read_bytes()
    assert (tmp_path / "full/best.ckpt").read_bytes() == (tmp_path / "resumed/best.ckpt").read_bytes()


def test_learns_tiny_task():
    cfg = tiny_config(seed=0, run={"epochs": 12}, model={"hidden_sizes": [16, 16]},
                      data={"n_samples": 120, "lags": [2, 11], "background_rate": 0.0},
                      readout={"n_classes": 2}, optim={"lr_weights": 1e-2, "lr_positions": 0.1})
    result = train(cfg)
    assert result.history[-1]["train_acc"] >= 0.9
    assert result.history[-1]["train_loss"] < result.history[0]["train_loss"]
    assert evaluate(result.net, load_splits(cfg).train).accuracy >= 0.95


def test_penalty_gradient_alone_lowers_firing_rate():
    cfg = tiny_config()
    net = train(cfg.replace(run={"epochs": 1})).net
    x = _time_major(load_splits(cfg).train.x)
    before = float(spike_penalty(net.forward(x)[1]).value)
    params = {k: v for k, v in net.parameters().items() if k.endswith("w") or k.endswith("w_rec")}
    with Tape() as tape:
        penalty = spike_penalty(net.forward(x, training=True, rng=np.random.default_rng(0))[1])
    tape.backward(penalty)
    for v in params.values():
        v.value -= 0.05 * v.grad / np.abs(v.grad).max()
    assert before > 0
    assert float(spike_penalty(net.forward(x)[1]).value) < before


def test_penalty_lowers_firing_rate_on_synthetic_task():
    cfg = load(CONFIGS / "synthetic_lambda.toml").replace(readout={"lambda_spike": 1.0})
    rates = [row["firing_rate"] for row in train(cfg).history]
    assert rates[10] < rates[0]


def test_eval_firing_rate_is_twice_penalty():
    cfg = tiny_config()
    result = train(cfg.replace(run={"epochs": 1}))
    ds = load_splits(cfg).test
    ev = evaluate(result.net, ds, rounded=True, batch_size=len(ds))
    _, spikes = result.net.rounded().forward(_time_major(ds.x))
    assert ev.firing_rate == pytest.approx(2 * float(spike_penalty(spikes).value), rel=1e-12)


def test_eval_channel_mismatch():
    result = train(tiny_config(run={"epochs": 1}))
    with pytest.raises(ValueError, match="channels"):
        evaluate(result.net, Dataset(np.zeros((2, 10, 3)), np.zeros(2, dtype=int)))


def test_checkpoint_reload_reproduces_eval(tmp_path):
    cfg = tiny_config(run={"epochs": 1})
    result = train(cfg, tmp_path / "r")
    net, cfg2 = load_network(tmp_path / "r/best.ckpt")
    assert cfg2 == cfg
    ds = load_splits(cfg).test
    assert evaluate(net, ds).accuracy == result.test["rounded"].accuracy


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_non_finite_loss_raises():
    cfg = tiny_config(run={"epochs": 3}, optim={"lr_weights": 1e300, "sched_weights": "constant"})
    with pytest.raises(FloatingPointError):
        train(cfg)


class TestLoadSplits:
    def test_missing_file(self, tmp_path):
        cfg = tiny_config(data={"kind": "binary", "train_path": str(tmp_path / "nope.bin")})
        with pytest.raises(FileNotFoundError):
            load_splits(cfg)

    def test_class_mismatch(self):
        with pytest.raises(ConfigError, match="n_classes"):
            load_splits(tiny_config(readout={"n_classes": 2}))

    def test_binary_files(self, tmp_path):
        rng = np.random.default_rng(0)
        train_ds = Dataset((rng.random((20, 10, 3)) < 0.3).astype(float), np.arange(20) % 4)
        test_ds = Dataset((rng.random((6, 10, 3)) < 0.3).astype(float), np.arange(6) % 4)
        save_dataset(tmp_path / "train.bin", train_ds)
        save_dataset(tmp_path / "test.bin", test_ds)
        cfg = tiny_config(data={"kind": "binary", "train_path": str(tmp_path / "train.bin"),
                                "test_path": str(tmp_path / "test.bin"), "val_fraction": 0.25})
        splits = load_splits(cfg)
        assert (len(splits.train), len(splits.val), len(splits.test)) == (15, 5, 6)
        np.testing.assert_array_equal(splits.test.x, test_ds.x)
