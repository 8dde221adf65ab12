"""Ablation sweeps over model variants, layer sizes and spike-penalty weights."""

from __future__ import annotations

import csv
import json
import math
import os
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import config as config_mod
from .config import ConfigError, RunConfig
from .network import ABLATION_VARIANTS

SIZE_STEP = 6
DEFAULT_LAMBDAS = [1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0]
SWEEP_KINDS = ("roster", "size", "lambda")


@dataclass
class SweepSection:
    base: str = ""
    out: str = "runs/ablation"
    kind: str = "roster"
    variants: list = field(default_factory=lambda: list(ABLATION_VARIANTS))
    seeds: list = field(default_factory=lambda: [0, 1, 2])
    size_steps: int = 3
    lambdas: list = field(default_factory=lambda: list(DEFAULT_LAMBDAS))
    jobs: int = 1
    hidden: int = 0  # overrides every variant's default width when positive


@dataclass(frozen=True)
class RunPlan:
    variant: str
    hidden: int
    lam: float
    seed: int
    out: str
    config: dict


def size_points(variant: str, steps: int, step: int = SIZE_STEP, top: int = 0) -> list[int]:
    """Hidden widths from the variant's default (or ``top``) down in ``step``-neuron decrements."""
    top = top or ABLATION_VARIANTS[variant]["hidden_sizes"][0]
    return [top - k * step for k in range(steps + 1) if top - k * step > 0]


def load_sweep(path) -> tuple[SweepSection, RunConfig]:
    path = Path(path)
    raw = tomllib.loads(path.read_text())
    if set(raw) - {"sweep", "config"}:
        raise ConfigError(f"unknown section(s) in sweep file: {sorted(set(raw) - {'sweep', 'config'})}")
    sweep = config_mod.parse_section("sweep", SweepSection, raw.get("sweep", {}))
    if sweep.kind not in SWEEP_KINDS:
        raise ConfigError(f"[sweep] kind must be one of {SWEEP_KINDS}")
    unknown = set(sweep.variants) - set(ABLATION_VARIANTS)
    if unknown:
        raise ConfigError(f"unknown variant(s): {sorted(unknown)}")
    if sweep.base:
        base = config_mod.load(path.parent / sweep.base)
    else:
        base = config_mod.from_dict(raw.get("config", {"run": {"seed": 0}}))
    if not Path(sweep.out).is_absolute():
        sweep.out = str(path.parent / sweep.out)
    return sweep, base


def plan_runs(sweep: SweepSection, base: RunConfig) -> list[RunPlan]:
    plans = []
    for variant in sweep.variants:
        fields = ABLATION_VARIANTS[variant]
        default_h = sweep.hidden or fields["hidden_sizes"][0]
        if sweep.kind == "size":
            points = [(h, base.readout.lambda_spike)
                      for h in size_points(variant, sweep.size_steps, top=default_h)]
        elif sweep.kind == "lambda":
            points = [(default_h, float(lam)) for lam in sweep.lambdas]
        else:
            points = [(default_h, base.readout.lambda_spike)]
        for hidden, lam in points:
            for seed in sweep.seeds:
                tag = f"h{hidden}" if sweep.kind != "lambda" else f"lam{lam:g}"
                out = str(Path(sweep.out) / sweep.kind / variant / tag / f"seed{seed}")
                model = {"hidden_sizes": [hidden] * len(fields["hidden_sizes"]),
                         "recurrent_flags": list(fields["recurrent_flags"]),
                         "rec_delay_mode": fields["rec_delay_mode"],
                         "ff_delay_mode": fields["ff_delay_mode"],
                         "ff_delay_layers": [1]}
                cfg = base.replace(run={"seed": int(seed), "out": out}, model=model,
                                   readout={"lambda_spike": lam})
                plans.append(RunPlan(variant, hidden, lam, int(seed), out, cfg.to_dict()))
    return plans


def execute(plan: RunPlan) -> dict:
    from .train import train

    cfg = config_mod.from_dict(plan.config)
    res = train(cfg, out_dir=plan.out)
    return {
        "variant": plan.variant, "hidden": plan.hidden, "lambda": plan.lam, "seed": plan.seed,
        "n_params": int(sum(v.value.size for v in res.net.parameters().values())),
        "test_acc_rounded": res.test["rounded"].accuracy,
        "test_acc_interpolated": res.test["interpolated"].accuracy,
        "firing_rate": res.test["rounded"].firing_rate,
        "best_epoch": res.best_epoch,
    }


def max_workers(requested: int) -> int:
    cap = os.environ.get("DELREC_THREADS")
    n = max(1, int(requested))
    return min(n, max(1, int(cap))) if cap else n


ROW_FIELDS = ("variant", "hidden", "lambda", "seed", "n_params", "test_acc_rounded",
              "test_acc_interpolated", "firing_rate", "best_epoch")


def ablate(path, log=None) -> Path:
    """Run every planned point and write result tables under ``[sweep] out``."""
    log = log or (lambda msg: None)
    sweep, base = load_sweep(path)
    plans = plan_runs(sweep, base)
    workers = max_workers(sweep.jobs)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(execute, plans))
    else:
        rows = []
        for plan in plans:
            rows.append(execute(plan))
            log(json.dumps(rows[-1]))
    out = Path(sweep.out)
    out.mkdir(parents=True, exist_ok=True)
    write_tables(out, sweep.kind, rows)
    return out


def write_tables(out: Path, kind: str, rows: list[dict]):
    with open(out / f"runs_{kind}.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=ROW_FIELDS)
        w.writeheader()
        for r in rows:
            w.writerow(r)
    key = "lambda" if kind == "lambda" else "hidden"
    groups: dict = {}
    for r in rows:
        groups.setdefault((r["variant"], r[key]), []).append(r)
    name = "accuracy_vs_firing_rate.csv" if kind == "lambda" else "accuracy_vs_params.csv"
    with open(out / name, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["variant", key, "n_params", "n_seeds", "acc_mean", "acc_sem",
                    "firing_rate_mean", "firing_rate_sem"])
        for (variant, point), rs in groups.items():
            acc = [r["test_acc_rounded"] for r in rs]
            rate = [r["firing_rate"] for r in rs]
            w.writerow([variant, point, rs[0]["n_params"], len(rs), _mean(acc), _sem(acc),
                        _mean(rate), _sem(rate)])


def _mean(xs) -> float:
    return statistics.fmean(xs)


def _sem(xs) -> float:
    return statistics.stdev(xs) / math.sqrt(len(xs)) if len(xs) > 1 else 0.0
