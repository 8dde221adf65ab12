"""``delrec`` command-line entry point.

Exit codes: 0 success, 1 usage or input error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import os
import sys
from contextlib import nullcontext

from threadpoolctl import threadpool_limits

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2
ORACLE_TOLERANCE = 1e-9


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _parser() -> argparse.ArgumentParser:
    p = _Parser(prog="delrec", description="Spiking networks with learnable recurrent delays.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    t = sub.add_parser("train", help="train a model from a TOML config")
    t.add_argument("--config", required=True)
    t.add_argument("--seed", type=int)
    t.add_argument("--out")
    t.add_argument("--resume", action="store_true", help="continue from OUT/last.ckpt")

    e = sub.add_parser("eval", help="evaluate a checkpoint on a binary dataset")
    e.add_argument("--ckpt", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--rounded", action="store_true", help="report only rounded-delay accuracy")

    g = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    g.add_argument("--config", required=True)
    g.add_argument("--nets", type=int, default=10)
    g.add_argument("--corrupt", help="negative control: perturb this class's gradient")

    o = sub.add_parser("oracle-check", help="buffered vs dense recurrent forward")
    o.add_argument("--synaptic", action="store_true", help="include synaptic-delay trials")
    o.add_argument("--trials", type=int, default=100)
    o.add_argument("--seed", type=int, default=0)

    a = sub.add_parser("ablate", help="run an ablation sweep")
    a.add_argument("--sweep", required=True)

    c = sub.add_parser("convert-shd", help="bin an SHD/SSC HDF5 file into the binary format")
    c.add_argument("src")
    c.add_argument("dst")
    c.add_argument("--dt", type=float, default=0.01, help="time bin in seconds")
    c.add_argument("--spatial-factor", type=int, default=5)
    c.add_argument("--steps", type=int)
    return p


def _cmd_train(args) -> int:
    from . import config as config_mod
    from .train import train

    cfg = config_mod.load(args.config)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.out is not None:
        overrides["out"] = args.out
    if overrides:
        cfg = cfg.replace(run=overrides)
    res = train(cfg, out_dir=cfg.run.out, resume=args.resume, log=print)
    for kind, r in res.test.items():
        print(f"test {kind:12s} accuracy={r.accuracy:.4f} firing_rate={r.firing_rate:.5f}")
    print(f"run directory: {res.out_dir}")
    return EXIT_OK


def _cmd_eval(args) -> int:
    from .data import load_dataset
    from .train import evaluate, load_network

    net, _ = load_network(args.ckpt)
    ds = load_dataset(args.data)
    kinds = ("rounded",) if args.rounded else ("rounded", "interpolated")
    for kind in kinds:
        r = evaluate(net, ds, rounded=kind == "rounded")
        print(f"{kind:12s} accuracy={r.accuracy:.4f} loss={r.loss:.4f} firing_rate={r.firing_rate:.5f}")
    return EXIT_OK


def _cmd_gradcheck(args) -> int:
    from . import config as config_mod
    from .gradcheck import gradcheck

    report = gradcheck(config_mod.load(args.config), n_nets=args.nets, corrupt=args.corrupt)
    print("\n".join(report.lines()))
    return EXIT_OK if report.passed else EXIT_NUMERIC


def _cmd_oracle(args) -> int:
    from .gradcheck import oracle_check

    dev = oracle_check(args.trials, synaptic=args.synaptic, seed=args.seed)
    ok = dev <= ORACLE_TOLERANCE
    print(f"trials={args.trials} synaptic={args.synaptic} max_abs_dev={dev:.3e} "
          f"{'ok' if ok else 'FAIL'}")
    return EXIT_OK if ok else EXIT_NUMERIC


def _cmd_ablate(args) -> int:
    from .ablate import ablate

    out = ablate(args.sweep, log=print)
    print(f"tables written to {out}")
    return EXIT_OK


def _cmd_convert(args) -> int:
    from .data import convert_shd

    ds = convert_shd(args.src, args.dst, delta_t=args.dt, spatial_factor=args.spatial_factor,
                     n_steps=args.steps)
    print(f"wrote {len(ds)} samples of shape {ds.x.shape[1:]} to {args.dst}")
    return EXIT_OK


COMMANDS = {"train": _cmd_train, "eval": _cmd_eval, "gradcheck": _cmd_gradcheck,
            "oracle-check": _cmd_oracle, "ablate": _cmd_ablate, "convert-shd": _cmd_convert}


def main(argv=None) -> int:
    from .config import ConfigError
    from .network import SpecError

    args = _parser().parse_args(argv)
    threads = os.environ.get("DELREC_THREADS")
    limit = threadpool_limits(int(threads)) if threads else nullcontext()
    try:
        with limit:
            return COMMANDS[args.command](args)
    except FloatingPointError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, SpecError, FileNotFoundError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
