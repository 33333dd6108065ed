"""Command-line entry point: ``mfmcmc <experiment> [--config ...]``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .io import ConfigError, DatasetError, load_config, resolve_config

EXPERIMENTS = ("toy", "lgcp", "lv", "pde", "gp")


def _u64(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return value


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mfmcmc", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS + ("estimator-check",):
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, help="TOML experiment config")
        p.add_argument("--seed", type=_u64, help="overrides the config seed")
        p.add_argument("--out", type=Path, default=None, help="output directory")
        p.add_argument("--chains", type=_positive, help="overrides the config chain count")
    sub.add_parser("convergence-check")
    return parser


def _resolve(args) -> object:
    overrides = {"seed": args.seed, "chains": args.chains}
    if args.config is not None:
        cfg = load_config(args.config, overrides)
        if cfg.experiment != args.command:
            raise ConfigError(f"config is for experiment {cfg.experiment!r}, not {args.command!r}")
        return cfg
    return resolve_config({"experiment": args.command}, overrides)


def _report(rows, fmt) -> bool:
    ok = True
    for row in rows:
        print(("PASS " if row["passed"] else "FAIL ") + fmt(row))
        ok &= bool(row["passed"])
    return ok


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    # heavy imports after argument parsing keeps --help fast
    from . import experiments

    try:
        if args.command == "convergence-check":
            ok = _report(experiments.convergence_check(), lambda r: f"{r['name']}: {r['value']:.6g}")
            return 0 if ok else 1
        cfg = _resolve(args)
        if args.command == "estimator-check":
            block = cfg.model_block()
            rows = experiments.estimator_check(block.thetas, block.replicates, cfg.gamma0, block.n,
                                               cfg.seed, block.tolerance_se, cfg.scheme)
            ok = _report(rows, lambda r: f"theta={r['theta']:g}: mean ratio {r['mean_ratio']:.5f}"
                                         f" (SE {r['se']:.2g}, z {r['z']:+.2f})")
            if args.out is not None:
                args.out.mkdir(parents=True, exist_ok=True)
                (args.out / "estimator_check.json").write_text(json.dumps(rows, indent=2) + "\n")
            return 0 if ok else 1
        out = args.out or Path(f"runs/{cfg.experiment}-seed{cfg.seed}")
        doc = experiments.run_experiment(cfg, out)
        pooled = doc.get("pooled") or {}
        print(json.dumps({"out": str(out), "pooled": pooled, "annealing": doc.get("annealing")},
                         indent=2, default=str))
        return 0
    except (ConfigError, DatasetError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
