"""Command-line entry point: ``imresample {run,sweep,variance,theory,oracle}``.

Exit codes: 0 success, 1 config error, 2 theory-suite failure, 3 numeric abort.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .exceptions import ConfigError
from .harness import (ExperimentConfig, NumericAbort, build_oracle, run_learning_curve, run_sensitivity_sweep,
                      run_variance_study)
from .theory import CHECKS, run_theory_suite

EXIT_OK, EXIT_CONFIG, EXIT_THEORY, EXIT_NUMERIC = 0, 1, 2, 3


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, help="master seed (overrides the config)")
    p.add_argument("--runs", type=int, help="number of runs (overrides the config)")
    p.add_argument("--out-dir", help="output directory (overrides the config)")
    p.add_argument("--workers", type=int, help="parallel worker processes (overrides the config)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="imresample", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in (("run", "learning curves for every grid point"),
                        ("sweep", "MAVE per learning rate / update interval"),
                        ("variance", "update variances along the WIS-Optimal weight sequence"),
                        ("oracle", "compute and cache true values")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("config", help="experiment config (JSON)")
        _common(p)
        if name == "sweep":
            p.add_argument("--alphas", type=float, nargs="+", help="learning-rate grid (overrides the config)")
            p.add_argument("--intervals", type=int, nargs="+", help="steps-between-updates grid")
    p = sub.add_parser("theory", help="run the bias/variance property checks")
    p.add_argument("--only", nargs="+", choices=sorted(CHECKS), help="subset of checks")
    p.add_argument("--report", help="write the JSON report here as well as to stdout")
    _common(p)
    return parser


def load_config(args) -> ExperimentConfig:
    try:
        with open(args.config) as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    for flag, key in (("seed", "seed"), ("runs", "runs"), ("out_dir", "out_dir"), ("workers", "workers")):
        value = getattr(args, flag, None)
        if value is not None:
            raw[key] = value
    return ExperimentConfig.from_dict(raw)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "theory":
            overrides = {}
            if args.seed is not None:
                overrides = {name: {"seed": args.seed + i} for i, name in enumerate(CHECKS)}
            report = run_theory_suite(only=args.only, overrides=overrides)
            text = json.dumps(report, indent=2, default=float)
            print(text)
            if args.report:
                Path(args.report).write_text(text + "\n")
            return EXIT_OK if report["passed"] else EXIT_THEORY
        cfg = load_config(args)
        out = Path(cfg.out_dir) / cfg.name
        if args.command == "run":
            results = run_learning_curve(cfg)
            print(f"wrote {len(results)} runs to {out}")
        elif args.command == "sweep":
            grid = {}
            if args.alphas:
                grid["learning_rates"] = args.alphas
            if args.intervals:
                grid["steps_between_updates"] = args.intervals
            rows = run_sensitivity_sweep(cfg, grid)
            print(f"wrote {len(rows)} grid points to {out / 'sweep.csv'}")
        elif args.command == "variance":
            rows = run_variance_study(cfg)
            print(f"wrote {len(rows)} rows to {out / 'variance.csv'}")
        elif args.command == "oracle":
            print(f"wrote {build_oracle(cfg)}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericAbort as exc:
        print(f"numeric abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
