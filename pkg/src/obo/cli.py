"""Command-line entry point: run / sweep / compare / check."""

from __future__ import annotations

import argparse
import logging
import os
import sys

import numpy as np

from .core import check_oracle, validate_config
from .errors import ConfigError, OboError
from .problems import make_stream
from .runner import load_experiment_config, run_compare, run_experiment, run_sweep

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2


def _setup_logging():
    level = os.environ.get("OBO_LOG_LEVEL", "warn").lower()
    mapping = {"error": logging.ERROR, "warn": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}
    logging.basicConfig(level=mapping.get(level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")


def _build_parser():
    parser = argparse.ArgumentParser(prog="obo", description="Online bilevel optimization experiments.")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run one experiment from a TOML config")
    run_p.add_argument("--config", required=True)
    run_p.add_argument("--out", default=None, help="output directory (overrides config)")
    run_p.add_argument("--seed", type=int, default=None, help="master seed (overrides config)")

    sweep_p = sub.add_parser("sweep", help="run a parameter sweep")
    sweep_p.add_argument("--config", required=True)
    sweep_p.add_argument("--axis", required=True)
    sweep_p.add_argument("--values", required=True, help="comma-separated values")
    sweep_p.add_argument("--out", default=None)
    sweep_p.add_argument("--seed", type=int, default=None)

    cmp_p = sub.add_parser("compare", help="run several configs and tabulate")
    cmp_p.add_argument("--configs", nargs="+", required=True)
    cmp_p.add_argument("--out", required=True)

    check_p = sub.add_parser("check", help="oracle self-tests and config validation only")
    check_p.add_argument("--config", required=True)
    return parser


def _cmd_run(args) -> int:
    cfg = load_experiment_config(args.config, out_dir=args.out, seed=args.seed)
    artifacts = run_experiment(cfg)
    print(f"wrote {artifacts.csv_path} and {artifacts.summary_path}")
    return EXIT_OK


def _cmd_sweep(args) -> int:
    cfg = load_experiment_config(args.config, out_dir=args.out, seed=args.seed)
    values = [v for v in (s.strip() for s in args.values.split(",")) if v]
    artifacts = run_sweep(cfg, args.axis, values)
    failed = [k for k, v in artifacts.summary["runs"].items() if "error" in v]
    print(f"wrote {artifacts.summary_path}")
    if failed:
        print(f"failed values: {failed}")
        return EXIT_RUNTIME
    return EXIT_OK


def _cmd_compare(args) -> int:
    cfgs = [load_experiment_config(path) for path in args.configs]
    table = run_compare(cfgs, args.out)
    header = f"{'run_id':<28} {'optimizer':<9} {'rounds':>7} {'final BLR':>14} {'step ns':>14}"
    print(header)
    print("-" * len(header))
    for row in table["rows"]:
        if "error" in row:
            print(f"{row['run_id']:<28} {row['optimizer']:<9} ERROR: {row['error']}")
        else:
            blr = row["blr_cumulative"]
            blr_s = f"{blr:.6g}" if blr is not None else "-"
            print(
                f"{row['run_id']:<28} {row['optimizer']:<9} {row['rounds']:>7} "
                f"{blr_s:>14} {row['step_total_ns']:>14}"
            )
    return EXIT_OK


def _cmd_check(args) -> int:
    cfg = load_experiment_config(args.config)
    from .runner import split_seed
    import dataclasses

    stream_seed, _ = split_seed(cfg.master_seed)
    stream = make_stream(dataclasses.replace(cfg.stream, seed=stream_seed))
    rng = np.random.default_rng(0)
    probe_rounds = sorted({0, len(stream) // 2, len(stream) - 1})
    all_ok = True
    for idx in probe_rounds:
        oracle = stream[idx]
        for _ in range(3):
            x = rng.standard_normal(oracle.d1)
            y = rng.standard_normal(oracle.d2)
            report = check_oracle(oracle, x, y, mu_g=stream.constants.mu_g, rng=rng)
            status = "ok" if report.passed else "FAIL"
            worst = max(c.error for c in report.checks)
            print(f"round {idx + 1}: oracle check {status} (worst error {worst:.3e})")
            all_ok = all_ok and report.passed

    validation = validate_config(cfg.optimizer_cfg, stream.constants)
    print("config validation:")
    print(str(validation))
    return EXIT_OK if all_ok else EXIT_RUNTIME


def main(argv=None) -> int:
    _setup_logging()
    parser = _build_parser()
    args = parser.parse_args(argv)
    handlers = {"run": _cmd_run, "sweep": _cmd_sweep, "compare": _cmd_compare, "check": _cmd_check}
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OboError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
