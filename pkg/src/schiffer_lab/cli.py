"""Command line entry point: ``schiffer-lab <experiment> [--config file.json] [--out dir]``.

Exit codes: 0 all checks passed, 1 a check failed, 2 configuration error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path
from typing import Optional, Sequence

from .errors import ConfigError, NumericalFailure
from .experiments import EXPERIMENTS, manifest_head, resolve_config, run_experiment, write_outputs

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3

# flag name -> (config key, type)
FLAGS = {
    "seed": int, "h": float, "curve": str, "bc": str, "count": int, "quantity": str, "t": float,
    "index": int, "gamma": float, "functional": str, "metric": str, "A": float, "s0": float,
    "max_iter": int, "tol": float, "area": float, "harmonics": int, "convention": str,
    "n_directions": int, "radius": float,
}


def _json_arg(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="schiffer-lab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="experiment", required=True)
    for name, exp in EXPERIMENTS.items():
        p = sub.add_parser(name, help=(exp.func.__doc__ or name).strip().splitlines()[0])
        p.add_argument("--config", type=Path, help="flat JSON object of parameters")
        p.add_argument("--out", type=Path, help="output directory")
        for flag, typ in FLAGS.items():
            if flag == "seed" or flag in exp.defaults:
                p.add_argument(f"--{flag.replace('_', '-')}", dest=flag, type=typ, default=None)
        if "alpha" in exp.defaults:
            p.add_argument("--alpha", type=_json_arg, default=None,
                           help='"one", "random" or a JSON object {"cos": [...], "sin": [...]}')
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    overrides = {k: v for k, v in vars(args).items() if k not in ("experiment", "config", "out")}
    try:
        config = {}
        if args.config is not None:
            try:
                config = json.loads(args.config.read_text())
            except (OSError, json.JSONDecodeError) as exc:
                raise ConfigError(f"cannot read config: {exc}") from exc
            if not isinstance(config, dict):
                raise ConfigError("config must be a JSON object")
        params = resolve_config(args.experiment, config, overrides)
        if args.out is not None:
            params["out"] = str(args.out)
        start = time.perf_counter()
        outcome = run_experiment(args.experiment, params)
        wall = time.perf_counter() - start
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalFailure as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    manifest = write_outputs(outcome, Path(params["out"]), manifest_head(args.experiment, params, wall))
    for name, ok in outcome.checks.items():
        print(f"{'PASS' if ok else 'FAIL'} {name}")
    print(f"manifest: {manifest}")
    return EXIT_OK if outcome.passed else EXIT_CHECK


if __name__ == "__main__":
    sys.exit(main())
