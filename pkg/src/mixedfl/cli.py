"""Command line entry point.

    mixedfl run CONFIG [--seed N] [--out PATH]
    mixedfl preset NAME [--out PATH]
    mixedfl list-presets
    mixedfl validate CONFIG

Exit codes: 0 success, 2 invalid config, 3 numerical divergence.
"""
from __future__ import annotations

import argparse
import contextlib
import logging
import sys
from typing import List, Optional

from .engine import DivergenceError
from .harness import (
    ConfigError,
    list_presets,
    load_config,
    preset_configs,
    run_experiment,
    write_csv,
)

EXIT_CONFIG = 2
EXIT_DIVERGED = 3


@contextlib.contextmanager
def _open_out(path: Optional[str]):
    if path is None or path == "-":
        yield sys.stdout
    else:
        with open(path, "w", newline="") as fh:
            yield fh


def _run_all(cfgs, out_path) -> int:
    rows = []
    try:
        for cfg in cfgs:
            rows.extend(run_experiment(cfg))
    except DivergenceError as e:
        rows.extend(e.rows)
        with _open_out(out_path) as out:
            write_csv(rows, out)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DIVERGED
    with _open_out(out_path) as out:
        write_csv(rows, out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mixedfl", description="Mixed federated learning simulator")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one experiment config")
    run.add_argument("config")
    run.add_argument("--seed", type=int, default=None)
    run.add_argument("--out", default=None, help="CSV path (default: config 'output' or stdout)")

    pre = sub.add_parser("preset", help="run a named acceptance preset")
    pre.add_argument("name")
    pre.add_argument("--out", default=None)

    sub.add_parser("list-presets", help="print preset names")

    val = sub.add_parser("validate", help="check a config without running it")
    val.add_argument("config")
    return p


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "list-presets":
            for name in list_presets():
                print(name)
            return 0
        if args.command == "validate":
            cfg = load_config(args.config)
            for w in cfg.warnings:
                print(f"warning: {w}")
            print("ok")
            return 0
        if args.command == "run":
            cfg = load_config(args.config)
            if args.seed is not None:
                cfg = cfg.with_seed(args.seed)
            return _run_all([cfg], args.out or cfg.output)
        if args.command == "preset":
            return _run_all(preset_configs(args.name), args.out)
    except (ConfigError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    return 1


if __name__ == "__main__":
    sys.exit(main())
