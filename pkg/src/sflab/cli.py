"""Command-line interface.

    sflab <command> --config <path> [--seed N] [--out <dir>] [--no-figures]

Commands: gen, slice-approx, filter-learn, verify-bounds, precompute,
train, eval. Exit codes: 0 success, 2 config error, 3 data error,
4 training divergence. SFLAB_THREADS caps the worker pool.
"""

from __future__ import annotations

import argparse
import os
import sys

from .config import load_command_config
from .errors import (
    ConfigError,
    DatasetFormatError,
    DivergenceDetected,
    FormatError,
    SflabError,
)
from . import experiments

COMMANDS = (
    "gen",
    "slice-approx",
    "filter-learn",
    "verify-bounds",
    "precompute",
    "train",
    "eval",
)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sflab",
        description="spectral graph filtering laboratory",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="key=value config file")
        p.add_argument("--seed", type=int, default=0, help="base seed")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--no-figures", action="store_true",
                       help="skip figure rendering")
    return parser


def _dispatch(command: str, cfg: dict, out_dir: str, seed: int):
    if command == "gen":
        return experiments.run_gen(cfg, out_dir, seed)
    if command == "slice-approx":
        return experiments.run_slice_approx(cfg, seed)
    if command == "filter-learn":
        return experiments.run_filter_learn(cfg, seed)
    if command == "verify-bounds":
        return experiments.run_verify_bounds(cfg, seed)
    if command == "train":
        return experiments.run_train(cfg, out_dir, seed)
    if command == "precompute":
        return experiments.run_precompute(cfg, out_dir, seed)
    if command == "eval":
        return experiments.run_eval(cfg, seed)
    raise ConfigError(f"unknown command {command!r}")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_command_config(args.command, args.config)
        os.makedirs(args.out, exist_ok=True)
        result = _dispatch(args.command, cfg, args.out, args.seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (DatasetFormatError, FormatError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except DivergenceDetected as exc:
        print(f"divergence: {exc}", file=sys.stderr)
        return 4
    except SflabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    json_path = os.path.join(args.out, "result.json")
    with open(json_path, "w", encoding="utf-8") as fh:
        fh.write(result.to_json())
    csv_text = result.csv_text()
    csv_path = None
    if csv_text:
        csv_path = os.path.join(args.out, "table.csv")
        with open(csv_path, "w", encoding="utf-8") as fh:
            fh.write(csv_text)

    figure_paths = []
    if not args.no_figures:
        from .figures import render_figures

        figure_paths = render_figures(result, args.out)

    for note in result.notes:
        print(f"note: {note}")
    print(f"wrote {json_path}")
    if csv_path:
        print(f"wrote {csv_path}")
    for p in figure_paths:
        print(f"wrote {p}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
