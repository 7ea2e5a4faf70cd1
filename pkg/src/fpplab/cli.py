"""Command line interface.

    fpplab <command> [--config FILE] [--model KIND] [--n N ...] [--samples K]
                     [--set KEY=VALUE ...] [--seed S] [--workers W] [--out DIR] [--resume]
    fpplab report DIR [--plots]

``--set`` takes dotted config paths (``plan.alpha=0.05``, ``model.beta=3``);
values are parsed as YAML scalars. ``FPP_LAB_WORKERS`` sets the default
worker count.
"""
from __future__ import annotations

import argparse
import sys

import yaml

from .config import ConfigError, config_from_dict, default_workers
from .runner import EXIT_USAGE, execute, report

COMMANDS = {"sample": "sample", "concentration": "concentration", "kpz": "kpz",
            "nonrandom": "nonrandom", "corridor": "corridor", "lowertail": "lowertail",
            "tf-tail": "tf_tail", "assumptions": "assumptions", "var-decomp": "var_decomp"}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fpplab",
                                     description="First passage percolation simulation lab")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--config", help="YAML config file")
        p.add_argument("--model", help="model kind (overrides the config)")
        p.add_argument("--n", type=float, nargs="+", help="n grid")
        p.add_argument("--samples", type=int, help="samples per n")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config entry by dotted path")
        p.add_argument("--seed", type=int, help="seed base")
        p.add_argument("--workers", type=int, default=None,
                       help="worker processes (default: $FPP_LAB_WORKERS or 1)")
        p.add_argument("--out", help="output directory")
        p.add_argument("--resume", action="store_true", help="continue an existing log")
    p = sub.add_parser("report", help="summarise finished runs")
    p.add_argument("out", help="run directory or a directory of runs")
    p.add_argument("--plots", action="store_true", help="write PNG plots")
    return parser


def _set_path(data: dict, dotted: str, value):
    keys = dotted.split(".")
    node = data
    for k in keys[:-1]:
        node = node.setdefault(k, {})
        if not isinstance(node, dict):
            raise ConfigError("not a mapping", dotted)
    node[keys[-1]] = value


def config_for(args) -> dict:
    data = {}
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            try:
                data = yaml.safe_load(fh) or {}
            except yaml.YAMLError as exc:
                mark = getattr(exc, "problem_mark", None)
                raise ConfigError(getattr(exc, "problem", str(exc)),
                                  line=mark.line + 1 if mark else None,
                                  column=mark.column + 1 if mark else None) from None
    data["experiment"] = COMMANDS[args.command]
    if args.model:
        _set_path(data, "model.kind", args.model)
    if args.n:
        _set_path(data, "plan.n_grid", args.n)
    if args.samples is not None:
        _set_path(data, "plan.samples_per_n", args.samples)
    for item in args.set:
        key, sep, raw = item.partition("=")
        if not sep:
            raise ConfigError("expected KEY=VALUE", item)
        _set_path(data, key, yaml.safe_load(raw))
    if args.seed is not None:
        data["seed"] = args.seed
    data["workers"] = args.workers if args.workers is not None else data.get(
        "workers", default_workers())
    if args.out:
        data["output_dir"] = args.out
    if args.resume:
        data["resume"] = True
    return data


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "report":
        return report(args.out, plots=args.plots)
    try:
        cfg = config_from_dict(config_for(args))
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return execute(cfg)


if __name__ == "__main__":
    sys.exit(main())
