"""Command-line entry point: ``qcapnet <command> [options]``."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import ConfigError, QcapError
from .pipeline import ExperimentConfig, OutputDir, cmd_evaluate, cmd_sample, cmd_sbm, cmd_simulate, cmd_train
from .presets import PRESETS, SCALES


def _common(p, config=True):
    if config:
        p.add_argument("--config", required=True, help="experiment config (JSON)")
    p.add_argument("--seed", type=int, help="master seed (overrides the config)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--jobs", type=int, default=1, help="worker processes for labelling")
    p.add_argument("--format", choices=("csv", "jsonl"), default="csv", help="per-circuit output format")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qcapnet", description="Capability-function datasets and models for mirror circuits.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (("sample", "sample mirror circuits and write a manifest"),
                       ("simulate", "label circuits and write dataset files"),
                       ("train", "fit a model on a dataset and report on its test split"),
                       ("sbm", "score a second measurement pass against the first")):
        _common(sub.add_parser(name, help=text))
    ev = sub.add_parser("evaluate", help="score a saved model on a dataset")
    ev.add_argument("--model", required=True)
    ev.add_argument("--dataset", required=True)
    ev.add_argument("--split", choices=("train", "validate", "test", "all"), default="test")
    _common(ev, config=False)
    for name, fn in PRESETS.items():
        p = sub.add_parser(name, help=fn.__doc__.splitlines()[0] if fn.__doc__ else name)
        _common(p, config=False)
        p.add_argument("--scale", choices=SCALES, default="desk")
    return parser


def _load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config)
    data = cfg.to_dict()
    if args.seed is not None:
        data["seed"] = args.seed
    if args.out is not None:
        data["out"] = args.out
    cfg = ExperimentConfig.from_dict(data, cfg.base_dir)
    if args.out is None:
        cfg.out = str(cfg.resolve(cfg.out))
    return cfg


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.jobs < 1:
        raise ConfigError("--jobs must be at least 1")
    if args.command == "evaluate":
        with OutputDir(args.out or Path(args.model).parent) as out:
            report = cmd_evaluate(args.model, args.dataset, out, args.format, args.split)
        print(json.dumps({"d_kl": report.d_kl, "d_l1": report.d_l1, "pearson_r": report.pearson_r,
                          "out_of_distribution": report.extra["out_of_distribution"]}))
        return 0
    if args.command in PRESETS:
        with OutputDir(args.out or args.command) as out:
            summary = PRESETS[args.command](out, args.seed or 0, args.scale, args.jobs, args.format)
        for row in summary["rows"]:
            print(f"{row['label']}\t{row['model']}\td_L1={row['d_l1']:.5f}")
        return 0
    cfg = _load_config(args)
    with OutputDir(cfg.out) as out:
        if args.command == "sample":
            print(json.dumps(cmd_sample(cfg, out), sort_keys=True))
        elif args.command == "simulate":
            print(json.dumps(cmd_simulate(cfg, out, args.jobs), sort_keys=True))
        else:
            fn = cmd_train if args.command == "train" else cmd_sbm
            report = fn(cfg, out, args.format)
            print(json.dumps({"d_kl": report.d_kl, "d_l1": report.d_l1, "pearson_r": report.pearson_r}))
    return 0


def main(argv=None) -> int:
    try:
        return run(argv)
    except QcapError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
