"""Command-line entry point: ``ssil {generate,leverage,train,compare,report}``."""
from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from .experiment import (ExperimentConfig, _parse_value, cmd_compare, cmd_generate, cmd_leverage, cmd_train, load_config,
                         save_config, summarize_run)


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key = value config file")
    for f in dataclasses.fields(ExperimentConfig):
        if f.name == "schema_version":
            continue
        flag = "--" + f.name.replace("_", "-")
        kind = type(f.default)
        if kind is bool:
            p.add_argument(flag, dest=f.name, help=f.metadata.get("help"), default=None,
                           type=lambda s: _parse_value(s, False))
        elif kind is tuple:
            p.add_argument(flag, dest=f.name, help=f.metadata.get("help"), default=None,
                           type=lambda s: tuple(x.strip() for x in s.split(",") if x.strip()))
        else:
            p.add_argument(flag, dest=f.name, type=kind, default=None, help=f.metadata.get("help"))


def config_from_args(args) -> ExperimentConfig:
    names = [f.name for f in dataclasses.fields(ExperimentConfig) if f.name != "schema_version"]
    overrides = {n: getattr(args, n) for n in names if getattr(args, n, None) is not None}
    if args.config:
        return load_config(args.config, **overrides)
    return ExperimentConfig(**overrides)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ssil", description="Semi-supervised imitation learning experiments")
    sub = ap.add_subparsers(dest="verb", required=True)
    for verb, help_text in (("generate", "record labeled expert pairs and the unlabeled pool"),
                            ("leverage", "score the unlabeled pool and write .lev plus a tier CSV"),
                            ("train", "train every seed of one method and write metrics + checkpoints")):
        p = sub.add_parser(verb, help=help_text)
        _add_config_flags(p)
        if verb == "train":
            p.add_argument("--workers", type=int, default=1, help="parallel seed processes")
    p = sub.add_parser("compare", help="collect run reports into one comparison CSV")
    p.add_argument("runs", nargs="+", help="run directories holding report.json")
    p.add_argument("--csv", required=True, help="output table")
    p = sub.add_parser("report", help="summarize one run directory")
    p.add_argument("run", help="run directory")
    p = sub.add_parser("write-config", help="write the default (or overridden) config to a file")
    _add_config_flags(p)
    p.add_argument("path")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.verb == "generate":
            for k, v in cmd_generate(config_from_args(args)).items():
                print(f"{k}: {v}")
        elif args.verb == "leverage":
            for src, m in cmd_leverage(config_from_args(args)).items():
                print(f"{src}\t{m:.4f}")
        elif args.verb == "train":
            cfg = config_from_args(args)
            rep = cmd_train(cfg, args.workers)
            print(f"{cfg.run_name()}: scaled {rep.scaled_mean:.4f} +- {rep.scaled_std:.4f} over {len(rep.final_scores)} seeds")
        elif args.verb == "compare":
            for r in cmd_compare(args.runs, args.csv):
                print(f"{r['method']:>18} {r['labeled_pairs']:>6} {r['scaled_mean']:.4f} {r['scaled_std']:.4f}")
        elif args.verb == "report":
            print(json.dumps(summarize_run(args.run), indent=2))
        elif args.verb == "write-config":
            save_config(config_from_args(args), Path(args.path))
    except (FileNotFoundError, ValueError, RuntimeError) as exc:
        print(f"ssil {args.verb}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
