"""Command line entry point.

Usage:
    spinlearn <experiment> --config cfg.json [--seed N] [--out PATH]
              [--format csv|json] [--no-figures]

The experiment name is one of sample, invert-audit, learn, influence,
anticonc, sweep, generate. The config file is JSON; --seed and --out override
the config's "seed" and "out" entries. Exit status is 0 exactly when every
runtime invariant of the experiment passed.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .harness import _RUNNERS, emit_report, run_experiment

__all__ = ["main", "build_parser"]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spinlearn",
        description="sampler, inverter, and regression experiments on spin models")
    sub = parser.add_subparsers(dest="experiment", required=True)
    for name in _RUNNERS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--config", required=True, help="path to a JSON config")
        p.add_argument("--seed", type=int, default=None,
                       help="master seed (overrides the config)")
        p.add_argument("--out", default=None,
                       help="output directory, or a report file path ending "
                            "in .csv or .json")
        p.add_argument("--format", choices=("csv", "json"), default="csv",
                       help="report serialization (default csv)")
        p.add_argument("--no-figures", action="store_true",
                       help="skip figure rendering")
    return parser


def _resolve_out(arg, config, experiment, fmt):
    raw = arg if arg is not None else config.get("out", "spinlearn_out")
    raw = Path(raw)
    if raw.suffix in (".csv", ".json"):
        return raw.parent if str(raw.parent) else Path("."), raw
    return raw, raw / f"{experiment.replace('-', '_')}.{fmt}"


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    config = json.loads(Path(args.config).read_text())
    config["experiment"] = args.experiment
    if args.seed is not None:
        config["seed"] = args.seed
    out_dir, report_path = _resolve_out(args.out, config, args.experiment,
                                        args.format)
    out_dir.mkdir(parents=True, exist_ok=True)
    if args.experiment == "generate" and not Path(
            config.get("out_model", "")).is_absolute():
        config["out_model"] = str(out_dir / config.get("out_model", "model.json"))

    result = run_experiment(config)
    emit_report(result.records, report_path, fmt=args.format)
    print(f"report: {report_path}")
    if result.extra:
        extra_path = out_dir / f"{args.experiment.replace('-', '_')}_extra.json"
        extra_path.write_text(json.dumps(result.extra, indent=1, default=str)
                              + "\n")
        print(f"extra: {extra_path}")
    if not args.no_figures:
        for fname, render in result.figures:
            print(f"figure: {render(str(out_dir / fname))}")
    for name, ok, detail in result.invariants:
        print(f"invariant {name}: {'PASS' if ok else 'FAIL'} ({detail})")
    return 0 if result.invariants_ok else 1


if __name__ == "__main__":
    sys.exit(main())
