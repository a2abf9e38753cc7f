"""Command line entry point.

    rotospec run <scenario-file> [--seed S] [--trials N] [--out DIR] [--format csv|json]
    rotospec list-builtins
    rotospec gen-config <builtin-name> [--out DIR]

``run`` also accepts a builtin name in place of a file path. Results go to
stdout unless ``--out`` is given, in which case they are written to
``DIR/<scenario-name>.<format>`` and a per-point summary is printed.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import List, Optional

from .config_io import (ConfigError, load_scenario, results_to_csv, results_to_json,
                        serialize_scenario, write_results)
from .harness import BUILTINS, builtin, builtin_description, run_scenario, summarize

log = logging.getLogger("rotospec")

U64_MAX = 2 ** 64 - 1


def _u64(text: str) -> int:
    try:
        value = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= value <= U64_MAX:
        raise argparse.ArgumentTypeError(f"seed must be in [0, 2^64 - 1], got {value}")
    return value


def _positive(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rotospec",
                                description="Rotation speed estimation experiments.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a scenario file (or builtin name)")
    run.add_argument("scenario", help="YAML scenario file, or the name of a builtin")
    run.add_argument("--seed", type=_u64, help="override the scenario rng_seed")
    run.add_argument("--trials", type=_positive, help="override the number of trials")
    run.add_argument("--out", type=Path, help="directory for the results file")
    run.add_argument("--format", choices=("csv", "json"), default="csv")
    run.add_argument("--timing", action="store_true",
                     help="record per-trial wall time (output is then not reproducible)")

    sub.add_parser("list-builtins", help="list builtin scenarios")

    gen = sub.add_parser("gen-config", help="print a builtin scenario as a YAML file")
    gen.add_argument("name")
    gen.add_argument("--out", type=Path, help="directory to write <name>.yaml into")
    return p


def _load(arg: str):
    path = Path(arg)
    if path.exists():
        return load_scenario(path)
    if arg in BUILTINS:
        return builtin(arg)
    raise FileNotFoundError(f"no scenario file or builtin named {arg!r}")


def _cmd_run(args) -> int:
    scenario = _load(args.scenario)
    if args.seed is not None:
        scenario = replace(scenario, rng_seed=args.seed)
    if args.trials is not None:
        scenario = replace(scenario, trials=args.trials)
    log.info("running %s: %d trial(s)", scenario.name, scenario.trials)
    results = run_scenario(scenario, record_timing=args.timing)
    if args.out is None:
        text = results_to_csv(results) if args.format == "csv" else results_to_json(results)
        sys.stdout.write(text)
        return 0
    args.out.mkdir(parents=True, exist_ok=True)
    dest = write_results(results, args.format, args.out / f"{scenario.name}.{args.format}")
    for row in summarize(results):
        value = "" if row["sweep_value"] is None else f" {row['sweep_param']}={row['sweep_value']}"
        print(f"{row['scenario_name']}{value} machine {row['machine']}: "
              f"median error {row['median_abs_error_rpm']:.3f} rpm "
              f"({row['median_pct_error']:.4f}%), max {row['max_abs_error_rpm']:.3f} rpm, "
              f"LoC ratio {row['mean_loc_ratio']:.3f}, "
              f"{row['detection_failures']}/{row['trials']} missed")
    print(f"wrote {dest}")
    return 0


def _cmd_list(args) -> int:
    width = max(len(n) for n in BUILTINS)
    for name in BUILTINS:
        print(f"{name:<{width}}  {builtin_description(name)}")
    return 0


def _cmd_gen(args) -> int:
    text = serialize_scenario(builtin(args.name))
    if args.out is None:
        sys.stdout.write(text)
        return 0
    args.out.mkdir(parents=True, exist_ok=True)
    dest = args.out / f"{args.name}.yaml"
    dest.write_text(text, encoding="utf-8")
    print(f"wrote {dest}")
    return 0


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    handlers = {"run": _cmd_run, "list-builtins": _cmd_list, "gen-config": _cmd_gen}
    try:
        return handlers[args.command](args)
    except ConfigError as e:
        print(f"rotospec: invalid scenario: {e}", file=sys.stderr)
        return 2
    except KeyError as e:
        print(f"rotospec: {e.args[0]}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as e:
        print(f"rotospec: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
