"""Run builtin scenarios, write one CSV per scenario and print summaries.

    python scripts/run_builtins.py [--out results] [--trials N] [name ...]
"""

import argparse
import time
from dataclasses import replace
from pathlib import Path

from rotospec.config_io import write_results
from rotospec.harness import BUILTINS, builtin, run_scenario, summarize


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("names", nargs="*", help="builtins to run (default: all)")
    p.add_argument("--out", type=Path, default=Path("results"))
    p.add_argument("--trials", type=int, help="override trials per sweep point")
    args = p.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)
    for name in args.names or list(BUILTINS):
        sc = builtin(name)
        if args.trials:
            sc = replace(sc, trials=args.trials)
        t0 = time.perf_counter()
        results = run_scenario(sc)
        elapsed = time.perf_counter() - t0
        dest = write_results(results, "csv", args.out / f"{name}.csv")
        print(f"== {name} ({elapsed:.1f} s) -> {dest}")
        for row in summarize(results):
            point = "" if row["sweep_value"] is None else f"{row['sweep_param']}={row['sweep_value']:g} "
            print(f"  {point}machine {row['machine']}: median {row['median_abs_error_rpm']:.3f} rpm "
                  f"({row['median_pct_error']:.4f} %), max {row['max_abs_error_rpm']:.3f} rpm, "
                  f"LoC ratio {row['mean_loc_ratio']:.3f}, "
                  f"missed {row['detection_failures']}/{row['trials']}")


if __name__ == "__main__":
    main()
