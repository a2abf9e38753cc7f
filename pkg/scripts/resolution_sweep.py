"""Fine and coarse-only error over random speeds at several window lengths.

    python scripts/resolution_sweep.py [--speeds 200] [--subcarriers 60] [--seed 1]
"""

import argparse

import numpy as np

from rotospec.harness import LOW_THRESHOLD, Scenario, Sweep, run_scenario
from rotospec.signal_model import MachineSpec, SubcarrierPlan


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--speeds", type=int, default=200)
    p.add_argument("--subcarriers", type=int, default=60)
    p.add_argument("--seed", type=int, default=1)
    args = p.parse_args()
    speeds = np.random.default_rng(args.seed).uniform(60, 7000, args.speeds).tolist()
    print(f"{'window_s':>8} {'stage':>11} {'median_rpm':>11} {'p95_rpm':>9} {'max_rpm':>9} "
          f"{'bin_rpm':>8}")
    for window in (1.0, 2.0, 5.0, 10.0):
        for fine in (True, False):
            sc = Scenario("resolution", [MachineSpec.from_rpm(speeds[0])],
                          plan=SubcarrierPlan(count=args.subcarriers, window_duration=window),
                          sweep=Sweep("rotation_speed_rpm", speeds), threshold=LOW_THRESHOLD,
                          fine_enabled=fine)
            err = np.array([r.abs_error_rpm for r in run_scenario(sc)])
            print(f"{window:8g} {'fine' if fine else 'coarse':>11} {np.median(err):11.4f} "
                  f"{np.percentile(err, 95):9.4f} {err.max():9.4f} {60 / window:8.1f}")


if __name__ == "__main__":
    main()
