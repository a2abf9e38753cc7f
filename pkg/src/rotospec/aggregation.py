"""Fusing per-subcarrier estimates through a Zone of Convergence.

The zone is +/-60 rpm (one 1 Hz bin at l = 1) around the median estimate.
Estimates inside it are averaged; the rest are outliers. The level of
convergence (LoC) is the in-zone count and its ratio to the contributing
subcarrier count flags configurations that need retuning.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .speed_extraction import SpeedEstimate

ZONE_HALFWIDTH_RPM = 60.0
LOC_RATIO_MIN = 0.95


@dataclass
class AggregateReport:
    machine_index: int
    fused_rpm: float
    loc: int
    loc_ratio: float
    zone_center_rpm: float
    zone_halfwidth_rpm: float
    outlier_subcarriers: List[int]
    reconfigure_flag: bool
    contributing: int


def aggregate(estimates: Sequence[SpeedEstimate],
              halfwidth_rpm: float = ZONE_HALFWIDTH_RPM) -> AggregateReport:
    if not estimates:
        raise ValueError("cannot aggregate an empty list of estimates")
    machine = estimates[0].machine_index
    if any(e.machine_index != machine for e in estimates):
        raise ValueError("all estimates must share machine_index")
    rpm = np.array([e.rpm for e in estimates], dtype=float)
    # sorted so the median and the mean are independent of input order
    center = float(np.median(np.sort(rpm)))
    inside = np.abs(rpm - center) <= halfwidth_rpm
    in_zone = sorted(rpm[inside].tolist())
    # an empty zone can only happen with an even count; fall back to the centre
    fused = math.fsum(in_zone) / len(in_zone) if in_zone else center
    n = len(estimates)
    loc = len(in_zone)
    ratio = loc / n
    outliers = sorted(e.subcarrier_index for e, ok in zip(estimates, inside) if not ok)
    return AggregateReport(machine, fused, loc, ratio, center, halfwidth_rpm, outliers,
                           ratio < LOC_RATIO_MIN, n)


def match_machines(per_subcarrier: Sequence[Sequence[SpeedEstimate]]) -> List[List[SpeedEstimate]]:
    """Group estimates by machine across subcarriers.

    Reference speeds are the per-rank medians over subcarriers that saw the
    most machines. Each subcarrier's estimates are then assigned to the
    references by minimum total rpm distance, which is rank matching when
    estimates are sane and repairs inversions when they are not.
    """
    rows = [sorted(r, key=lambda e: e.rpm) for r in per_subcarrier if r]
    if not rows:
        return []
    width = max(len(r) for r in rows)
    full = np.array([[e.rpm for e in r] for r in rows if len(r) == width])
    refs = np.median(full, axis=0)
    groups: List[List[SpeedEstimate]] = [[] for _ in range(width)]
    for r in rows:
        cost = np.abs(np.array([e.rpm for e in r])[:, None] - refs[None, :])
        est_idx, slot_idx = linear_sum_assignment(cost)
        for i, s in zip(est_idx, slot_idx):
            groups[s].append(r[i])
    return groups


def aggregate_all(per_subcarrier: Sequence[Sequence[SpeedEstimate]],
                  halfwidth_rpm: float = ZONE_HALFWIDTH_RPM) -> List[AggregateReport]:
    """One report per machine slot, slots ordered by ascending reference rpm.

    Fewer reports than machines are returned when no subcarrier detected
    them all. Subcarriers missing a machine do not count toward its LoC.
    """
    reports = []
    for slot, group in enumerate(match_machines(per_subcarrier)):
        if not group:
            continue
        relabelled = [SpeedEstimate(slot, e.subcarrier_index, e.coarse_hz, e.fine_hz, e.rpm,
                                    e.stage, e.topological_charge, e.low_confidence)
                      for e in group]
        reports.append(aggregate(relabelled, halfwidth_rpm))
    return reports
