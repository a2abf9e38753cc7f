"""Scenario runner: synthesize every subcarrier, extract, fuse, score.

Seeding: every trial draws from ``SeedSequence([rng_seed, noise.rng_seed,
trial, stream])`` where ``stream`` is ``1 + subcarrier`` for per-subcarrier
noise and ``0`` for choosing which subcarriers a narrowband disturbance
hits. The sweep value is deliberately not mixed in, so every sweep point
sees the same noise realisations (common random numbers).
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .aggregation import aggregate_all
from .signal_model import (MachineSpec, NoiseSpec, SubcarrierPlan, BasebandWindow,
                           awgn, inject_narrowband, noise_power_for, rpm_to_rad_s,
                           synthesize_clean)
from .spectrum import dft_spectrum
from .speed_extraction import extract_speeds

SWEEP_PARAMETERS = ("snr_db", "subcarrier_count", "window_duration_s", "threshold_linear",
                    "rotation_speed_rpm")


def dbm_to_threshold(dbm: float) -> float:
    """Linear magnitude threshold for a dBm setting, 0 dBm == magnitude 1."""
    return 10.0 ** (dbm / 20.0)


@dataclass
class Sweep:
    parameter: str
    values: List[float]

    def __post_init__(self):
        if self.parameter not in SWEEP_PARAMETERS:
            raise ValueError(f"unknown sweep parameter {self.parameter!r}; "
                             f"expected one of {', '.join(SWEEP_PARAMETERS)}")
        if not self.values:
            raise ValueError("sweep values must be non-empty")


@dataclass
class Scenario:
    """One experiment.

    ``machines`` are the scored targets; ``interferers`` are synthesized
    into the signal but never scored. A ``rotation_speed_rpm`` sweep sets the
    first target's speed in rpm.

    ``threshold`` is a tone amplitude (1.0 == 0 dBm). Spectrum magnitudes
    grow with the window, so peaks are compared against
    ``threshold * window_duration``.
    """

    name: str
    machines: List[MachineSpec]
    plan: SubcarrierPlan = field(default_factory=SubcarrierPlan)
    noise: List[NoiseSpec] = field(default_factory=list)
    threshold: float = 0.1
    machine_count: int = 1
    sweep: Optional[Sweep] = None
    trials: int = 1
    rng_seed: int = 0
    interferers: List[MachineSpec] = field(default_factory=list)
    fine_enabled: bool = True
    k_max: int = 8
    min_harmonics: int = 2
    leakage_cancel: bool = True

    def __post_init__(self):
        if not self.machines:
            raise ValueError("scenario needs at least one machine")
        if any(not ch.isprintable() for ch in self.name):
            raise ValueError(f"scenario name must be printable text, got {self.name!r}")
        if self.trials < 1:
            raise ValueError(f"trials must be >= 1, got {self.trials}")
        if not self.threshold > 0:
            raise ValueError(f"threshold must be > 0, got {self.threshold}")
        if self.machine_count < 1:
            raise ValueError(f"machine_count must be >= 1, got {self.machine_count}")
        if self.k_max < 1 or self.min_harmonics < 1:
            raise ValueError("k_max and min_harmonics must be >= 1")
        charges = {m.topological_charge for m in self.machines + self.interferers}
        if len(charges) > 1:
            raise ValueError("all machines in a scenario must share one topological charge")

    @property
    def topological_charge(self) -> int:
        return self.machines[0].topological_charge


@dataclass
class TrialResult:
    scenario_name: str
    sweep_param: str
    sweep_value: Optional[float]
    trial: int
    machine: int
    true_rpm: float
    fused_rpm: float
    abs_error_rpm: float
    pct_error: float
    loc: int
    loc_ratio: float
    detection_failed: bool
    wall_time_ms: Optional[float] = None


def apply_sweep(scenario: Scenario, parameter: str, value: float) -> Scenario:
    if parameter == "snr_db":
        noise = [replace(n, snr_db=value) if n.kind == "awgn" else n for n in scenario.noise]
        if not any(n.kind == "awgn" for n in noise):
            noise.append(NoiseSpec("awgn", snr_db=value))
        return replace(scenario, noise=noise)
    if parameter == "subcarrier_count":
        return replace(scenario, plan=replace(scenario.plan, count=int(value)))
    if parameter == "window_duration_s":
        return replace(scenario, plan=replace(scenario.plan, window_duration=value))
    if parameter == "threshold_linear":
        return replace(scenario, threshold=value)
    if parameter == "rotation_speed_rpm":
        first = replace(scenario.machines[0], rotation_speed=rpm_to_rad_s(value))
        return replace(scenario, machines=[first] + list(scenario.machines[1:]))
    raise ValueError(f"unknown sweep parameter {parameter!r}")


def _seed(*words: int) -> int:
    return int(np.random.SeedSequence([int(w) & 0xFFFFFFFFFFFFFFFF for w in words])
               .generate_state(1, np.uint64)[0])


def _affected(noise: NoiseSpec, count: int, rng: np.random.Generator) -> np.ndarray:
    if noise.affected_count is not None:
        k = min(noise.affected_count, count)
    elif noise.affected_fraction is not None:
        k = 0 if noise.affected_fraction == 0 else max(1, round(noise.affected_fraction * count))
    else:
        return np.arange(count)
    return np.sort(rng.choice(count, size=k, replace=False))


def clean_windows(scenario: Scenario) -> List[np.ndarray]:
    """Noise-free samples of every subcarrier; identical for all trials."""
    sources = list(scenario.machines) + list(scenario.interferers)
    return [synthesize_clean(sources, scenario.plan, n) for n in range(scenario.plan.count)]


def trial_windows(scenario: Scenario, trial: int,
                  clean: Optional[List[np.ndarray]] = None) -> List[BasebandWindow]:
    """All N noisy subcarrier windows for one trial."""
    plan = scenario.plan
    if clean is None:
        clean = clean_windows(scenario)
    hit: Dict[int, set] = {}
    for i, nz in enumerate(scenario.noise):
        if nz.kind == "narrowband":
            rng = np.random.default_rng(_seed(scenario.rng_seed, nz.rng_seed, trial, 0, i))
            hit[i] = set(_affected(nz, plan.count, rng).tolist())
    windows = []
    for n in range(plan.count):
        samples = clean[n]
        for i, nz in enumerate(scenario.noise):
            seed = _seed(scenario.rng_seed, nz.rng_seed, trial, 1 + n, i)
            if nz.kind == "awgn":
                power = noise_power_for(clean[n], nz.snr_db)
                samples = samples + awgn(len(samples), power, np.random.default_rng(seed))
        window = BasebandWindow(samples, plan.sample_rate, n)
        for i, nz in enumerate(scenario.noise):
            if nz.kind == "narrowband" and n in hit[i]:
                seed = _seed(scenario.rng_seed, nz.rng_seed, trial, 1 + n, i)
                window = inject_narrowband(window, replace(nz, rng_seed=seed))
        windows.append(window)
    return windows


def _score(scenario: Scenario, reports, sweep_param: str, sweep_value, trial: int,
           wall_ms: Optional[float]) -> List[TrialResult]:
    truth = [m.rpm for m in scenario.machines]
    match: Dict[int, object] = {}
    if reports:
        cost = np.abs(np.array(truth)[:, None] - np.array([r.fused_rpm for r in reports])[None, :])
        rows, cols = linear_sum_assignment(cost)
        match = {int(r): reports[c] for r, c in zip(rows, cols)}
    out = []
    for i, true_rpm in enumerate(truth):
        rep = match.get(i)
        if rep is None:
            out.append(TrialResult(scenario.name, sweep_param, sweep_value, trial, i, true_rpm,
                                   0.0, true_rpm, 100.0, 0, 0.0, True, wall_ms))
            continue
        err = abs(rep.fused_rpm - true_rpm)
        out.append(TrialResult(scenario.name, sweep_param, sweep_value, trial, i, true_rpm,
                               rep.fused_rpm, err, 100.0 * err / true_rpm, rep.loc,
                               rep.loc_ratio, False, wall_ms))
    return out


def run_trial(scenario: Scenario, trial: int, clean: Optional[List[np.ndarray]] = None):
    """Aggregate reports for one trial of an (already swept) scenario."""
    per_sub = []
    td = scenario.plan.window_duration
    for w in trial_windows(scenario, trial, clean):
        spec = dft_spectrum(w, td)
        per_sub.append(extract_speeds(spec, scenario.machine_count, scenario.threshold * td,
                                      scenario.topological_charge, fine=scenario.fine_enabled,
                                      k_max=scenario.k_max,
                                      min_harmonics=scenario.min_harmonics,
                                      leakage_cancel=scenario.leakage_cancel))
    return aggregate_all(per_sub)


def run_scenario(scenario: Scenario, record_timing: bool = False) -> List[TrialResult]:
    """Run every (sweep value, trial) of ``scenario``.

    Results are ordered by sweep value, trial, machine. Wall time per trial
    is recorded only when ``record_timing`` is set, so default output is
    byte-reproducible.
    """
    if scenario.sweep is None:
        points = [("", None, scenario)]
    else:
        p = scenario.sweep.parameter
        points = [(p, v, apply_sweep(scenario, p, v)) for v in scenario.sweep.values]
    results = []
    for param, value, sc in points:
        clean = clean_windows(sc)
        for trial in range(sc.trials):
            t0 = time.perf_counter()
            reports = run_trial(sc, trial, clean)
            wall = (time.perf_counter() - t0) * 1e3 if record_timing else None
            results.extend(_score(sc, reports, param, value, trial, wall))
    return results


def run_coarse_window_sweep(scenario: Scenario, fine_disabled: bool = True,
                            record_timing: bool = False) -> List[TrialResult]:
    if scenario.sweep is None or scenario.sweep.parameter != "window_duration_s":
        raise ValueError("scenario must sweep window_duration_s")
    bad = [v for v in scenario.sweep.values if not 1 <= v <= 30]
    if bad:
        raise ValueError(f"window durations must lie in [1, 30] s, got {bad}")
    return run_scenario(replace(scenario, fine_enabled=not fine_disabled), record_timing)


def run_snr_sweep(scenario: Scenario, thresholds: Sequence[float],
                  record_timing: bool = False) -> List[TrialResult]:
    """SNR sweep repeated per threshold; rows are tagged ``name@thr=<value>``."""
    if scenario.sweep is None or scenario.sweep.parameter != "snr_db":
        raise ValueError("scenario must sweep snr_db")
    if not all(math.isfinite(v) for v in scenario.sweep.values):
        raise ValueError("snr values must be finite")
    results = []
    for thr in thresholds:
        sc = replace(scenario, name=f"{scenario.name}@thr={thr!r}", threshold=thr)
        results.extend(run_scenario(sc, record_timing))
    return results


def summarize(results: Sequence[TrialResult]) -> List[dict]:
    """Per (scenario, sweep value, machine) median/max error and mean LoC ratio."""
    groups: Dict[tuple, List[TrialResult]] = {}
    for r in results:
        groups.setdefault((r.scenario_name, r.sweep_param, r.sweep_value, r.machine), []).append(r)
    rows = []
    for (name, param, value, machine), rs in groups.items():
        err = np.array([r.abs_error_rpm for r in rs])
        pct = np.array([r.pct_error for r in rs])
        rows.append(dict(scenario_name=name, sweep_param=param, sweep_value=value,
                         machine=machine, trials=len(rs),
                         median_abs_error_rpm=float(np.median(err)),
                         max_abs_error_rpm=float(err.max()),
                         median_pct_error=float(np.median(pct)),
                         mean_loc_ratio=float(np.mean([r.loc_ratio for r in rs])),
                         detection_failures=sum(r.detection_failed for r in rs)))
    return rows


# Builtins. Speeds follow the test machines used in the measurement studies:
# stand fan 1227 rpm, USB fan 2242/2303 rpm, axial fan 5676 rpm.

HIGH_THRESHOLD = dbm_to_threshold(-5.0)
LOW_THRESHOLD = dbm_to_threshold(-20.0)
SNR_POINTS = [-10.0, -5.0, 0.0, 5.0, 10.0, 15.0]


def _single_machine() -> Scenario:
    """One fan at 2303 rpm, clean channel, 60 subcarriers."""
    return Scenario("single_machine", [MachineSpec.from_rpm(2303)], trials=3,
                    threshold=LOW_THRESHOLD)


def _three_machines() -> Scenario:
    """Stand fan, USB fan and axial fan together (1227, 2242, 5676 rpm)."""
    machines = [MachineSpec.from_rpm(1227, axial_offset=0.30),
                MachineSpec.from_rpm(2242, axial_offset=0.32),
                MachineSpec.from_rpm(5676, axial_offset=0.28)]
    return Scenario("three_machines", machines, plan=SubcarrierPlan(count=10),
                    machine_count=3, trials=3, threshold=LOW_THRESHOLD)


def _narrowband_sweep() -> Scenario:
    """Strong narrowband clutter on 20% of subcarriers, N swept 1..60."""
    # a moving object: strong 3-tone cluster below the fan's fundamental
    nb = NoiseSpec("narrowband", center_frequency=20.3, bandwidth=5.0, power=10.0,
                   affected_fraction=0.2)
    return Scenario("narrowband_sweep", [MachineSpec.from_rpm(2303)], noise=[nb],
                    sweep=Sweep("subcarrier_count", [1, 5, 15, 30, 60]), trials=20,
                    threshold=LOW_THRESHOLD)


def _awgn_sweep() -> Scenario:
    """2242 rpm under AWGN from -10 to 15 dB SNR, high threshold."""
    return Scenario("awgn_sweep", [MachineSpec.from_rpm(2242)],
                    noise=[NoiseSpec("awgn", snr_db=0.0)],
                    sweep=Sweep("snr_db", list(SNR_POINTS)), trials=100,
                    threshold=HIGH_THRESHOLD)


def _coarse_window_sweep() -> Scenario:
    """Coarse-only estimates while the window grows from 1 s to 30 s."""
    return Scenario("coarse_window_sweep", [MachineSpec.from_rpm(2242)],
                    plan=SubcarrierPlan(count=10), noise=[NoiseSpec("awgn", snr_db=10.0)],
                    sweep=Sweep("window_duration_s", [1.0, 2.0, 5.0, 10.0, 18.0, 30.0]),
                    trials=10, threshold=LOW_THRESHOLD, fine_enabled=False)


def _interferer_similar() -> Scenario:
    """Weak interferer 10 rpm from the target, single-machine search."""
    return Scenario("interferer_similar", [MachineSpec.from_rpm(1227)],
                    interferers=[MachineSpec.from_rpm(1237, reflection_coefficient=0.4,
                                                      axial_offset=0.35)],
                    noise=[NoiseSpec("awgn", snr_db=0.0)],
                    sweep=Sweep("snr_db", list(SNR_POINTS)), trials=10,
                    threshold=HIGH_THRESHOLD)


def _interferer_different() -> Scenario:
    """Weak interferer about 1000 rpm below the target, single-machine search."""
    return Scenario("interferer_different", [MachineSpec.from_rpm(2242)],
                    interferers=[MachineSpec.from_rpm(1227, reflection_coefficient=0.4,
                                                      axial_offset=0.35)],
                    noise=[NoiseSpec("awgn", snr_db=0.0)],
                    sweep=Sweep("snr_db", list(SNR_POINTS)), trials=10,
                    threshold=HIGH_THRESHOLD)


def _interferer_resolved() -> Scenario:
    """Two machines searched for and scored together over an SNR sweep."""
    return Scenario("interferer_resolved",
                    [MachineSpec.from_rpm(1227, axial_offset=0.35), MachineSpec.from_rpm(2242)],
                    noise=[NoiseSpec("awgn", snr_db=0.0)],
                    sweep=Sweep("snr_db", list(SNR_POINTS)), trials=10, machine_count=2,
                    threshold=HIGH_THRESHOLD)


BUILTINS = {
    "single_machine": _single_machine,
    "three_machines": _three_machines,
    "narrowband_sweep": _narrowband_sweep,
    "awgn_sweep": _awgn_sweep,
    "coarse_window_sweep": _coarse_window_sweep,
    "interferer_similar": _interferer_similar,
    "interferer_different": _interferer_different,
    "interferer_resolved": _interferer_resolved,
}


def builtin_description(name: str) -> str:
    return (BUILTINS[name].__doc__ or "").strip().splitlines()[0]


def builtin(name: str) -> Scenario:
    try:
        return BUILTINS[name]()
    except KeyError:
        raise KeyError(f"no builtin scenario {name!r}; "
                       f"available: {', '.join(sorted(BUILTINS))}") from None
