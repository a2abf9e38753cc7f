"""Per-subcarrier speed extraction.

Coarse stage: group thresholded peaks into harmonic families, lowest peak
first, one family per machine. Fine stage: refine the fundamental bin using
the ratio of its magnitude to its larger neighbour's.

For a rectangular window the leakage magnitude of a tone at offset ``m``
bins is ``T_d |sin(pi m)| / (pi |m|)``. The two bins bracketing the tone
share ``|sin(pi m)|``, so their magnitudes are inversely proportional to
their distances from the tone and ``A_f / (A_c + A_f)`` is exactly the
distance from ``f_c`` to the tone.

That holds for a lone tone. With several machines on one subcarrier each
ratio is biased by the others' leakage (roughly 19/D rpm for a machine D Hz
away), so estimates from the same spectrum are refined jointly by
subtracting every other spectral line before taking the ratio.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence

import numpy as np
from scipy.optimize import least_squares

from .spectrum import Peak, PeakSet, Spectrum, dirichlet_kernel, locate_peaks

COARSE_ONLY = "coarse_only"
FINE = "fine"


def rpm_from_doppler(delta_f: float, l: int) -> float:
    if l < 1:
        raise ValueError(f"topological charge must be >= 1, got {l}")
    return 60.0 * delta_f / l


def doppler_from_rotation(omega: float, l: int) -> float:
    if l < 0:
        raise ValueError(f"topological charge must be >= 0, got {l}")
    return omega * l / (2.0 * math.pi)


def harmonic_tolerance(k: int) -> int:
    """Allowed distance in bins between a k-th harmonic peak and k * fundamental."""
    return max(1, math.ceil(k / 2))


def _round_half_up(x: float) -> int:
    return math.floor(x + 0.5)


@dataclass
class HarmonicFamily:
    fundamental_bin: int
    member_bins: List[int]
    member_magnitudes: List[float]
    harmonic_indices: List[int] = field(default_factory=list)
    low_confidence: bool = False
    misfit: float = 0.0

    @property
    def fundamental_peak(self) -> Optional[int]:
        """Bin of the member peak taken as harmonic 1, if any."""
        for b, k in zip(self.member_bins, self.harmonic_indices):
            if k == 1:
                return b
        return None

    @property
    def fundamental_present(self) -> bool:
        return self.fundamental_peak is not None


@dataclass
class SpeedEstimate:
    machine_index: int
    subcarrier_index: int
    coarse_hz: float
    fine_hz: float
    rpm: float
    stage: str
    topological_charge: int = 1
    low_confidence: bool = False


def peak_interval(p: Peak, slack: float = 0.5, refine: Optional[float] = 0.25):
    """Range (in bins) that should contain the tone behind peak ``p``.

    ``+/- refine`` around the leakage-ratio position when the peak carries
    its neighbour's magnitude, else the rounding cell ``bin +/- slack``.
    The refined range may poke out of the cell: a tone just past a half bin
    can peak on the far side when other tones leak into it.
    ``refine=None`` always gives the cell.
    """
    if refine is None or p.neighbor_bin is None or p.magnitude + p.neighbor_magnitude <= 0:
        return p.bin - slack, p.bin + slack
    centre = p.bin + (p.neighbor_bin - p.bin) * p.neighbor_magnitude / (
        p.magnitude + p.neighbor_magnitude)
    return centre - refine, centre + refine


def _misfit(members, slack: float, refine: Optional[float]) -> float:
    """Worst distance (bins) between a member's tone and k times the
    least-squares fundamental."""
    centres = [sum(peak_interval(p, slack, refine)) / 2 for p, _ in members]
    ks = [k for _, k in members]
    f = sum(k * c for k, c in zip(ks, centres)) / sum(k * k for k in ks)
    return max(abs(c - k * f) for k, c in zip(ks, centres))


def _family_for(lowest: Peak, peaks: Sequence[Peak], j: int, k_max: int,
                slack: float, refine: Optional[float]) -> Optional[HarmonicFamily]:
    """Family formed by treating ``lowest`` as the j-th harmonic.

    A peak whose tone lies in ``[a, b]`` bins and is the k-th harmonic pins
    the fundamental to ``[a / k, b / k]``; a peak joins only if that
    interval still intersects the running one.
    """
    a, b = peak_interval(lowest, slack, refine)
    lo, hi = a / j, b / j
    if hi < 1.0:
        return None
    # rounding cells, intersected alongside, only to place the fundamental
    clo, chi = (lowest.bin - slack) / j, (lowest.bin + slack) / j
    members = [(lowest, j)]
    used = {j}
    for p in peaks:
        if p.bin <= lowest.bin:
            continue
        k = _round_half_up(p.bin / ((lo + hi) / 2))
        if k < 1 or k > k_max or k in used:
            continue
        a, b = peak_interval(p, slack, refine)
        nlo, nhi = max(lo, a / k), min(hi, b / k)
        if nlo <= nhi:
            lo, hi = nlo, nhi
            clo, chi = max(clo, (p.bin - slack) / k), min(chi, (p.bin + slack) / k)
            members.append((p, k))
            used.add(k)
    # For odd k every half-integer fundamental maps onto a cell edge of
    # harmonic k, so cells holding an odd harmonic never straddle a half bin
    # and their rounded centre is the rounded true fundamental. Leakage can
    # push a peak off its cell; then only the refined range is left.
    centre = (clo + chi) / 2 if clo <= chi else (lo + hi) / 2
    fundamental = max(1, _round_half_up(centre))
    members = [(p, k) for p, k in members
               if abs(p.bin - k * fundamental) <= harmonic_tolerance(k)]
    if not members:
        return None
    members.sort(key=lambda pk: pk[0].bin)
    return HarmonicFamily(
        fundamental_bin=fundamental,
        member_bins=[p.bin for p, _ in members],
        member_magnitudes=[p.magnitude for p, _ in members],
        harmonic_indices=[k for _, k in members],
        misfit=_misfit(members, slack, refine),
    )


def best_family(peaks: Sequence[Peak], k_max: int = 8, min_harmonics: int = 2,
                slack: float = 0.5, reserve: int = 0, refine: Optional[float] = 0.25,
                fit_floor: float = 0.02) -> Optional[HarmonicFamily]:
    """Largest consistent harmonic family anchored on the lowest peak.

    The lowest peak is tried as harmonic 1..k_max of an unknown
    fundamental. The hypothesis explaining the most peaks wins; ties go to
    the larger fundamental, so with the fundamental present this is the
    lowest-peak rule, and with it faded it is the common factor of the
    surviving harmonics. A smaller fundamental takes a tie only when its
    members line up better by more than ``fit_floor`` bins (roughly the
    leakage error of a peak position): integer bins alone cannot tell
    harmonics 4 and 7 of 5.64 Hz from harmonics 3 and 5 of 7.8 Hz.

    A faded-fundamental hypothesis (j > 1) must leave at least ``reserve``
    peaks for the machines still to be found: peaks at 10, 12, 14 Hz are
    either three machines or harmonics 5-7 of one, and the expected machine
    count is the only thing that tells them apart.
    """
    if not peaks:
        return None
    lowest = peaks[0]
    best = None
    for j in range(1, k_max + 1):
        fam = _family_for(lowest, peaks, j, k_max, slack, refine)
        if fam is None or len(fam.member_bins) < min_harmonics:
            continue
        if lowest.bin not in fam.member_bins:
            continue
        if j > 1 and len(peaks) - len(fam.member_bins) < reserve:
            continue
        if (best is None or len(fam.member_bins) > len(best.member_bins)
                or (len(fam.member_bins) == len(best.member_bins)
                    and fam.misfit < best.misfit - fit_floor)):
            best = fam
    return best


def coarse_estimate(peaks: PeakSet, machine_count: int, k_max: int = 8,
                    min_harmonics: int = 2, slack: float = 0.5,
                    refine: Optional[float] = 0.25) -> List[HarmonicFamily]:
    """Split ``peaks`` into at most ``machine_count`` harmonic families.

    Starting from the lowest remaining peak, form its family, remove the
    members and repeat. Peaks that cannot anchor a family of
    ``min_harmonics`` members are set aside; if fewer than
    ``machine_count`` families result, the set-aside peaks (lowest first)
    are promoted to single-member families flagged ``low_confidence``.

    Harmonic membership uses each peak's rounding cell (``slack`` bins),
    narrowed by its leakage-ratio position to ``refine`` bins when the
    peak carries neighbour magnitudes (see :func:`peak_interval`).
    """
    if machine_count < 1:
        raise ValueError(f"machine_count must be >= 1, got {machine_count}")
    remaining = sorted(peaks.peaks, key=lambda p: p.bin)
    families: List[HarmonicFamily] = []
    skipped: List[Peak] = []
    while remaining and len(families) < machine_count:
        reserve = machine_count - len(families) - 1
        fam = best_family(remaining, k_max, min_harmonics, slack, reserve, refine)
        if fam is None:
            skipped.append(remaining.pop(0))
            continue
        families.append(fam)
        taken = set(fam.member_bins)
        remaining = [p for p in remaining if p.bin not in taken]
    for p in skipped:
        if len(families) >= machine_count:
            break
        families.append(HarmonicFamily(p.bin, [p.bin], [p.magnitude], [1],
                                       low_confidence=True))
    return families


def fine_estimate(spectrum: Spectrum, family: HarmonicFamily, l: int = 1,
                  enabled: bool = True) -> SpeedEstimate:
    """Sub-bin refinement of ``family``'s fundamental.

    When only one neighbour bin exists (fundamental in bin 1, DC is not
    part of the spectrum) that neighbour is used. Falls back to a
    coarse-only estimate when no member is harmonic 1 (faded fundamental),
    when refinement is disabled, or when both magnitudes are zero.
    """
    fc = family.fundamental_bin
    bw = spectrum.bin_width
    coarse = fc * bw

    def coarse_only():
        return SpeedEstimate(0, spectrum.subcarrier_index, coarse, coarse,
                             rpm_from_doppler(coarse, l), COARSE_ONLY, l,
                             family.low_confidence)

    if not enabled or not family.fundamental_present:
        return coarse_only()
    # the ratio is taken around the actual local maximum, which can sit one
    # bin off the rounded fundamental when the tone is near a half bin; the
    # estimate's coarse bin follows it
    fc = family.fundamental_peak
    if not 1 <= fc <= spectrum.max_bin:
        return coarse_only()
    coarse = fc * bw
    a_c = spectrum.at(fc)
    lower = spectrum.at(fc - 1) if fc - 1 >= 1 else None
    upper = spectrum.at(fc + 1) if fc + 1 <= spectrum.max_bin else None
    if lower is None and upper is None:
        return coarse_only()
    if lower is None or (upper is not None and upper >= lower):
        direction, a_f = 1, upper
    else:
        direction, a_f = -1, lower
    if a_c + a_f == 0:
        return coarse_only()
    delta = min(a_f / (a_c + a_f), 0.5)
    fine = (fc + direction * delta) * bw
    return SpeedEstimate(0, spectrum.subcarrier_index, coarse, fine,
                         rpm_from_doppler(fine, l), FINE, l, family.low_confidence)


def _tone_offset(y: np.ndarray) -> float:
    """Signed offset of a lone tone from the middle of three complex bins.

    For a rectangular window ``X[c +/- 1] / X[c] = -d / (+/-1 - d)``, so
    ``Re(X[c-1]/X[c]) - Re(X[c+1]/X[c])`` has the sign of ``d``. That picks
    the side robustly when the tone is nearly on a bin and the two
    neighbour magnitudes are close; the size still comes from the
    magnitude ratio.
    """
    lo, c, hi = y
    if c == 0:
        return 0.0
    up = (lo / c).real >= (hi / c).real
    a_c = abs(c)
    a_f = abs(hi) if up else abs(lo)
    if a_c + a_f == 0:
        return 0.0
    d = min(a_f / (a_c + a_f), 0.5)
    return d if up else -d


def cancel_leakage(spectrum: Spectrum, positions: Sequence[float], l: int = 1,
                   k_max: int = 8, iterations: int = 8) -> List[float]:
    """Jointly refine several tone positions (in bins) on one spectrum.

    Each machine contributes lines at ``h / l`` times its Doppler position,
    ``h = 0 .. l * k_max``. Complex amplitudes of all lines are fitted by
    least squares around the current positions; each fundamental is then
    re-estimated from bins with every other line subtracted, and the
    positions are finally polished by a direct least-squares fit. A lone
    tone comes out at the exact position the two-bin ratio approximates.
    """
    full = spectrum.full_bins
    if full is None:
        raise ValueError("spectrum carries no complex bins")
    n = len(full)
    td = spectrum.window_duration
    nu = [float(p) for p in positions]
    for _ in range(iterations):
        owner, harmonic, pos = [], [], []
        for i, v in enumerate(nu):
            for h in range(0, l * k_max + 1):
                if h * v / l < n / 2 - 1:
                    owner.append(i)
                    harmonic.append(h)
                    pos.append(h * v / l)
        owner, harmonic, pos = np.array(owner), np.array(harmonic), np.array(pos)
        near = np.round(pos).astype(int)[:, None] + np.array([-1, 0, 1])
        bins = np.unique(near % n)
        basis = dirichlet_kernel(bins[:, None] - pos[None, :], n, td)
        amps = np.linalg.lstsq(basis, full[bins], rcond=None)[0]
        updated = []
        for i, v in enumerate(nu):
            c0 = min(max(int(round(v)), 2), spectrum.max_bin - 1)
            local = np.arange(c0 - 2, c0 + 3)
            others = np.where((owner == i) & (harmonic == l), 0.0, amps)
            y = full[local % n] - dirichlet_kernel(local[:, None] - pos[None, :], n, td) @ others
            k = 1 + int(np.argmax(np.abs(y[1:4])))
            # every machine's DC line is fitted and subtracted too, so the
            # residual DC bin holds only this tone's leakage and is usable
            updated.append(int(local[k]) + _tone_offset(y[k - 1:k + 2]))
        done = max(abs(a - b) for a, b in zip(updated, nu)) < 1e-9
        nu = updated
        if done:
            break
    return _polish(full, nu, l, k_max, td)


def _line_positions(nu, l, k_max, n):
    """DC once, then harmonics h = 1 .. l * k_max of each machine, in bins."""
    pos = [0.0]
    for v in nu:
        pos += [h * v / l for h in range(1, l * k_max + 1) if h * v / l < n / 2 - 1]
    return np.array(pos)


def _polish(full: np.ndarray, nu: List[float], l: int, k_max: int, td: float) -> List[float]:
    """Least-squares positions of all machines at once, amplitudes solved exactly.

    The alternating loop in :func:`cancel_leakage` crawls when a tone's own
    lines overlap (a fundamental one bin above DC shares bins with its DC
    and second-harmonic lines); fitting the positions directly does not.
    Kept only if it lowers the residual and moves no tone by a bin or more.
    """
    n = len(full)
    pos = _line_positions(nu, l, k_max, n)
    bins = np.unique((np.round(pos).astype(int)[:, None] + np.arange(-2, 3)) % n)
    y = full[bins]
    if not np.any(y):
        return list(nu)
    y = y / np.abs(y).max()  # scale-free, so the optimiser's path does not depend on gain

    def residual(v):
        basis = dirichlet_kernel(bins[:, None] - _line_positions(v, l, k_max, n)[None, :], n, td)
        r = y - basis @ np.linalg.lstsq(basis, y, rcond=None)[0]
        return np.concatenate([r.real, r.imag])

    start = np.asarray(nu, dtype=float)
    if any(len(_line_positions([v], l, k_max, n)) != len(_line_positions([v + 1], l, k_max, n))
           for v in start):
        return list(nu)  # a line sits at the Nyquist cut-off; keep the loop's answer
    try:
        fit = least_squares(residual, start, x_scale=1.0, xtol=1e-12, ftol=1e-12, gtol=1e-12)
    except (ValueError, np.linalg.LinAlgError):
        return list(nu)
    if (np.abs(fit.x - start).max() < 1.0
            and np.sum(fit.fun ** 2) <= np.sum(residual(start) ** 2)):
        return [float(v) for v in fit.x]
    return list(nu)


def extract_speeds(spectrum: Spectrum, machine_count: int, threshold: float, l: int = 1,
                   fine: bool = True, k_max: int = 8, min_harmonics: int = 2,
                   slack: float = 0.5, refine: Optional[float] = 0.25,
                   leakage_cancel: bool = True) -> List[SpeedEstimate]:
    """Peaks -> harmonic families -> fine estimates, sorted by rpm.

    With two or more fine estimates and ``leakage_cancel`` set, they are
    refined together by :func:`cancel_leakage` so that each machine's
    ratio is not biased by the others' leakage.
    """
    if machine_count < 1:
        raise ValueError(f"machine_count must be >= 1, got {machine_count}")
    if l < 1:
        raise ValueError(f"topological charge must be >= 1, got {l}")
    peaks = locate_peaks(spectrum, threshold)
    families = coarse_estimate(peaks, machine_count, k_max, min_harmonics, slack, refine)
    estimates = [fine_estimate(spectrum, f, l, enabled=fine) for f in families]
    refined = [i for i, e in enumerate(estimates) if e.stage == FINE]
    if leakage_cancel and len(refined) >= 2 and spectrum.full_bins is not None:
        bw = spectrum.bin_width
        pos = cancel_leakage(spectrum, [estimates[i].fine_hz / bw for i in refined], l, k_max)
        for i, p in zip(refined, pos):
            coarse = estimates[i].coarse_hz
            if abs(p * bw - coarse) >= bw:
                # the joint fit moved the tone past the next bin; re-anchor
                coarse = _round_half_up(p) * bw
            estimates[i] = replace(estimates[i], coarse_hz=coarse, fine_hz=p * bw,
                                   rpm=rpm_from_doppler(p * bw, l))
    estimates.sort(key=lambda e: e.rpm)
    for i, e in enumerate(estimates):
        e.machine_index = i
    return estimates
