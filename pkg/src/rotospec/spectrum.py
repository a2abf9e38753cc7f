"""Rectangular-window DFT magnitudes and thresholded peak picking."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, NamedTuple, Optional

import numpy as np

from .signal_model import BasebandWindow


@dataclass
class Spectrum:
    """Magnitude spectrum over positive integer bins ``1..max_bin``.

    ``magnitudes[i]`` belongs to bin ``i + 1``; use :meth:`at` for bin
    lookups. A unit complex tone sitting exactly on a bin reads
    ``window_duration`` there. ``full_bins`` keeps every complex DFT bin
    (FFT order, DC first) with the same scaling.
    """

    magnitudes: np.ndarray
    bin_width: float
    window_duration: float
    subcarrier_index: int = 0
    full_bins: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def full_magnitudes(self) -> Optional[np.ndarray]:
        return None if self.full_bins is None else np.abs(self.full_bins)

    @property
    def max_bin(self) -> int:
        return len(self.magnitudes)

    def at(self, b: int) -> float:
        if not 1 <= b <= self.max_bin:
            raise IndexError(f"bin {b} outside 1..{self.max_bin}")
        return float(self.magnitudes[b - 1])

    def frequency(self, b: float) -> float:
        return b * self.bin_width

    def scaled(self, factor: float) -> "Spectrum":
        full = None if self.full_bins is None else self.full_bins * factor
        return Spectrum(self.magnitudes * factor, self.bin_width, self.window_duration,
                        self.subcarrier_index, full)


def dft_spectrum(window: BasebandWindow, window_duration: float) -> Spectrum:
    n = len(window)
    expected = window.sample_rate * window_duration
    if abs(n - expected) > 1e-9 * max(1.0, expected):
        raise ValueError(
            f"window has {n} samples, expected {expected:g} "
            f"({window.sample_rate:g} Hz x {window_duration:g} s)")
    full = np.fft.fft(window.samples) * (window_duration / n)
    max_bin = n // 2
    return Spectrum(np.abs(full[1:max_bin + 1]), 1.0 / window_duration, window_duration,
                    window.subcarrier_index, full)


def leakage_magnitude(offset_bins, window_duration: float = 1.0):
    """Continuous-time leakage |y| of a unit tone ``offset_bins`` away from a bin.

    ``T_d * |sin(pi m)| / (pi |m|)``, equal to ``T_d`` at ``m = 0``.
    """
    m = np.asarray(offset_bins, dtype=float)
    return window_duration * np.abs(np.sinc(m))


def dirichlet_kernel(offset_bins, n: int, window_duration: float = 1.0):
    """Complex DFT value, ``offset_bins`` away, of a unit tone over ``n`` samples.

    Same scaling as :func:`dft_spectrum`. Its magnitude is
    ``T_d |sin(pi m)| / (n |sin(pi m / n)|)``, which tends to
    :func:`leakage_magnitude` as ``n`` grows.
    """
    m = np.asarray(offset_bins, dtype=float)
    s = np.sin(np.pi * m / n)
    on_grid = np.abs(s) < 1e-12
    safe_m = np.where(on_grid, 0.5, m)
    val = (np.exp(-1j * np.pi * safe_m * (n - 1) / n) * np.sin(np.pi * safe_m)
           / np.sin(np.pi * safe_m / n))
    # m a multiple of n: every sample adds in phase
    return np.where(on_grid, n, val) * (window_duration / n)


class Peak(NamedTuple):
    bin: int
    magnitude: float
    neighbor_bin: Optional[int]
    neighbor_magnitude: float


@dataclass
class PeakSet:
    peaks: List[Peak]
    threshold: float

    @property
    def bins(self) -> List[int]:
        return [p.bin for p in self.peaks]

    def __len__(self):
        return len(self.peaks)

    def __bool__(self):
        return bool(self.peaks)

    def without(self, bins) -> "PeakSet":
        drop = set(bins)
        return PeakSet([p for p in self.peaks if p.bin not in drop], self.threshold)


def locate_peaks(spectrum: Spectrum, threshold: float) -> PeakSet:
    """Strict local maxima at or above ``threshold``.

    Edge bins are compared with their single neighbour. Each peak also
    records its larger adjacent bin for the fine estimator.
    """
    if not threshold > 0:
        raise ValueError(f"threshold must be > 0, got {threshold}")
    mag = spectrum.magnitudes
    n = len(mag)
    if n == 0:
        return PeakSet([], threshold)
    left = np.full(n, -np.inf)
    right = np.full(n, -np.inf)
    left[1:] = mag[:-1]
    right[:-1] = mag[1:]
    hits = np.flatnonzero((mag > left) & (mag > right) & (mag >= threshold))
    peaks = []
    for i in hits:
        lo = mag[i - 1] if i > 0 else -math.inf
        hi = mag[i + 1] if i < n - 1 else -math.inf
        if hi == -math.inf and lo == -math.inf:
            nb, nm = None, 0.0
        elif hi >= lo:
            nb, nm = int(i) + 2, float(hi)
        else:
            nb, nm = int(i), float(lo)
        peaks.append(Peak(int(i) + 1, float(mag[i]), nb, nm))
    return PeakSet(peaks, threshold)
