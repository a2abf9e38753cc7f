"""Synthetic baseband returns from rotating machines illuminated by OAM waves.

Each subcarrier is generated directly at complex baseband. The geometric
phase terms keep the true RF wavenumber of that subcarrier, so the only
time dependence is through the rotation angle ``omega * t``. Harmonics are
never injected by hand; they come out of the ``cos(omega * t)`` path-length
term.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0


def rpm_to_rad_s(rpm: float) -> float:
    return rpm * 2.0 * math.pi / 60.0


def rad_s_to_rpm(omega: float) -> float:
    return 60.0 * omega / (2.0 * math.pi)


@dataclass(frozen=True)
class MachineSpec:
    """One rotating machine.

    Attributes:
        rotation_speed: angular speed in rad/s.
        topological_charge: OAM mode number ``l`` (>= 1).
        reflection_coefficient: reflection magnitude, dimensionless.
        radial_offset: radial distance R between transceiver axis and scatterer (m).
        axial_offset: axial distance D_z (m).
        tx_rx_separation: transmitter/receiver spacing d_r (m).
    """

    rotation_speed: float
    topological_charge: int = 1
    reflection_coefficient: float = 1.0
    radial_offset: float = 0.05
    axial_offset: float = 0.30
    tx_rx_separation: float = 0.001

    def __post_init__(self):
        if not self.rotation_speed > 0:
            raise ValueError(f"rotation_speed must be > 0 rad/s, got {self.rotation_speed}")
        if int(self.topological_charge) != self.topological_charge:
            raise ValueError("topological_charge must be an integer")
        if self.topological_charge == 0:
            raise ValueError(
                "topological_charge l = 0 carries no rotational Doppler shift")
        if self.topological_charge < 0:
            raise ValueError(f"topological_charge must be >= 1, got {self.topological_charge}")
        for name in ("reflection_coefficient", "radial_offset", "axial_offset",
                     "tx_rx_separation"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0, got {getattr(self, name)}")

    @classmethod
    def from_rpm(cls, rpm: float, **kwargs) -> "MachineSpec":
        return cls(rotation_speed=rpm_to_rad_s(rpm), **kwargs)

    @property
    def rpm(self) -> float:
        return rad_s_to_rpm(self.rotation_speed)

    @property
    def doppler_hz(self) -> float:
        """Rotational Doppler shift l * omega / 2pi."""
        return self.topological_charge * self.rotation_speed / (2.0 * math.pi)


@dataclass(frozen=True)
class SubcarrierPlan:
    """Narrowband sensing subcarriers spread evenly across ``total_band``.

    ``sample_rate`` is the complex baseband rate of a single subcarrier.
    """

    count: int = 60
    subcarrier_bandwidth: float = 1e3
    total_band: float = 3e6
    carrier_frequency: float = 5.525e9
    sample_rate: float = 2048.0
    window_duration: float = 1.0

    def __post_init__(self):
        if self.count < 1:
            raise ValueError(f"count must be >= 1, got {self.count}")
        if self.subcarrier_bandwidth <= 0 or self.total_band <= 0:
            raise ValueError("bandwidths must be positive")
        if self.count * self.subcarrier_bandwidth > self.total_band:
            raise ValueError(
                f"{self.count} subcarriers of {self.subcarrier_bandwidth} Hz "
                f"do not fit in {self.total_band} Hz")
        if self.sample_rate <= 0 or self.window_duration <= 0:
            raise ValueError("sample_rate and window_duration must be positive")
        n = self.sample_rate * self.window_duration
        if abs(n - round(n)) > 1e-9 * max(1.0, n) or round(n) < 1:
            raise ValueError(
                f"window_duration * sample_rate = {n} is not a positive whole number of samples")

    @property
    def samples_per_window(self) -> int:
        return int(round(self.sample_rate * self.window_duration))

    @property
    def bin_width(self) -> float:
        return 1.0 / self.window_duration

    def subcarrier_frequency(self, index: int) -> float:
        """RF centre frequency of subcarrier ``index`` (evenly spaced, band-centred)."""
        if not 0 <= index < self.count:
            raise IndexError(f"subcarrier index {index} outside [0, {self.count})")
        spacing = self.total_band / self.count
        return self.carrier_frequency - self.total_band / 2 + (index + 0.5) * spacing

    def wavenumber(self, index: int) -> float:
        return 2.0 * math.pi * self.subcarrier_frequency(index) / SPEED_OF_LIGHT


@dataclass
class BasebandWindow:
    samples: np.ndarray
    sample_rate: float
    subcarrier_index: int = 0

    def __len__(self):
        return len(self.samples)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass(frozen=True)
class NoiseSpec:
    """Additive noise description.

    ``kind='awgn'`` uses ``snr_db``. ``kind='narrowband'`` uses
    ``center_frequency``, ``bandwidth`` and ``power`` (linear mean-square).
    ``affected_count`` / ``affected_fraction`` choose how many subcarriers a
    narrowband disturbance hits; they are read by the harness only.
    """

    kind: str = "awgn"
    snr_db: float = 20.0
    center_frequency: float = 0.0
    bandwidth: float = 0.0
    power: float = 0.0
    rng_seed: int = 0
    affected_count: Optional[int] = None
    affected_fraction: Optional[float] = None

    def __post_init__(self):
        if self.kind not in ("awgn", "narrowband"):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.kind == "awgn" and not math.isfinite(self.snr_db):
            raise ValueError("snr_db must be finite")
        if self.kind == "narrowband":
            if self.power < 0 or self.bandwidth < 0:
                raise ValueError("narrowband power and bandwidth must be >= 0")
        if self.affected_count is not None and self.affected_count < 0:
            raise ValueError("affected_count must be >= 0")
        if self.affected_fraction is not None and not 0 <= self.affected_fraction <= 1:
            raise ValueError("affected_fraction must lie in [0, 1]")


def _machine_return(m: MachineSpec, t: np.ndarray, k: float) -> np.ndarray:
    R, Dz, dr = m.radial_offset, m.axial_offset, m.tx_rx_separation
    wt = m.rotation_speed * t
    # l*omega*t reduced mod 2pi in float64 before exp to keep long windows exact
    rot = np.mod(m.topological_charge * wt, 2.0 * math.pi)
    static = k * math.sqrt(R * R + Dz * Dz)
    path = k * np.sqrt(R * R + Dz * Dz - 2.0 * R * dr * np.cos(wt) + dr * dr)
    return m.reflection_coefficient * np.exp(1j * (rot - static - path))


def synthesize_clean(machines: Sequence[MachineSpec], plan: SubcarrierPlan,
                     subcarrier_index: int, start_time: float = 0.0) -> np.ndarray:
    if not machines:
        raise ValueError("at least one machine is required")
    k = plan.wavenumber(subcarrier_index)
    nyquist = plan.sample_rate / 2.0
    for m in machines:
        if m.doppler_hz > nyquist:
            raise ValueError(
                f"machine at {m.rpm:.1f} rpm has Doppler {m.doppler_hz:.2f} Hz "
                f"above Nyquist {nyquist:.1f} Hz")
    t = start_time + np.arange(plan.samples_per_window) / plan.sample_rate
    out = np.zeros(plan.samples_per_window, dtype=complex)
    for m in machines:
        out += _machine_return(m, t, k)
    return out


def awgn(n: int, power: float, rng: np.random.Generator) -> np.ndarray:
    """Circular complex Gaussian noise with mean-square ``power``."""
    scale = math.sqrt(power / 2.0)
    return scale * (rng.standard_normal(n) + 1j * rng.standard_normal(n))


def noise_power_for(samples: np.ndarray, snr_db: float) -> float:
    """Noise power giving ``snr_db`` against the mean power of ``samples``.

    Noise is integrated over the full baseband Nyquist band. An all-zero
    input is referenced to unit power so noise is still produced.
    """
    ref = float(np.mean(np.abs(samples) ** 2))
    if ref == 0.0:
        ref = 1.0
    return ref / 10 ** (snr_db / 10.0)


def add_awgn(samples: np.ndarray, snr_db: float, rng: np.random.Generator) -> np.ndarray:
    return samples + awgn(len(samples), noise_power_for(samples, snr_db), rng)


def synthesize(machines: Sequence[MachineSpec], plan: SubcarrierPlan, subcarrier_index: int,
               noise: Optional[NoiseSpec] = None, start_time: float = 0.0) -> BasebandWindow:
    """Scattered baseband signal of all ``machines`` on one subcarrier."""
    samples = synthesize_clean(machines, plan, subcarrier_index, start_time)
    window = BasebandWindow(samples, plan.sample_rate, subcarrier_index)
    if noise is None:
        return window
    if noise.kind == "awgn":
        rng = np.random.default_rng(noise.rng_seed)
        window.samples = add_awgn(samples, noise.snr_db, rng)
        return window
    return inject_narrowband(window, noise)


def cluster_tones(noise: NoiseSpec, duration: float) -> np.ndarray:
    """Frequencies of the 3-tone interference cluster.

    Spacing is half the bandwidth snapped to a whole number of DFT bins (at
    least one) so the three tones are orthogonal over the window.
    """
    bin_width = 1.0 / duration
    step = max(1, round(noise.bandwidth / 2.0 / bin_width)) * bin_width
    return noise.center_frequency + step * np.array([-1.0, 0.0, 1.0])


def inject_narrowband(window: BasebandWindow, noise: NoiseSpec) -> BasebandWindow:
    """Add a band-limited cluster of three random-phase tones at ``noise.power``."""
    if noise.kind != "narrowband":
        raise ValueError("inject_narrowband needs a narrowband NoiseSpec")
    tones = cluster_tones(noise, window.duration)
    nyquist = window.sample_rate / 2.0
    if np.any(np.abs(tones) >= nyquist):
        raise ValueError(
            f"interference at {noise.center_frequency} Hz (+/-{noise.bandwidth / 2} Hz) "
            f"is outside the representable band +/-{nyquist} Hz")
    if noise.power == 0:
        return replace(window, samples=window.samples.copy())
    rng = np.random.default_rng(noise.rng_seed)
    phases = rng.uniform(0.0, 2.0 * math.pi, size=3)
    amp = math.sqrt(noise.power / 3.0)
    t = np.arange(len(window)) / window.sample_rate
    cluster = amp * np.exp(1j * (2.0 * math.pi * np.outer(t, tones) + phases)).sum(axis=1)
    return replace(window, samples=window.samples + cluster)
