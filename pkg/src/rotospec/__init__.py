"""Rotation-speed measurement from rotational Doppler returns."""

from .signal_model import (MachineSpec, SubcarrierPlan, BasebandWindow, NoiseSpec,
                           synthesize, inject_narrowband)
from .spectrum import Spectrum, PeakSet, dft_spectrum, locate_peaks
from .speed_extraction import (HarmonicFamily, SpeedEstimate, rpm_from_doppler,
                               doppler_from_rotation, coarse_estimate, fine_estimate,
                               cancel_leakage, extract_speeds)
from .aggregation import AggregateReport, aggregate, aggregate_all
from .harness import Scenario, Sweep, TrialResult, run_scenario, builtin
from .config_io import (ConfigError, parse_scenario, serialize_scenario, load_scenario,
                        write_results)

__version__ = "0.1.0"
