"""Scenario files (YAML) and result tables (CSV / JSON).

Scenario file layout, every unit in the key name::

    schema_version: 1
    scenario:
      name: demo                  # default "scenario"
      machine_count: 1            # M, machines to look for
      trials: 1
      rng_seed: 0
      threshold_linear: 0.1       # or threshold_dbm: -20 (0 dBm == 1.0)
      fine_enabled: true
      leakage_cancel: true
      k_max: 8
      min_harmonics: 2
      subcarriers:                # whole section optional
        count: 60
        subcarrier_bandwidth_hz: 1000.0
        total_band_hz: 3000000.0
        carrier_frequency_hz: 5525000000.0
        sample_rate_hz: 2048.0
        window_duration_s: 1.0
      machines:                   # required, at least one
        - rotation_speed_rpm: 2303   # or rotation_speed_rad_s
          topological_charge: 1
          reflection_coefficient: 1.0
          radial_offset_m: 0.05
          axial_offset_m: 0.30
          tx_rx_separation_m: 0.001
      interferers: []             # same shape as machines, never scored
      noise:
        - {kind: awgn, snr_db: 10.0, rng_seed: 0}
        - {kind: narrowband, center_frequency_hz: 20.3, bandwidth_hz: 5.0,
           power_linear: 10.0, affected_fraction: 0.2}   # or affected_count
      sweep:
        parameter: snr_db         # or subcarrier_count, window_duration_s,
        values: [-10, 0, 10]      #    threshold_linear, rotation_speed_rpm

Result tables have one row per (sweep value, trial, machine) in the column
order of :data:`RESULT_COLUMNS`. Floats are written as the shortest decimal
that round-trips, booleans as ``true``/``false`` and missing values as an
empty CSV cell or JSON ``null``.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from dataclasses import fields
from pathlib import Path
from typing import Any, Dict, List, Sequence, Union

import yaml

from .harness import SWEEP_PARAMETERS, Scenario, Sweep, TrialResult, dbm_to_threshold
from .signal_model import MachineSpec, NoiseSpec, SubcarrierPlan, rad_s_to_rpm, rpm_to_rad_s

SCHEMA_VERSION = 1

RESULT_COLUMNS = tuple(f.name for f in fields(TrialResult))

# file key -> dataclass attribute
_PLAN_KEYS = {
    "count": "count",
    "subcarrier_bandwidth_hz": "subcarrier_bandwidth",
    "total_band_hz": "total_band",
    "carrier_frequency_hz": "carrier_frequency",
    "sample_rate_hz": "sample_rate",
    "window_duration_s": "window_duration",
}
_MACHINE_KEYS = {
    "topological_charge": "topological_charge",
    "reflection_coefficient": "reflection_coefficient",
    "radial_offset_m": "radial_offset",
    "axial_offset_m": "axial_offset",
    "tx_rx_separation_m": "tx_rx_separation",
}
_AWGN_KEYS = {"snr_db": "snr_db", "rng_seed": "rng_seed"}
_NARROWBAND_KEYS = {
    "center_frequency_hz": "center_frequency",
    "bandwidth_hz": "bandwidth",
    "power_linear": "power",
    "rng_seed": "rng_seed",
    "affected_count": "affected_count",
    "affected_fraction": "affected_fraction",
}
_SCENARIO_SCALARS = {
    "name": "name",
    "machine_count": "machine_count",
    "trials": "trials",
    "rng_seed": "rng_seed",
    "fine_enabled": "fine_enabled",
    "leakage_cancel": "leakage_cancel",
    "k_max": "k_max",
    "min_harmonics": "min_harmonics",
}
_INT_ATTRS = {"count", "topological_charge", "rng_seed", "affected_count", "machine_count",
              "trials", "k_max", "min_harmonics"}
_BOOL_ATTRS = {"fine_enabled", "leakage_cancel"}


class ConfigError(ValueError):
    """Invalid scenario file; ``path`` names the offending field."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


# -- parsing -----------------------------------------------------------------

def _expect_mapping(value, path: str) -> dict:
    if not isinstance(value, dict):
        raise ConfigError(path, f"expected a mapping, got {type(value).__name__}")
    return value


def _expect_list(value, path: str) -> list:
    if not isinstance(value, list):
        raise ConfigError(path, f"expected a list, got {type(value).__name__}")
    return value


def _reject_unknown(doc: dict, allowed, path: str):
    for key in doc:
        if key not in allowed:
            raise ConfigError(f"{path}.{key}" if path else str(key),
                              f"unknown key; expected one of {', '.join(sorted(allowed))}")


def _number(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(path, f"expected a number, got {value!r}")
    if not math.isfinite(value):
        raise ConfigError(path, f"must be finite, got {value!r}")
    return value


def _integer(value, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(path, f"expected an integer, got {value!r}")
    return value


def _typed(attr: str, value, path: str):
    if attr in _INT_ATTRS:
        return _integer(value, path)
    if attr in _BOOL_ATTRS:
        if not isinstance(value, bool):
            raise ConfigError(path, f"expected true or false, got {value!r}")
        return value
    if attr in ("name", "kind"):
        if not isinstance(value, str):
            raise ConfigError(path, f"expected a string, got {value!r}")
        return value
    return _number(value, path)


def _mapped(doc: dict, keys: Dict[str, str], path: str) -> dict:
    return {keys[k]: _typed(keys[k], v, f"{path}.{k}") for k, v in doc.items() if k in keys}


def _build(cls, kwargs: dict, path: str):
    try:
        return cls(**kwargs)
    except (ValueError, TypeError) as e:
        raise ConfigError(path, str(e)) from None


def _parse_machine(doc, path: str) -> MachineSpec:
    doc = _expect_mapping(doc, path)
    _reject_unknown(doc, set(_MACHINE_KEYS) | {"rotation_speed_rpm", "rotation_speed_rad_s"}, path)
    speed_keys = [k for k in ("rotation_speed_rpm", "rotation_speed_rad_s") if k in doc]
    if not speed_keys:
        raise ConfigError(f"{path}.rotation_speed_rpm", "missing required field")
    if len(speed_keys) > 1:
        raise ConfigError(path, "give rotation_speed_rpm or rotation_speed_rad_s, not both")
    key = speed_keys[0]
    speed = _number(doc[key], f"{path}.{key}")
    if speed <= 0:
        raise ConfigError(f"{path}.{key}", f"must be > 0, got {speed!r}")
    omega = rpm_to_rad_s(speed) if key == "rotation_speed_rpm" else float(speed)
    kwargs = _mapped(doc, _MACHINE_KEYS, path)
    for attr, value in kwargs.items():
        if attr != "topological_charge" and value < 0:
            file_key = next(k for k, a in _MACHINE_KEYS.items() if a == attr)
            raise ConfigError(f"{path}.{file_key}", f"must be >= 0, got {value!r}")
    return _build(MachineSpec, dict(rotation_speed=omega, **kwargs), path)


def _parse_noise(doc, path: str) -> NoiseSpec:
    doc = _expect_mapping(doc, path)
    if "kind" not in doc:
        raise ConfigError(f"{path}.kind", "missing required field")
    kind = doc["kind"]
    if kind == "awgn":
        keys = _AWGN_KEYS
        if "snr_db" not in doc:
            raise ConfigError(f"{path}.snr_db", "missing required field")
    elif kind == "narrowband":
        keys = _NARROWBAND_KEYS
        for req in ("center_frequency_hz", "bandwidth_hz", "power_linear"):
            if req not in doc:
                raise ConfigError(f"{path}.{req}", "missing required field")
    else:
        raise ConfigError(f"{path}.kind", f"expected awgn or narrowband, got {kind!r}")
    _reject_unknown(doc, set(keys) | {"kind"}, path)
    kwargs = _mapped(doc, keys, path)
    if kwargs.get("affected_count") is not None and kwargs.get("affected_fraction") is not None:
        raise ConfigError(path, "give affected_count or affected_fraction, not both")
    return _build(NoiseSpec, dict(kind=kind, **kwargs), path)


def _parse_sweep(doc, path: str) -> Sweep:
    doc = _expect_mapping(doc, path)
    _reject_unknown(doc, {"parameter", "values"}, path)
    for req in ("parameter", "values"):
        if req not in doc:
            raise ConfigError(f"{path}.{req}", "missing required field")
    param = doc["parameter"]
    if param not in SWEEP_PARAMETERS:
        raise ConfigError(f"{path}.parameter",
                          f"expected one of {', '.join(SWEEP_PARAMETERS)}, got {param!r}")
    values = _expect_list(doc["values"], f"{path}.values")
    if not values:
        raise ConfigError(f"{path}.values", "must not be empty")
    check = _integer if param == "subcarrier_count" else _number
    values = [check(v, f"{path}.values[{i}]") for i, v in enumerate(values)]
    return Sweep(param, values)


def _check_nyquist(sc: Scenario, path: str):
    """Every machine (and every swept speed) must sit below Nyquist."""
    nyquist = sc.plan.sample_rate / 2.0
    for group in ("machines", "interferers"):
        for i, m in enumerate(getattr(sc, group)):
            if m.doppler_hz >= nyquist:
                raise ConfigError(
                    f"{path}.{group}[{i}].rotation_speed_rpm",
                    f"{m.rpm:.6g} rpm gives a Doppler shift of {m.doppler_hz:.6g} Hz, at or "
                    f"above the Nyquist limit {nyquist:g} Hz of sample_rate_hz "
                    f"{sc.plan.sample_rate:g}; "
                    f"the largest usable speed is "
                    f"{rad_s_to_rpm(nyquist * 2 * math.pi / m.topological_charge):.6g} rpm")
    if sc.sweep is not None and sc.sweep.parameter == "rotation_speed_rpm":
        l = sc.machines[0].topological_charge
        for i, v in enumerate(sc.sweep.values):
            if v <= 0 or v * l / 60.0 >= nyquist:
                raise ConfigError(f"{path}.sweep.values[{i}]",
                                  f"rotation speed {v!r} rpm is not in (0, Nyquist)")


def parse_scenario(text: Union[bytes, str]) -> Scenario:
    """Validated :class:`Scenario` from a YAML scenario file."""
    if isinstance(text, bytes):
        try:
            text = text.decode("utf-8")
        except UnicodeDecodeError as e:
            raise ConfigError("", f"scenario file is not UTF-8: {e}") from None
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ConfigError("", f"malformed YAML: {e}") from None
    doc = _expect_mapping(doc, "<document>")
    _reject_unknown(doc, {"schema_version", "scenario"}, "")
    if "schema_version" not in doc:
        raise ConfigError("schema_version", "missing required field")
    version = _integer(doc["schema_version"], "schema_version")
    if version > SCHEMA_VERSION:
        raise ConfigError("schema_version",
                          f"file uses schema {version}, this reader understands up to "
                          f"{SCHEMA_VERSION}")
    if version < 1:
        raise ConfigError("schema_version", f"must be >= 1, got {version}")
    if "scenario" not in doc:
        raise ConfigError("scenario", "missing required field")
    path = "scenario"
    sc = _expect_mapping(doc["scenario"], path)
    allowed = set(_SCENARIO_SCALARS) | {"threshold_linear", "threshold_dbm", "subcarriers",
                                        "machines", "interferers", "noise", "sweep"}
    _reject_unknown(sc, allowed, path)

    kwargs: Dict[str, Any] = _mapped(sc, _SCENARIO_SCALARS, path)
    kwargs.setdefault("name", "scenario")
    if "threshold_linear" in sc and "threshold_dbm" in sc:
        raise ConfigError(path, "give threshold_linear or threshold_dbm, not both")
    if "threshold_linear" in sc:
        kwargs["threshold"] = _number(sc["threshold_linear"], f"{path}.threshold_linear")
        if kwargs["threshold"] <= 0:
            raise ConfigError(f"{path}.threshold_linear", "must be > 0")
    elif "threshold_dbm" in sc:
        kwargs["threshold"] = dbm_to_threshold(_number(sc["threshold_dbm"],
                                                       f"{path}.threshold_dbm"))

    plan_doc = _expect_mapping(sc.get("subcarriers", {}) or {}, f"{path}.subcarriers")
    _reject_unknown(plan_doc, _PLAN_KEYS, f"{path}.subcarriers")
    kwargs["plan"] = _build(SubcarrierPlan, _mapped(plan_doc, _PLAN_KEYS, f"{path}.subcarriers"),
                            f"{path}.subcarriers")

    if "machines" not in sc:
        raise ConfigError(f"{path}.machines", "missing required field")
    machines = _expect_list(sc["machines"], f"{path}.machines")
    if not machines:
        raise ConfigError(f"{path}.machines", "at least one machine is required")
    kwargs["machines"] = [_parse_machine(m, f"{path}.machines[{i}]")
                          for i, m in enumerate(machines)]
    interferers = _expect_list(sc.get("interferers", []) or [], f"{path}.interferers")
    kwargs["interferers"] = [_parse_machine(m, f"{path}.interferers[{i}]")
                             for i, m in enumerate(interferers)]
    noise = _expect_list(sc.get("noise", []) or [], f"{path}.noise")
    kwargs["noise"] = [_parse_noise(n, f"{path}.noise[{i}]") for i, n in enumerate(noise)]
    if sc.get("sweep") is not None:
        kwargs["sweep"] = _parse_sweep(sc["sweep"], f"{path}.sweep")

    scenario = _build(Scenario, kwargs, path)
    _check_nyquist(scenario, path)
    return scenario


def load_scenario(path: Union[str, os.PathLike]) -> Scenario:
    try:
        data = Path(path).read_bytes()
    except OSError as e:
        raise OSError(e.errno, f"cannot read scenario file: {e.strerror}", str(path)) from None
    return parse_scenario(data)


# -- serialization -------------------------------------------------------------

def _machine_doc(m: MachineSpec) -> dict:
    rpm = rad_s_to_rpm(m.rotation_speed)
    # rpm is the user-facing unit; fall back to rad/s when rpm would not round-trip
    doc = ({"rotation_speed_rpm": rpm} if rpm_to_rad_s(rpm) == m.rotation_speed
           else {"rotation_speed_rad_s": m.rotation_speed})
    doc.update({k: getattr(m, a) for k, a in _MACHINE_KEYS.items()})
    return doc


def _noise_doc(n: NoiseSpec) -> dict:
    keys = _AWGN_KEYS if n.kind == "awgn" else _NARROWBAND_KEYS
    doc = {"kind": n.kind}
    doc.update({k: getattr(n, a) for k, a in keys.items() if getattr(n, a) is not None})
    return doc


def scenario_to_dict(sc: Scenario) -> dict:
    body = {k: getattr(sc, a) for k, a in _SCENARIO_SCALARS.items()}
    body["threshold_linear"] = sc.threshold
    body["subcarriers"] = {k: getattr(sc.plan, a) for k, a in _PLAN_KEYS.items()}
    body["machines"] = [_machine_doc(m) for m in sc.machines]
    body["interferers"] = [_machine_doc(m) for m in sc.interferers]
    body["noise"] = [_noise_doc(n) for n in sc.noise]
    if sc.sweep is not None:
        body["sweep"] = {"parameter": sc.sweep.parameter, "values": list(sc.sweep.values)}
    return {"schema_version": SCHEMA_VERSION, "scenario": body}


def serialize_scenario(sc: Scenario) -> str:
    """YAML text that :func:`parse_scenario` turns back into an equal Scenario."""
    return yaml.safe_dump(scenario_to_dict(sc), sort_keys=False, default_flow_style=False)


# -- results -------------------------------------------------------------------

def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, str) and not value.isprintable():
        raise ValueError(f"text cell {value!r} holds control characters")
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _json_value(value):
    if isinstance(value, float) and not math.isfinite(value):
        raise ValueError(f"non-finite value {value!r} cannot be written")
    return value


def results_to_csv(results: Sequence[TrialResult]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RESULT_COLUMNS)
    for r in results:
        w.writerow([_cell(getattr(r, c)) for c in RESULT_COLUMNS])
    return buf.getvalue()


def results_to_json(results: Sequence[TrialResult]) -> str:
    rows = [{c: _json_value(getattr(r, c)) for c in RESULT_COLUMNS} for r in results]
    return json.dumps(rows, indent=1, allow_nan=False) + "\n"


def write_results(results: Sequence[TrialResult], fmt: str,
                  destination: Union[str, os.PathLike]) -> Path:
    """Write ``results`` as ``csv`` or ``json`` to the file ``destination``."""
    if fmt == "csv":
        text = results_to_csv(results)
    elif fmt == "json":
        text = results_to_json(results)
    else:
        raise ValueError(f"unknown results format {fmt!r}; expected csv or json")
    dest = Path(destination)
    try:
        with open(dest, "w", encoding="utf-8", newline="") as f:
            f.write(text)
    except OSError as e:
        raise OSError(e.errno, f"cannot write results: {e.strerror}", str(dest)) from None
    return dest


def _from_cell(column: str, text: str):
    if text == "":
        return None
    if column in ("scenario_name", "sweep_param"):
        return text
    if column == "detection_failed":
        if text not in ("true", "false"):
            raise ValueError(f"{column}: expected true/false, got {text!r}")
        return text == "true"
    if column in ("trial", "machine", "loc"):
        return int(text)
    return float(text)


def read_results_csv(text: str) -> List[TrialResult]:
    """Inverse of :func:`results_to_csv`."""
    rows = list(csv.reader(io.StringIO(text, newline="")))
    if not rows or tuple(rows[0]) != RESULT_COLUMNS:
        raise ValueError("results CSV header does not match the expected columns")
    out = []
    for line, row in enumerate(rows[1:], start=2):
        if len(row) != len(RESULT_COLUMNS):
            raise ValueError(f"line {line}: expected {len(RESULT_COLUMNS)} cells, got {len(row)}")
        vals = {c: _from_cell(c, t) for c, t in zip(RESULT_COLUMNS, row)}
        vals["scenario_name"] = vals["scenario_name"] or ""
        vals["sweep_param"] = vals["sweep_param"] or ""
        out.append(TrialResult(**vals))
    return out


def read_results_json(text: str) -> List[TrialResult]:
    return [TrialResult(**{c: row[c] for c in RESULT_COLUMNS}) for row in json.loads(text)]
