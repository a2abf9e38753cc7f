import json
import os
import textwrap

import pytest
import yaml
from hypothesis import given, strategies as st

from rotospec.config_io import (RESULT_COLUMNS, ConfigError, load_scenario, parse_scenario,
                                read_results_csv, read_results_json, results_to_csv,
                                results_to_json, scenario_to_dict, serialize_scenario,
                                write_results)
from rotospec.harness import BUILTINS, Scenario, Sweep, TrialResult, builtin
from rotospec.signal_model import MachineSpec, NoiseSpec, SubcarrierPlan

MINIMAL = textwrap.dedent("""\
    schema_version: 1
    scenario:
      machines:
        - rotation_speed_rpm: 2303
    """)


def with_body(body):
    return "schema_version: 1\nscenario:\n" + textwrap.indent(textwrap.dedent(body), "  ")


def error_path(text):
    with pytest.raises(ConfigError) as e:
        parse_scenario(text)
    return e.value.path


def test_minimal_file_gets_defaults():
    sc = parse_scenario(MINIMAL.encode())
    assert sc.plan == SubcarrierPlan()
    assert sc.plan.count == 60 and sc.plan.window_duration == 1.0
    assert sc.plan.subcarrier_bandwidth == 1e3 and sc.plan.total_band == 3e6
    assert sc.plan.carrier_frequency == 5.525e9 and sc.plan.sample_rate == 2048.0
    assert sc.machines[0].rpm == pytest.approx(2303)
    assert sc.machine_count == 1 and sc.trials == 1 and sc.noise == []


def test_top_speed_accepted():
    sc = parse_scenario(with_body("machines:\n  - rotation_speed_rpm: 7000\n"))
    assert sc.machines[0].rpm == pytest.approx(7000)


def test_speed_above_nyquist_rejected_with_path():
    text = with_body("""\
        subcarriers: {sample_rate_hz: 200.0}
        machines:
          - rotation_speed_rpm: 1000
          - rotation_speed_rpm: 7000
        """)
    with pytest.raises(ConfigError, match="Nyquist") as e:
        parse_scenario(text)
    assert e.value.path == "scenario.machines[1].rotation_speed_rpm"


def test_swept_speed_above_nyquist_rejected():
    text = with_body("""\
        machines: [{rotation_speed_rpm: 1000}]
        sweep: {parameter: rotation_speed_rpm, values: [1000, 70000]}
        """)
    assert error_path(text) == "scenario.sweep.values[1]"


@pytest.mark.parametrize("body, path", [
    ("machines: [{rotation_speed_rpm: 1000, colour: red}]", "scenario.machines[0].colour"),
    ("machines: [{rotation_speed_rpm: 1000}]\nfoo: 1", "scenario.foo"),
    ("machines: [{rotation_speed_rpm: -5}]", "scenario.machines[0].rotation_speed_rpm"),
    ("machines: [{axial_offset_m: 0.3}]", "scenario.machines[0].rotation_speed_rpm"),
    ("machines: []", "scenario.machines"),
    ("trials: 0\nmachines: [{rotation_speed_rpm: 1000}]", "scenario"),
    ("trials: 2.5\nmachines: [{rotation_speed_rpm: 1000}]", "scenario.trials"),
    ("fine_enabled: 1\nmachines: [{rotation_speed_rpm: 1000}]", "scenario.fine_enabled"),
    ("machines: [{rotation_speed_rpm: 1000, topological_charge: 0}]", "scenario.machines[0]"),
    ("machines: [{rotation_speed_rpm: 1000, radial_offset_m: -1.0}]",
     "scenario.machines[0].radial_offset_m"),
    ("machines: [{rotation_speed_rpm: '1000'}]", "scenario.machines[0].rotation_speed_rpm"),
    ("subcarriers: {count: 4000}\nmachines: [{rotation_speed_rpm: 1000}]", "scenario.subcarriers"),
    ("subcarriers: {speed: 1}\nmachines: [{rotation_speed_rpm: 1000}]",
     "scenario.subcarriers.speed"),
    ("machines: [{rotation_speed_rpm: 1000}]\nnoise: [{kind: pink}]", "scenario.noise[0].kind"),
    ("machines: [{rotation_speed_rpm: 1000}]\nnoise: [{kind: awgn}]",
     "scenario.noise[0].snr_db"),
    ("machines: [{rotation_speed_rpm: 1000}]\nnoise: [{kind: awgn, snr_db: 1, power_linear: 2}]",
     "scenario.noise[0].power_linear"),
    ("machines: [{rotation_speed_rpm: 1000}]\nsweep: {parameter: speed, values: [1]}",
     "scenario.sweep.parameter"),
    ("machines: [{rotation_speed_rpm: 1000}]\nsweep: {parameter: snr_db, values: []}",
     "scenario.sweep.values"),
    ("machines: [{rotation_speed_rpm: 1000}]\nsweep: {parameter: subcarrier_count, values: [1.5]}",
     "scenario.sweep.values[0]"),
    ("machines: [{rotation_speed_rpm: 1000}]\nthreshold_linear: 0", "scenario.threshold_linear"),
    ("machines: [{rotation_speed_rpm: 1000}]\nthreshold_linear: .nan",
     "scenario.threshold_linear"),
])
def test_invalid_fields_report_their_path(body, path):
    assert error_path(with_body(body)) == path


def test_schema_version_gate():
    assert error_path(MINIMAL.replace("schema_version: 1", "schema_version: 2")) == \
        "schema_version"
    assert error_path(MINIMAL.replace("schema_version: 1\n", "")) == "schema_version"
    assert error_path(MINIMAL.replace("schema_version: 1", "schema_version: 0")) == \
        "schema_version"
    assert error_path("schema_version: 1\n") == "scenario"
    assert error_path(MINIMAL + "extra: 1\n") == "extra"


def test_malformed_documents():
    for text in ("[1, 2", "- a\n- b\n", b"\xff\xfe"):
        with pytest.raises(ConfigError):
            parse_scenario(text)


def test_non_printable_name_rejected():
    assert error_path(with_body('name: "a\\tb"\nmachines: [{rotation_speed_rpm: 10}]')) \
        == "scenario"


def test_threshold_in_dbm():
    sc = parse_scenario(with_body("threshold_dbm: -20\nmachines: [{rotation_speed_rpm: 10}]"))
    assert sc.threshold == pytest.approx(0.1)
    assert error_path(with_body(
        "threshold_dbm: -20\nthreshold_linear: 0.1\nmachines: [{rotation_speed_rpm: 10}]")) \
        == "scenario"


def test_rad_s_speed_and_full_example():
    text = with_body("""\
        name: demo
        machine_count: 2
        trials: 3
        rng_seed: 18446744073709551615
        fine_enabled: false
        subcarriers: {count: 4, window_duration_s: 2.0}
        machines:
          - {rotation_speed_rad_s: 100.0, topological_charge: 2}
        interferers:
          - {rotation_speed_rpm: 1227, topological_charge: 2, reflection_coefficient: 0.4}
        noise:
          - {kind: awgn, snr_db: 10.0, rng_seed: 4}
          - {kind: narrowband, center_frequency_hz: 20.3, bandwidth_hz: 5.0,
             power_linear: 10.0, affected_count: 1}
        sweep: {parameter: snr_db, values: [-10, 0, 10]}
        """)
    sc = parse_scenario(text)
    assert sc.name == "demo" and sc.machine_count == 2 and sc.trials == 3
    assert sc.rng_seed == 2 ** 64 - 1 and not sc.fine_enabled
    assert sc.plan.count == 4 and sc.plan.window_duration == 2.0
    assert sc.machines[0].rotation_speed == 100.0 and sc.machines[0].topological_charge == 2
    assert sc.interferers[0].reflection_coefficient == 0.4
    assert sc.noise[1].affected_count == 1 and sc.noise[1].power == 10.0
    assert sc.sweep == Sweep("snr_db", [-10, 0, 10])
    assert parse_scenario(serialize_scenario(sc)) == sc


@pytest.mark.parametrize("name", sorted(BUILTINS))
def test_builtins_round_trip(name):
    sc = builtin(name)
    text = serialize_scenario(sc)
    assert parse_scenario(text) == sc
    assert serialize_scenario(parse_scenario(text)) == text


def test_serialized_units_are_in_key_names():
    doc = scenario_to_dict(builtin("three_machines"))
    assert "rotation_speed_rpm" in doc["scenario"]["machines"][0]
    assert "window_duration_s" in doc["scenario"]["subcarriers"]
    assert yaml.safe_load(serialize_scenario(builtin("three_machines"))) == doc


def test_load_scenario_reads_files(tmp_path):
    p = tmp_path / "s.yaml"
    p.write_text(MINIMAL)
    assert load_scenario(p) == parse_scenario(MINIMAL)
    with pytest.raises(OSError, match="s-missing.yaml"):
        load_scenario(tmp_path / "s-missing.yaml")


machines = st.builds(
    MachineSpec,
    rotation_speed=st.floats(0.1, 600.0),
    topological_charge=st.just(1),
    reflection_coefficient=st.floats(0.0, 2.0),
    radial_offset=st.floats(0.0, 1.0),
    axial_offset=st.floats(0.0, 5.0),
    tx_rx_separation=st.floats(0.0, 0.1),
)
noises = st.one_of(
    st.builds(NoiseSpec, kind=st.just("awgn"), snr_db=st.floats(-40, 40),
              rng_seed=st.integers(0, 2 ** 64 - 1)),
    st.builds(NoiseSpec, kind=st.just("narrowband"), center_frequency=st.floats(-500, 500),
              bandwidth=st.floats(0, 50), power=st.floats(0, 100),
              rng_seed=st.integers(0, 2 ** 64 - 1),
              affected_count=st.one_of(st.none(), st.integers(0, 60))),
)
sweeps = st.one_of(
    st.none(),
    st.builds(Sweep, parameter=st.just("snr_db"),
              values=st.lists(st.floats(-20, 20), min_size=1, max_size=4)),
    st.builds(Sweep, parameter=st.just("subcarrier_count"),
              values=st.lists(st.integers(1, 60), min_size=1, max_size=4)),
)
scenarios = st.builds(
    Scenario,
    name=st.text(st.characters(whitelist_categories=("L", "N", "P", "S"),
                               whitelist_characters=" "), max_size=12),
    machines=st.lists(machines, min_size=1, max_size=3),
    plan=st.builds(SubcarrierPlan, count=st.integers(1, 60),
                   window_duration=st.sampled_from([0.5, 1.0, 2.0, 4.0])),
    noise=st.lists(noises, max_size=2),
    threshold=st.floats(1e-6, 10.0),
    machine_count=st.integers(1, 4),
    sweep=sweeps,
    trials=st.integers(1, 100),
    rng_seed=st.integers(0, 2 ** 64 - 1),
    interferers=st.lists(machines, max_size=1),
    fine_enabled=st.booleans(),
    k_max=st.integers(1, 12),
    min_harmonics=st.integers(1, 4),
    leakage_cancel=st.booleans(),
)


@given(scenarios)
def test_parse_serialize_round_trip(sc):
    assert parse_scenario(serialize_scenario(sc)) == sc


def result(**kw):
    base = dict(scenario_name="s", sweep_param="snr_db", sweep_value=-5.0, trial=0, machine=1,
                true_rpm=2303.0000000000005, fused_rpm=2302.9, abs_error_rpm=0.1000000000000227,
                pct_error=0.004342162396873, loc=59, loc_ratio=59 / 60,
                detection_failed=False, wall_time_ms=None)
    base.update(kw)
    return TrialResult(**base)


def test_result_columns_fixed_order():
    assert RESULT_COLUMNS == ("scenario_name", "sweep_param", "sweep_value", "trial", "machine",
                              "true_rpm", "fused_rpm", "abs_error_rpm", "pct_error", "loc",
                              "loc_ratio", "detection_failed", "wall_time_ms")


def test_empty_results_header_only():
    assert results_to_csv([]) == ",".join(RESULT_COLUMNS) + "\n"
    assert read_results_csv(results_to_csv([])) == []
    assert json.loads(results_to_json([])) == []


def test_one_result_two_lines_round_trip():
    r = result()
    text = results_to_csv([r])
    lines = text.splitlines()
    assert len(lines) == 2
    assert lines[1].endswith(",false,")
    assert "0.9833333333333333" in lines[1]
    assert read_results_csv(text) == [r]
    assert read_results_json(results_to_json([r])) == [r]


def test_sweepless_and_failed_rows_round_trip():
    rs = [result(sweep_param="", sweep_value=None, detection_failed=True, fused_rpm=0.0,
                 wall_time_ms=1.25, scenario_name="a,b \"quoted\"")]
    assert read_results_csv(results_to_csv(rs)) == rs
    assert read_results_json(results_to_json(rs)) == rs


@given(st.lists(st.builds(
    TrialResult, scenario_name=st.text(st.characters(blacklist_categories=("Cc", "Cs", "Zl", "Zp")),
                                     max_size=8).filter(str.isprintable),
    sweep_param=st.sampled_from(["", "snr_db"]),
    sweep_value=st.one_of(st.none(), st.floats(allow_nan=False, allow_infinity=False)),
    trial=st.integers(0, 10 ** 6), machine=st.integers(0, 5),
    true_rpm=st.floats(0, 1e4), fused_rpm=st.floats(0, 1e4), abs_error_rpm=st.floats(0, 1e4),
    pct_error=st.floats(0, 1e3), loc=st.integers(0, 60), loc_ratio=st.floats(0, 1),
    detection_failed=st.booleans(),
    wall_time_ms=st.one_of(st.none(), st.floats(0, 1e6))), max_size=5))
def test_csv_and_json_agree_field_for_field(rs):
    assert read_results_csv(results_to_csv(rs)) == rs
    assert read_results_json(results_to_json(rs)) == rs


def test_write_results_is_byte_stable(tmp_path):
    rs = [result(), result(trial=1, fused_rpm=2303.0004)]
    for fmt in ("csv", "json"):
        a = write_results(rs, fmt, tmp_path / f"a.{fmt}")
        b = write_results(rs, fmt, tmp_path / f"b.{fmt}")
        assert a.read_bytes() == b.read_bytes()
    assert b"\r" not in (tmp_path / "a.csv").read_bytes()


def test_write_results_errors_carry_path(tmp_path):
    with pytest.raises(ValueError, match="format"):
        write_results([], "xml", tmp_path / "x")
    missing = tmp_path / "no" / "such" / "dir" / "r.csv"
    with pytest.raises(OSError) as e:
        write_results([], "csv", missing)
    assert e.value.filename == str(missing)


def test_csv_rejects_control_characters():
    with pytest.raises(ValueError, match="control"):
        results_to_csv([result(scenario_name="a\rb")])


def test_json_rejects_non_finite():
    with pytest.raises(ValueError):
        results_to_json([result(fused_rpm=float("inf"))])


def test_read_results_csv_rejects_bad_tables():
    with pytest.raises(ValueError, match="header"):
        read_results_csv("a,b\n")
    text = results_to_csv([result()])
    with pytest.raises(ValueError, match="line 2"):
        read_results_csv(text.rstrip("\n") + ",extra\n")
    with pytest.raises(ValueError):
        read_results_csv(text.replace(",false,", ",maybe,"))
