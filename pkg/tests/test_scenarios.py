"""Scenario catalog, CSV emission, sweeps, report comparisons, config files."""

import math
from dataclasses import replace

import numpy as np
import pytest

from phonondd import (
    ScenarioError,
    build_scenario,
    convergence_check,
    emit_report,
    execute_scenario,
    get_scenario,
    load_reference_values,
    parse_config_text,
    populations_csv,
    records_csv,
    run_scenario,
    scenario_catalog,
    sweep,
)
from phonondd.scenarios import output_directory

CHEAP = """
chain.modes = 2
chain.spacing_um = 43.8
state.occupations = 1,0
propagator.n_max = 4
output.samples = 48
"""


def cheap_config(name="cheap", extra=""):
    return parse_config_text(CHEAP + extra, name=name)


class TestCatalog:
    def test_names_frozen(self):
        names = [cfg.name for cfg in scenario_catalog()]
        assert names == ["fig1a", "fig1b", "fig2", "fig3", "fig4a", "fig4b",
                         "fig5a", "fig5b", "fig6a", "fig6b", "fig7a", "fig7b"]

    def test_get_scenario_unknown(self):
        with pytest.raises(ScenarioError):
            get_scenario("fig99")

    def test_catalog_shapes(self):
        cat = {cfg.name: cfg for cfg in scenario_catalog()}
        assert cat["fig1a"].mode_count == 2
        assert cat["fig1a"].spacing == pytest.approx(27.6e-6, rel=1e-12)
        assert cat["fig1a"].pulse_model == "shaped"
        assert cat["fig1b"].pulse_duration == pytest.approx(1e-6, rel=1e-12)
        assert cat["fig2"].spacing == pytest.approx(43.8e-6, rel=1e-12)
        assert cat["fig3"].level_role_swap == (False, False)
        assert cat["fig4a"].level_role_swap is None
        assert cat["fig5a"].repetitions == 5
        for name in ("fig6a", "fig6b", "fig7a", "fig7b"):
            assert cat[name].protected_set == frozenset({0, 1})
            assert cat[name].beam_splitter_pair == (0, 1)
            assert cat[name].initial_occupations == (1, 1, 1)
        assert cat["fig7b"].repetitions == 5

    def test_hop_time_values(self):
        assert get_scenario("fig1a").hop_time() * 1e6 == pytest.approx(
            131.43062333767108, rel=1e-9)
        assert get_scenario("fig3").hop_time() * 1e6 == pytest.approx(
            525.2809525658624, rel=1e-9)

    def test_every_reference_metric_has_a_scenario(self):
        refs = load_reference_values()
        names = {cfg.name for cfg in scenario_catalog()}
        assert set(refs["metrics"]) <= names


class TestExecution:
    def test_cheap_run_record(self):
        record, result = execute_scenario(cheap_config())
        assert record.scenario == "cheap"
        assert record.failure is None
        assert record.error_E < 1e-12  # two-mode ideal cancellation is exact
        assert record.error_EB is None
        assert isinstance(record.error_E, float)
        params = dict(record.parameters)
        assert params["modes"] == "2"
        assert params["n_max"] == "4"
        assert params["model"] == "ideal"
        assert result.populations.shape == (48, 25)

    def test_beam_splitter_pair_engages_reference(self):
        extra = "schedule.protected = 0,1\noutput.beam_splitter_pair = 0,1\n"
        cfg = parse_config_text(
            "chain.modes = 2\nchain.spacing_um = 43.8\n"
            "state.occupations = 1,1\npropagator.n_max = 5\n" + extra,
            name="bs")
        record, result = execute_scenario(cfg)
        # protecting both modes leaves plain hopping, the 50:50 splitter
        assert record.error_EB is not None
        assert record.error_EB < 1e-10

    def test_cutoff_leak_raises(self):
        cfg = replace(get_scenario("fig3"), name="leaky", per_mode_cutoff=3,
                      record_samples=16)
        with pytest.raises(ScenarioError, match="per_mode_cutoff"):
            execute_scenario(cfg)

    def test_build_scenario_exposes_engine(self):
        space, couplings, schedule, initial, engine = build_scenario(
            cheap_config())
        assert space.dimension == 25
        assert schedule.total_time == pytest.approx(
            cheap_config().hop_time(), rel=1e-12)
        assert couplings.mode_count == 2
        assert abs(np.linalg.norm(initial.amplitudes) - 1.0) < 1e-15

    def test_convergence_check_cheap(self):
        out = convergence_check(cheap_config(), step=2)
        assert out["converged"]
        assert out["relative_change"] < 0.05


class TestPopulationsCsv:
    def test_row_sums_and_determinism(self, scenario_cache):
        cfg = get_scenario("fig3")
        _, result = scenario_cache("fig3")
        text = populations_csv(result, cfg)
        lines = text.strip().splitlines()
        header = lines[0].split(",")
        assert header[0] == "t_us"
        assert header[-1] == "residual"
        assert "210" in header  # initial state always kept
        for line in lines[1:]:
            vals = [float(x) for x in line.split(",")[1:]]
            assert abs(sum(vals) - 1.0) < 1e-12
        # a second run serializes bit identically
        _, again = execute_scenario(cfg)
        assert populations_csv(again, cfg) == text

    def test_hong_ou_mandel_columns_present(self, scenario_cache):
        cfg = get_scenario("fig7a")
        _, result = scenario_cache("fig7a")
        header = populations_csv(result, cfg).splitlines()[0].split(",")
        assert "1-2-0" in header
        assert "1-0-2" in header
        assert "1-1-1" in header

    def test_full_dump_has_every_label(self, scenario_cache):
        cfg = get_scenario("fig3")
        _, result = scenario_cache("fig3")
        header = populations_csv(result, cfg, full=True).splitlines()[0]
        cols = header.split(",")
        assert len(cols) == 1 + result.space.dimension
        assert "residual" not in cols

    def test_run_scenario_writes_files(self, tmp_path):
        record = run_scenario(cheap_config(), output_dir=tmp_path)
        out = tmp_path / "cheap_populations.csv"
        assert out.exists()
        assert out.read_text().startswith("t_us,")
        assert record.failure is None


class TestSweep:
    def test_repetition_axis(self):
        records = sweep(cheap_config(), "n_r", [2, 1])
        assert [r.scenario for r in records] == ["cheap_n_r=1", "cheap_n_r=2"]
        assert all(r.failure is None for r in records)

    def test_axis_values_transform(self):
        base = cheap_config()
        records = sweep(base, "d", [43.8e-6, 87.6e-6])  # meters
        assert all(r.failure is None for r in records)
        spacings = [dict(r.parameters)["spacing_um"] for r in records]
        assert float(spacings[0]) == pytest.approx(43.8)
        assert float(spacings[1]) == pytest.approx(87.6)

    def test_cutoff_axis_failure_captured(self):
        records = sweep(replace(get_scenario("fig3"), record_samples=16),
                        "n_max", [3])
        assert records[0].failure is not None
        assert "per_mode_cutoff" in records[0].failure

    def test_unknown_axis(self):
        with pytest.raises(ScenarioError):
            sweep(cheap_config(), "voltage", [1.0])

    def test_records_csv_covers_failures(self):
        records = sweep(replace(get_scenario("fig3"), record_samples=16),
                        "n_max", [3])
        text = records_csv(records)
        lines = text.strip().splitlines()
        assert lines[0].startswith("scenario,error_E")
        assert "wall_time" not in lines[0]  # timings are not reproducible
        assert lines[1].split(",")[1] == ""  # no error value for a failure


class TestReport:
    def test_verdict_modes(self, scenario_cache):
        record, _ = scenario_cache("fig3")
        text, ok = emit_report([record], load_reference_values())
        lines = text.strip().splitlines()
        assert lines[0] == "scenario,metric,computed,reference,ratio,verdict"
        row = lines[1].split(",")
        assert row[0] == "fig3"
        assert row[5] == "pass"
        assert ok

    def test_out_of_band_value_fails(self, scenario_cache):
        record, _ = scenario_cache("fig3")
        doctored = replace(record, error_E=record.error_E * 10)
        text, ok = emit_report([doctored], load_reference_values())
        assert not ok
        assert text.strip().splitlines()[1].split(",")[5] == "FAIL"

    def test_unreferenced_scenario_reports_blank(self):
        record, _ = execute_scenario(cheap_config())
        text, ok = emit_report([record], load_reference_values())
        row = text.strip().splitlines()[1].split(",")
        assert row[0] == "cheap"
        assert row[3] == ""  # nothing to compare against
        assert ok


class TestConfigParsing:
    def test_full_round_trip(self):
        cfg = parse_config_text("""
# comment and blank lines ignored

scenario.name = demo
chain.modes = 3
chain.spacing_um = 43.8
chain.truncation = 1
state.occupations = 2,1,0
schedule.repetitions = 2
schedule.total_time_us = 100.0
pulse.model = shaped
pulse.total_us = 4.0
pulse.ramp_up_us = 2.0
pulse.ramp_down_us = 2.0
pulse.sharpness = 5.0
pulse.target_phase = 3.141592653589793
propagator.n_max = 6
propagator.placement = insert
propagator.coupling = full
propagator.tolerance = 1e-10
output.samples = 64
""")
        assert cfg.name == "demo"
        assert cfg.mode_count == 3
        assert cfg.truncation_distance == 1
        assert cfg.initial_occupations == (2, 1, 0)
        assert cfg.repetitions == 2
        assert cfg.total_time == pytest.approx(100e-6, rel=1e-12)
        assert cfg.pulse_model == "shaped"
        assert cfg.pulse_duration == pytest.approx(4e-6, rel=1e-12)
        assert cfg.pulse_sharpness == 5.0
        assert cfg.per_mode_cutoff == 6
        assert cfg.window_placement == "insert"
        assert cfg.window_coupling == "full"
        assert cfg.local_error_tolerance == 1e-10
        assert cfg.record_samples == 64

    def test_defaults(self):
        cfg = cheap_config()
        assert cfg.per_mode_cutoff == 4  # explicit in the cheap block
        bare = parse_config_text("chain.modes = 2\nchain.spacing_um = 27.6\n"
                                 "state.occupations = 0,1\n")
        assert bare.per_mode_cutoff == 10
        assert bare.pulse_model == "ideal"
        assert bare.window_placement == "carve"

    def test_protected_and_roles(self):
        cfg = parse_config_text(CHEAP + "schedule.protected = 0\n"
                                        "schedule.role_swap = false,true\n")
        assert cfg.protected_set == frozenset({0})
        assert cfg.level_role_swap == (False, True)

    def test_unknown_key_rejected(self):
        with pytest.raises(ScenarioError, match="unknown"):
            parse_config_text(CHEAP + "chain.temperature = 300\n")

    def test_missing_required_key(self):
        with pytest.raises(ScenarioError):
            parse_config_text("chain.modes = 2\n")


class TestOutputDirectory:
    def test_explicit_wins(self, tmp_path, monkeypatch):
        monkeypatch.setenv("PHONONDD_OUT", "/nonexistent")
        assert str(output_directory(tmp_path)) == str(tmp_path)

    def test_env_fallback(self, monkeypatch, tmp_path):
        monkeypatch.setenv("PHONONDD_OUT", str(tmp_path))
        assert str(output_directory(None)) == str(tmp_path)

    def test_default_cwd(self, monkeypatch):
        monkeypatch.delenv("PHONONDD_OUT", raising=False)
        assert str(output_directory(None)) == "."
