"""Command line surface, exercised through the click test runner."""

import pytest
from click.testing import CliRunner

from phonondd.cli import main

CHEAP_CFG = """
scenario.name = demo
chain.modes = 2
chain.spacing_um = 43.8
state.occupations = 1,0
propagator.n_max = 4
output.samples = 32
"""


@pytest.fixture()
def runner():
    return CliRunner()


class TestCatalog:
    def test_lists_all_scenarios(self, runner):
        res = runner.invoke(main, ["catalog"])
        assert res.exit_code == 0
        for name in ("fig1a", "fig2", "fig5b", "fig7b"):
            assert name in res.output


class TestRun:
    def test_catalog_scenario(self, runner, tmp_path):
        res = runner.invoke(main, ["run", "fig3", "--out", str(tmp_path)])
        assert res.exit_code == 0, res.output
        assert "fig3" in res.output
        assert (tmp_path / "fig3_populations.csv").exists()
        assert (tmp_path / "fig3_result.csv").exists()
        assert "pass" in res.output

    def test_config_file(self, runner, tmp_path):
        cfg = tmp_path / "demo.cfg"
        cfg.write_text(CHEAP_CFG)
        res = runner.invoke(main, ["run", str(cfg), "--out", str(tmp_path)])
        assert res.exit_code == 0, res.output
        assert (tmp_path / "demo_populations.csv").exists()

    def test_unknown_scenario_exits_with_error(self, runner):
        res = runner.invoke(main, ["run", "fig99"])
        assert res.exit_code == 2
        assert "fig99" in res.output

    def test_full_populations_flag(self, runner, tmp_path):
        cfg = tmp_path / "demo.cfg"
        cfg.write_text(CHEAP_CFG)
        res = runner.invoke(main, ["run", str(cfg), "--out", str(tmp_path),
                                   "--full-populations"])
        assert res.exit_code == 0, res.output
        header = (tmp_path / "demo_populations.csv").read_text().splitlines()[0]
        assert len(header.split(",")) == 1 + 25  # t_us plus every basis label


class TestSweep:
    def test_repetitions(self, runner, tmp_path):
        cfg = tmp_path / "demo.cfg"
        cfg.write_text(CHEAP_CFG)
        res = runner.invoke(main, ["sweep", str(cfg), "--axis", "n_r",
                                   "--values", "1,2", "--out", str(tmp_path)])
        assert res.exit_code == 0, res.output
        table = (tmp_path / "demo_sweep_n_r.csv").read_text()
        assert "demo_n_r=1" in table
        assert "demo_n_r=2" in table

    def test_failure_exits_nonzero(self, runner, tmp_path):
        res = runner.invoke(main, ["sweep", "fig3", "--axis", "n_max",
                                   "--values", "3", "--out", str(tmp_path)])
        assert res.exit_code == 2


class TestReport:
    def test_subset_passes(self, runner, tmp_path):
        res = runner.invoke(main, ["report", "--scenarios", "fig3,fig4a",
                                   "--out", str(tmp_path)])
        assert res.exit_code == 0, res.output
        table = (tmp_path / "report.csv").read_text()
        assert "fig3" in table and "fig4a" in table
        assert "FAIL" not in table


class TestPulseDesign:
    def test_prints_strength_and_phase(self, runner):
        res = runner.invoke(main, ["pulse", "design", "--tp-us", "4",
                                   "--tud-us", "2"])
        assert res.exit_code == 0, res.output
        assert "0.052923" in res.output
        assert "252.73" in res.output

    def test_export_waveform(self, runner, tmp_path):
        out = tmp_path / "wave.csv"
        res = runner.invoke(main, ["pulse", "design", "--tp-us", "4",
                                   "--tud-us", "2", "--export", str(out)])
        assert res.exit_code == 0, res.output
        text = out.read_text()
        assert text.startswith("t_s,b,omega_rad_s,omega_sq_excess,U0_V,V0_V")

    def test_infeasible_exits_cleanly(self, runner):
        res = runner.invoke(main, ["pulse", "design", "--tp-us", "0.2",
                                   "--sigma", "0.5"])
        assert res.exit_code == 2
