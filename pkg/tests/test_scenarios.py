import json
import math

import numpy as np
import pytest

from spinphoton.errors import ConfigError, DeviceValidationError, UnknownLabelError
from spinphoton.scenarios import (
    SCENARIO_DIR,
    SWEEP_COLUMNS,
    load_scenario,
    run_scenario,
    scenario_source,
    sweep,
    write_result,
)

from .conftest import ghz


@pytest.fixture(scope="module")
def fig3a_result():
    return run_scenario(load_scenario("fig3a"))


@pytest.fixture
def fig3a_text():
    return (SCENARIO_DIR / "fig3a.yaml").read_text(encoding="utf-8")


class TestLoadScenario:
    def test_builtin(self):
        scenario = load_scenario("fig3a")
        assert scenario.gate == "ry"
        assert scenario.target_qubit == "A"
        assert scenario.angle == pytest.approx(math.pi)
        assert scenario.labels == ("00", "10")
        assert scenario.options.grid == pytest.approx(0.05)

    @pytest.mark.parametrize("name", ["fig3a", "fig3b", "fig4", "fig5a", "fig5b"])
    def test_assumed_values_are_tagged(self, name):
        lines = (SCENARIO_DIR / f"{name}.yaml").read_text(encoding="utf-8").splitlines()
        assumed = [line for line in lines if "{gap:" in line or "gaps:" in line or "G:" in line]
        assert len(assumed) == 7
        assert all("  # assumption, " in line for line in assumed)

    def test_unknown(self):
        with pytest.raises(UnknownLabelError, match="Unknown scenario `nope`"):
            load_scenario("nope")

    def test_scenario_file(self, tmp_path, fig3a_text):
        path = tmp_path / "mine.yaml"
        path.write_text(fig3a_text, encoding="utf-8")
        text, source = scenario_source(path)
        assert text == fig3a_text
        assert source == str(path)
        assert load_scenario(path).name == "fig3a"

    def test_overrides(self):
        scenario = load_scenario("fig3a", {"spins.A.Gbar": "30", "scenario.angle": "90 deg"})
        assert scenario.device.spin("A").coupling == pytest.approx(ghz(0.03))
        assert scenario.angle == pytest.approx(math.pi / 2)

    def test_bad_override(self):
        with pytest.raises(ConfigError, match="spins.C: no such config key"):
            load_scenario("fig3a", {"spins.C.Gbar": "30"})
        with pytest.raises(ConfigError, match="expected a number with optional unit"):
            load_scenario("fig3a", {"spins.A.Gbar": "abc"})

    def test_invalid_device(self):
        with pytest.raises(DeviceValidationError) as excinfo:
            load_scenario("fig3a", {"spins.A.Gbar": "0"})
        assert "collective coupling must be positive" in str(excinfo.value)

    def test_unknown_section(self, tmp_path, fig3a_text):
        path = tmp_path / "extra.yaml"
        path.write_text(fig3a_text + "\nplots:\n  style: 1\n", encoding="utf-8")
        with pytest.raises(ConfigError, match=r"unknown section\(s\) plots"):
            load_scenario(path)

    def test_bad_gate(self, tmp_path, fig3a_text):
        path = tmp_path / "cnot.yaml"
        path.write_text(fig3a_text.replace("gate: ry", "gate: cnot"), encoding="utf-8")
        with pytest.raises(ConfigError, match="scenario.gate: expected one of"):
            load_scenario(path)

    def test_schedule_gate_needs_a_schedule(self, tmp_path, fig3a_text):
        path = tmp_path / "bare.yaml"
        path.write_text(fig3a_text.replace("gate: ry", "gate: schedule"), encoding="utf-8")
        with pytest.raises(ConfigError, match="schedule: required"):
            load_scenario(path)

    def test_bad_options(self):
        with pytest.raises(ConfigError, match="options: tolerance must lie in"):
            load_scenario("fig3a", {"options.tolerance": "0.1"})


class TestRunScenario:
    def test_explicit_schedule(self, tmp_path, fig3a_text):
        path = tmp_path / "idle.yaml"
        text = fig3a_text.replace("gate: ry", "gate: schedule")
        text += "\nschedule:\n  name: idle\n  duration: 2 ns\n"
        path.write_text(text, encoding="utf-8")
        result = run_scenario(load_scenario(path))
        assert result.schedule.duration == pytest.approx(2.0)
        assert result.report is not None
        np.testing.assert_allclose(result.report.target, np.eye(4))

    def test_summary(self, fig3a_result):
        summary = fig3a_result.summary()
        assert summary["format_version"] == 1
        assert summary["gate"] == "ry"
        assert summary["lambda"] == fig3a_result.fidelity_loss
        assert summary["max_norm_drift"] <= 1e-9
        assert summary["gate_duration_ns"] == pytest.approx(fig3a_result.schedule.duration)
        assert summary["gate_report"]["labels"] == ["00", "01", "10", "11"]
        assert "loss_report" not in summary
        assert summary["options"]["integrator"] == "piecewise-exact"

    @pytest.mark.slow
    def test_rotation_quality(self, fig3a_result):
        assert fig3a_result.fidelity_loss <= 1e-3

    @pytest.mark.slow
    def test_ramped_rotation_quality(self, fig3a_result):
        overrides = {"scenario.ramp": "0.4", "options.integrator": "adaptive-rk"}
        scenario = load_scenario("fig3a", overrides)
        assert scenario.ramp_time * scenario.device.mode("A").idle_frequency >= 50
        result = run_scenario(scenario)
        assert result.schedule.pulses[0].ramp_time == pytest.approx(0.4)
        assert abs(result.fidelity_loss - fig3a_result.fidelity_loss) < 1e-3

    @pytest.mark.slow
    @pytest.mark.parametrize("name", ["fig3a", "fig3b", "fig4", "fig5a", "fig5b"])
    def test_conservation(self, name):
        trajectory = run_scenario(load_scenario(name)).trajectory
        assert trajectory.excitation_drift <= 1e-9
        if trajectory.lossy:
            assert np.all(np.diff(trajectory.norms) <= 1e-12)
        else:
            assert trajectory.max_norm_drift <= 1e-9

    @pytest.mark.slow
    def test_loss_report(self):
        result = run_scenario(load_scenario("fig5b"))
        assert result.loss is not None
        assert 1e-3 <= result.loss.deficit <= 2e-2
        assert result.summary()["loss_report"]["deficit"] == result.loss.deficit


class TestWriteResult:
    def test_files(self, tmp_path, fig3a_result):
        written = write_result(fig3a_result, tmp_path)
        assert [p.name for p in written] == ["fig3a_trajectory.csv", "fig3a_summary.json"]
        header = (tmp_path / "fig3a_trajectory.csv").read_text().splitlines()[0]
        assert header == "t_ns,00_re,00_im,10_re,10_im,norm2"
        summary = json.loads((tmp_path / "fig3a_summary.json").read_text())
        assert summary["scenario"]["name"] == "fig3a"
        assert not list(tmp_path.glob(".*"))

    def test_deterministic(self, tmp_path, fig3a_result):
        first = [p.read_bytes() for p in write_result(fig3a_result, tmp_path / "first")]
        again = run_scenario(load_scenario("fig3a"))
        second = [p.read_bytes() for p in write_result(again, tmp_path / "second")]
        assert first == second


class TestSweep:
    def test_empty(self):
        table = sweep("fig3a", "spins.A.Gbar", [])
        assert list(table.columns) == list(SWEEP_COLUMNS)
        assert table.empty

    def test_coupling_sweep(self):
        table = sweep("fig3a", "spins.A.Gbar", ["30", "60", "120"])
        assert list(table["value"]) == ["30", "60", "120"]
        assert (table["error"] == "").all()
        times = table["resonant_time_ns"].to_numpy()
        np.testing.assert_allclose(times[:-1] / times[1:], [2.0, 2.0])
        assert times[1] == pytest.approx(math.pi / ghz(0.06))

    def test_failing_rows_are_tagged(self):
        table = sweep("fig3a", "spins.A.Gbar", ["60", "abc", "0"])
        assert table.loc[0, "error"] == ""
        assert table.loc[1, "error"].startswith("ConfigError")
        assert table.loc[2, "error"].startswith("DeviceValidationError")
        assert math.isnan(table.loc[1, "lambda"])
        assert not math.isnan(table.loc[0, "gate_duration_ns"])

    def test_unknown_scenario(self):
        with pytest.raises(UnknownLabelError, match="Unknown scenario `nope`"):
            sweep("nope", "spins.A.Gbar", ["30"])

    def test_unknown_parameter(self):
        with pytest.raises(ConfigError, match="spins.A.gbar: no such config key"):
            sweep("fig3a", "spins.A.gbar", ["30"])
        with pytest.raises(ConfigError, match="scenario.angel: no such config key"):
            sweep("fig3a", "spins.A.Gbar", ["30"], overrides={"scenario.angel": "90 deg"})
