import json

import pytest

from spinphoton.cli import EXIT_INVALID, EXIT_IO, EXIT_NUMERICAL, EXIT_OK, OUTPUT_DIR_ENV, main
from spinphoton.scenarios import SCENARIO_DIR


@pytest.fixture
def fig3a_text():
    return (SCENARIO_DIR / "fig3a.yaml").read_text(encoding="utf-8")


def test_scenarios(capsys):
    assert main(["scenarios"]) == EXIT_OK
    out = capsys.readouterr().out
    for name in ("fig3a", "fig3b", "fig4", "fig5a", "fig5b"):
        assert name in out


class TestRun:
    def test_writes_outputs(self, tmp_path, capsys):
        assert main(["run", "fig3a", "--out", str(tmp_path)]) == EXIT_OK
        assert (tmp_path / "fig3a_trajectory.csv").is_file()
        summary = json.loads((tmp_path / "fig3a_summary.json").read_text())
        assert summary["gate"] == "ry"
        assert "lambda" in capsys.readouterr().out

    def test_output_dir_from_environment(self, tmp_path, monkeypatch):
        monkeypatch.setenv(OUTPUT_DIR_ENV, str(tmp_path / "env"))
        assert main(["run", "fig3a", "--grid", "0.5"]) == EXIT_OK
        assert (tmp_path / "env" / "fig3a_summary.json").is_file()

    def test_option_flags(self, tmp_path):
        argv = ["run", "fig3a", "--out", str(tmp_path), "--picture", "schrodinger"]
        argv += ["--tol", "1e-9"]
        assert main(argv) == EXIT_OK
        summary = json.loads((tmp_path / "fig3a_summary.json").read_text())
        assert summary["options"]["picture"] == "schrodinger"
        assert summary["options"]["tolerance"] == 1e-9

    def test_unknown_scenario(self, tmp_path):
        assert main(["run", "nope", "--out", str(tmp_path)]) == EXIT_INVALID

    def test_invalid_override(self, tmp_path):
        argv = ["run", "fig3a", "--out", str(tmp_path), "--override", "spins.A.Gbar=0"]
        assert main(argv) == EXIT_INVALID
        assert main(["run", "fig3a", "--out", str(tmp_path), "--override", "Gbar"]) == EXIT_INVALID

    def test_invalid_tolerance(self, tmp_path):
        assert main(["run", "fig3a", "--out", str(tmp_path), "--tol", "1.0"]) == EXIT_INVALID

    def test_unwritable_output(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("")
        assert main(["run", "fig3a", "--out", str(blocker / "inside")]) == EXIT_IO


class TestSweep:
    def test_empty_values(self, tmp_path):
        argv = ["sweep", "fig3a", "--param", "spins.A.Gbar", "--values", ""]
        argv += ["--out", str(tmp_path)]
        assert main(argv) == EXIT_OK
        header = (tmp_path / "fig3a_sweep.csv").read_text().splitlines()[0]
        assert header == "value,lambda,gate_duration_ns,resonant_time_ns,norm_deficit,error"

    def test_failed_rows_are_reported(self, tmp_path, capsys):
        argv = [
            "sweep",
            "fig3a",
            "--param",
            "spins.A.Gbar",
            "--values",
            "60,0",
            "--out",
            str(tmp_path),
        ]
        assert main(argv) == EXIT_OK
        assert "1 of 2 row(s) failed" in capsys.readouterr().out
        assert len((tmp_path / "fig3a_sweep.csv").read_text().splitlines()) == 3

    @pytest.mark.parametrize(
        ("scenario", "param"),
        [("nope", "spins.A.Gbar"), ("fig3a", "spins.C.Gbar"), ("fig3a", "hops.7.kappa")],
    )
    def test_rejected_before_running(self, tmp_path, scenario, param):
        argv = ["sweep", scenario, "--param", param, "--values", "30,60", "--out", str(tmp_path)]
        assert main(argv) == EXIT_INVALID
        assert not list(tmp_path.iterdir())


class TestValidate:
    def test_builtin(self, capsys):
        assert main(["validate", "fig3b"]) == EXIT_OK
        assert "0 error(s)" in capsys.readouterr().out

    def test_broken_file(self, tmp_path, fig3a_text, capsys):
        path = tmp_path / "broken.yaml"
        path.write_text(fig3a_text.replace("Gbar: 60 MHz", "Gbar: 0 MHz", 1))
        assert main(["validate", str(path)]) == EXIT_INVALID
        assert "collective coupling must be positive" in capsys.readouterr().out

    def test_misspelled_section(self, tmp_path, fig3a_text, capsys):
        path = tmp_path / "typo.yaml"
        path.write_text(fig3a_text.replace("\nhops:", "\nhopz:", 1))
        assert main(["validate", str(path)]) == EXIT_INVALID
        assert "hopz" in capsys.readouterr().out


class TestCPBSpectrum:
    def test_levels(self, capsys):
        assert main(["cpb-spectrum", "--ec", "4.9", "--ej", "30.38"]) == EXIT_OK
        out = capsys.readouterr().out
        assert "gap 0-1" in out
        assert "relative anharmonicity" in out

    def test_not_converged(self):
        argv = ["cpb-spectrum", "--ec", "1", "--ej", "200", "--cutoff", "3"]
        assert main(argv) == EXIT_NUMERICAL
