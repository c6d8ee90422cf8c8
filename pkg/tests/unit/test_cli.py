"""
Tests for the znl command line: exit codes, determinism and ledger skips.
"""

import json

import pandas as pd
import pytest  # type: ignore[import-untyped]

from znl_pipeline.cli import build_parser, config_from_args, main


SMALL = ["--n", "1500", "--steps", "1000", "--lags", "10", "--delta", "0.2"]
DETERMINISTIC_OUTPUTS = ("series.csv", "model.json", "run.csv", "report.json", "theta_curve.csv")


def _pipeline(out, *extra):
    return main(["pipeline", "--out", str(out), "--no-ledger", *SMALL, *extra])


class TestArguments:
    """Test flag parsing into a PipelineConfig."""

    def test_pipeline_seed_fans_out(self, tmp_path):
        """Verify --seed sets distinct generation, simulation and diagnostics seeds."""
        args = build_parser().parse_args(["pipeline", "--seed", "10", "--out", str(tmp_path)])
        config = config_from_args(args)
        assert (config.generation_seed, config.simulation_seed, config.diagnostics_seed) == (
            10,
            11,
            12,
        )

    def test_input_implies_csv(self, tmp_path):
        """Verify --input switches the system to csv."""
        path = tmp_path / "series.csv"
        path.write_text("0,0\n1,1\n")
        args = build_parser().parse_args(["generate", "--input", str(path)])
        config = config_from_args(args)
        assert config.system == "csv"
        assert config.csv_path == str(path)

    def test_flags_override_config_file(self, tmp_path):
        """Verify flags win over the JSON config."""
        path = tmp_path / "config.json"
        path.write_text(json.dumps({"delta": 0.3, "gamma": 0.01}))
        args = build_parser().parse_args(["fit", "--config", str(path), "--delta", "0.5"])
        config = config_from_args(args)
        assert config.delta == 0.5
        assert config.gamma == 0.01


class TestExitCodes:
    """Test the mapping of failures to exit codes."""

    def test_pipeline_ok(self, tmp_path, capsys):
        """Verify a small Henon pipeline succeeds and writes every artifact."""
        assert _pipeline(tmp_path) == 0
        for name in DETERMINISTIC_OUTPUTS + ("autocorr_true.csv", "config.effective.json"):
            assert (tmp_path / name).is_file()
        report = json.loads((tmp_path / "report.json").read_text())
        assert report["run_completed"] is True
        assert "diagnose: ok" in capsys.readouterr().out

    def test_unknown_flag(self, capsys):
        """Verify a usage error exits 1."""
        assert main(["fit", "--bogus"]) == 1
        assert "error:" in capsys.readouterr().err

    def test_invalid_value(self, tmp_path):
        """Verify an out-of-range parameter exits 1."""
        assert main(["generate", "--out", str(tmp_path), "--delta", "-1"]) == 1

    def test_missing_input(self, tmp_path, capsys):
        """Verify a missing series exits 2."""
        assert main(["fit", "--out", str(tmp_path), "--no-ledger"]) == 2
        assert "series input not found" in capsys.readouterr().err

    def test_malformed_csv(self, tmp_path):
        """Verify a bad CSV import exits 2."""
        path = tmp_path / "bad.csv"
        path.write_text("1,2\n3,oops\n")
        argv = ["generate", "--input", str(path), "--out", str(tmp_path / "o"), "--no-ledger"]
        assert main(argv) == 2

    def test_truncated_run(self, tmp_path, capsys):
        """Verify a strict run that leaves the kernel range exits 3."""
        config = tmp_path / "config.json"
        config.write_text(
            json.dumps({"strict_domain": True, "bandwidth": 1e-6, "x0": [5.0, 5.0]})
        )
        code = _pipeline(tmp_path / "out", "--config", str(config))
        assert code == 3
        assert "simulate" in capsys.readouterr().err


class TestOutputs:
    """Test determinism and incremental reruns."""

    def test_byte_identical_reruns(self, tmp_path):
        """Verify equal seeds give byte-identical outputs."""
        assert _pipeline(tmp_path / "a", "--seed", "3") == 0
        assert _pipeline(tmp_path / "b", "--seed", "3") == 0
        for name in DETERMINISTIC_OUTPUTS:
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_seed_changes_series(self, tmp_path):
        """Verify a different generation seed gives a different series."""
        for out, seed in (("a", "1"), ("b", "2")):
            assert main(["generate", "--out", str(tmp_path / out), "--seed", seed, "--no-ledger",
                         "--n", "200"]) == 0
        assert (tmp_path / "a" / "series.csv").read_bytes() != (
            tmp_path / "b" / "series.csv"
        ).read_bytes()

    def test_ledger_skips_unchanged_stage(self, tmp_path, capsys):
        """Verify a rerun with the same config and inputs is skipped."""
        argv = ["generate", "--out", str(tmp_path / "out"), "--n", "300",
                "--ledger", str(tmp_path / "ledger.duckdb")]
        assert main(argv) == 0
        capsys.readouterr()
        assert main(argv) == 0
        assert "generate: skipped (unchanged)" in capsys.readouterr().out

    def test_ledger_reruns_after_change(self, tmp_path, capsys):
        """Verify a changed parameter reruns the stage."""
        base = ["generate", "--out", str(tmp_path / "out"),
                "--ledger", str(tmp_path / "ledger.duckdb")]
        assert main(base + ["--n", "300"]) == 0
        capsys.readouterr()
        assert main(base + ["--n", "301"]) == 0
        assert "generate: ok" in capsys.readouterr().out

    def test_csv_import_copied(self, tmp_path):
        """Verify an imported series is stored unchanged."""
        path = tmp_path / "input.csv"
        path.write_text("x0\n0.0\n1.0\n0.5\n")
        out = tmp_path / "out"
        assert main(["generate", "--input", str(path), "--out", str(out), "--no-ledger"]) == 0
        assert (out / "series.csv").read_bytes() == path.read_bytes()

    def test_sweep(self, tmp_path):
        """Verify the sweep writes one row per delta, coarse to fine."""
        out = str(tmp_path)
        assert main(["generate", "--out", out, "--n", "1500", "--no-ledger"]) == 0
        assert main(["sweep", "--out", out, "--no-ledger"]) == 0
        frame = pd.read_csv(tmp_path / "sweep.csv")
        assert frame["delta"].tolist() == [0.4, 0.2, 0.1]

    def test_report_carries_run_far_evaluations(self, tmp_path):
        """Verify the report repeats the far count and warnings recorded by simulate."""
        config = tmp_path / "config.json"
        config.write_text(json.dumps({"bandwidth": 1e-6, "gamma": 0.1, "x0": [5.0, 5.0]}))
        out = tmp_path / "out"
        assert _pipeline(out, "--config", str(config)) == 0
        run_meta = json.loads((out / "run.csv.meta.json").read_text())
        report = json.loads((out / "report.json").read_text())
        assert run_meta["far_evaluations"] > 0
        assert report["far_evaluations"] == run_meta["far_evaluations"]
        assert any("start point" in w for w in report["warnings"])
        for warning in run_meta["warnings"]:
            assert warning in report["warnings"]
        assert report["run_completed"]


@pytest.fixture(autouse=True)
def _two_threads(monkeypatch):
    monkeypatch.setenv("ZNL_THREADS", "2")
