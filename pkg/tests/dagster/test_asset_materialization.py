"""
Tests for asset materialization.

Verifies that the reconstruction assets materialize with real resources on a small Henon run,
record their metadata, skip unchanged reruns and fail loudly on truncated simulations.
"""

import json

from dagster import materialize

from znl_pipeline.assets import diagnostics_report, markov_run, training_series, znl_model
from znl_pipeline.config import run_config_for
from znl_pipeline.definitions import defs, znl_pipeline_job


ALL_ASSETS = [training_series, znl_model, markov_run, diagnostics_report]


def _materialize(config, artifacts, ledger, assets=None, **kwargs):
    assets = assets or ALL_ASSETS
    ops = run_config_for(config)["ops"]
    selected = {a.op.name for a in assets}
    return materialize(
        assets,
        resources={"artifacts": artifacts, "ledger": ledger},
        run_config={"ops": {name: ops[name] for name in selected}},
        **kwargs,
    )


def _metadata(result, asset_name):
    return result.asset_materializations_for_node(asset_name)[0].metadata


class TestAssetMaterialization:
    """Test that assets materialize successfully."""

    def test_full_chain(self, small_config, artifacts, ledger):
        """Verify all four assets materialize in order and write their artifacts."""
        result = _materialize(small_config, artifacts, ledger)

        assert result.success
        assert len(result.asset_materializations) == 4
        for name in ("series.csv", "model.json", "run.csv", "report.json", "theta_curve.csv"):
            assert artifacts.exists(name)
        report = json.loads(artifacts.path("report.json").read_text())
        assert report["run_completed"] is True

    def test_series_only(self, small_config, artifacts, ledger):
        """Verify the series asset materializes on its own."""
        result = _materialize(small_config, artifacts, ledger, assets=[training_series])

        assert result.success
        assert result.asset_materializations[0].asset_key.to_user_string() == "training_series"
        assert artifacts.read_series("series.csv").length == 1500

    def test_definitions_load(self):
        """Verify the Definitions object resolves the pipeline job."""
        job = defs.get_job_def(znl_pipeline_job.name)
        assert job.name == "znl_pipeline_job"


class TestAssetMetadata:
    """Test metadata attached to materializations."""

    def test_series_metadata(self, small_config, artifacts, ledger):
        """Verify sample count, dimension and hash are recorded."""
        result = _materialize(small_config, artifacts, ledger, assets=[training_series])
        metadata = _metadata(result, "training_series")

        assert metadata["samples"].value == 1500
        assert metadata["dim"].value == 2
        assert metadata["sha256"].value == artifacts.file_hash("series.csv")

    def test_model_and_report_metadata(self, small_config, artifacts, ledger):
        """Verify model size and headline diagnostics are recorded."""
        result = _materialize(small_config, artifacts, ledger)

        model = _metadata(result, "znl_model")
        assert model["states"].value >= 1
        assert model["edges"].value >= model["states"].value
        report = _metadata(result, "diagnostics_report")
        assert report["status"].value == "completed"
        assert 0.0 <= report["within_2delta"].value <= 1.0
        run = _metadata(result, "markov_run")
        assert report["far_evaluations"].value == run["far_evaluations"].value

    def test_ledger_rows(self, small_config, artifacts, ledger):
        """Verify every stage run and artifact is recorded as completed."""
        _materialize(small_config, artifacts, ledger)

        stages = ledger.fetch_all(
            "SELECT stage, status FROM ledger.stage_runs ORDER BY run_timestamp"
        )
        assert [s for s, _ in stages] == ["generate", "fit", "simulate", "diagnose"]
        assert {status for _, status in stages} == {"completed"}
        statuses = ledger.fetch_all("SELECT DISTINCT status FROM ledger.artifact_metadata")
        assert statuses == [("completed",)]


class TestIncremental:
    """Test skip-if-unchanged reruns."""

    def test_rerun_is_skipped(self, small_config, artifacts, ledger):
        """Verify a second materialization with the same config skips every stage."""
        _materialize(small_config, artifacts, ledger)
        before = artifacts.file_hash("run.csv")

        result = _materialize(small_config, artifacts, ledger)

        assert result.success
        for name in ("training_series", "znl_model", "markov_run", "diagnostics_report"):
            assert _metadata(result, name)["status"].value == "Skipped - already processed"
        assert artifacts.file_hash("run.csv") == before

    def test_changed_seed_reruns_simulation(self, small_config, artifacts, ledger):
        """Verify a new simulation seed produces a new run."""
        _materialize(small_config, artifacts, ledger)
        before = artifacts.file_hash("run.csv")
        changed = small_config.with_overrides(simulation_seed=7)

        result = _materialize(changed, artifacts, ledger)

        assert _metadata(result, "markov_run")["seed"].value == 7
        assert artifacts.file_hash("run.csv") != before


class TestFailures:
    """Test that failures surface and are recorded."""

    def test_truncated_run_fails_asset(self, small_config, artifacts, ledger):
        """Verify a strict run that leaves the kernel range fails the simulation asset."""
        config = small_config.with_overrides(strict_domain=True, bandwidth=1e-6, x0=[5.0, 5.0])

        result = _materialize(config, artifacts, ledger, raise_on_error=False)

        assert not result.success
        assert artifacts.exists("run.csv")
        partial = ledger.fetch_all(
            "SELECT status FROM ledger.stage_runs WHERE stage = 'simulate'"
        )
        assert partial == [("partial",)]

    def test_missing_csv_fails_series(self, small_config, artifacts, ledger, tmp_path):
        """Verify a missing import file fails the series asset and nothing downstream runs."""
        config = small_config.with_overrides(system="csv", csv_path=str(tmp_path / "absent.csv"))

        result = _materialize(config, artifacts, ledger, raise_on_error=False)

        assert not result.success
        assert not artifacts.exists("model.json")
