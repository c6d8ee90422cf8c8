"""
Tests for Dagster resources.

Verifies that the DuckDB ledger and the artifact store work correctly.
"""

from unittest.mock import Mock

import duckdb  # type: ignore[import-untyped]
import numpy as np
import pytest  # type: ignore[import-untyped]

from znl_pipeline.errors import SeriesFormatError
from znl_pipeline.resources.artifact_store import ArtifactStore
from znl_pipeline.resources.duckdb_resource import DuckDBResource, retry_on_lock
from znl_pipeline.systems import TimeSeries


class TestDuckDBResource:
    """Test DuckDB ledger functionality."""

    def test_duckdb_resource_connection(self, ledger):
        """Verify DuckDB connection works."""
        with ledger.get_connection() as conn:
            result = conn.execute("SELECT 1 as test").fetchone()
            assert result[0] == 1

    def test_creates_parent_directory(self, temp_db_path):
        """Verify the ledger directory is created on first write."""
        DuckDBResource(database_path=temp_db_path).initialize_schemas()
        assert (
            DuckDBResource(database_path=temp_db_path).fetch_all(
                "SELECT schema_name FROM information_schema.schemata WHERE schema_name = 'ledger'"
            )
            == [("ledger",)]
        )

    def test_metadata_tables(self, initialized_ledger):
        """Verify the provenance tables exist."""
        tables = initialized_ledger.fetch_all("""
            SELECT table_name
            FROM information_schema.tables
            WHERE table_schema = 'ledger'
            ORDER BY table_name
        """)
        assert [t[0] for t in tables] == ["artifact_metadata", "stage_runs"]

    def test_initialize_idempotent(self, initialized_ledger):
        """Verify initializing twice is harmless."""
        initialized_ledger.initialize()

    def test_execute_and_fetch(self, initialized_ledger):
        """Verify parameterized inserts and DataFrame reads."""
        initialized_ledger.execute(
            """
            INSERT INTO ledger.stage_runs (run_id, stage, fingerprint, status, duration_seconds)
            VALUES (?, ?, ?, ?, ?)
            """,
            ("r1", "fit", "abc", "completed", 1.5),
        )
        frame = initialized_ledger.fetch_df("SELECT stage, status FROM ledger.stage_runs")
        assert frame.to_dict("records") == [{"stage": "fit", "status": "completed"}]


class TestRetryOnLock:
    """Test lock-conflict retries."""

    def test_retries_lock_conflicts(self):
        """Verify a lock conflict is retried until the call succeeds."""
        func = Mock(side_effect=[duckdb.IOException("Could not set lock on file"), "ok"])
        assert retry_on_lock(max_retries=3, delay=0.0)(func)() == "ok"
        assert func.call_count == 2

    def test_other_errors_raise(self):
        """Verify unrelated IO errors are not retried."""
        func = Mock(side_effect=duckdb.IOException("disk full"))
        with pytest.raises(duckdb.IOException):
            retry_on_lock(max_retries=3, delay=0.0)(func)()
        assert func.call_count == 1


class TestArtifactStore:
    """Test the artifact directory resource."""

    def test_relative_and_absolute_paths(self, artifacts, tmp_path):
        """Verify names resolve under the root and absolute paths pass through."""
        assert artifacts.path("run.csv") == tmp_path / "output" / "run.csv"
        assert artifacts.path(str(tmp_path / "x.csv")) == tmp_path / "x.csv"

    def test_file_hash_missing(self, artifacts):
        """Verify a missing file has no hash."""
        assert artifacts.file_hash("absent.csv") is None

    def test_series_and_sidecar(self, artifacts):
        """Verify series and sidecars round-trip through the store."""
        series = TimeSeries(np.array([[0.0, 1.0], [2.0, 3.0], [4.0, 5.0]]))
        artifacts.write_series("series.csv", series, header=True)
        artifacts.write_sidecar("series.csv", {"seed": 4})
        np.testing.assert_array_equal(artifacts.read_series("series.csv").points, series.points)
        assert artifacts.read_sidecar("series.csv") == {"seed": 4}
        assert len(artifacts.file_hash("series.csv")) == 64

    def test_missing_json(self, artifacts):
        """Verify reading a missing JSON artifact is a format error."""
        with pytest.raises(SeriesFormatError):
            artifacts.read_json("report.json")

    def test_custom_root(self):
        """Verify an explicit root directory is used for every name."""
        store = ArtifactStore(root_dir="custom/output")
        assert str(store.path("a.csv")) == "custom/output/a.csv"
