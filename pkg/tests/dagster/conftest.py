"""
Shared fixtures for Dagster tests.

Provides a temporary ledger, a temporary artifact directory and a small pipeline config.
"""

from pathlib import Path

import pytest  # type: ignore[import-untyped]

from znl_pipeline.config import PipelineConfig
from znl_pipeline.resources.artifact_store import ArtifactStore
from znl_pipeline.resources.duckdb_resource import DuckDBResource


@pytest.fixture
def temp_db_path(tmp_path: Path) -> str:
    """Path for a temporary DuckDB ledger (created on first write)."""
    return str(tmp_path / "ledger" / "znl_ledger.duckdb")


@pytest.fixture
def ledger(temp_db_path: str) -> DuckDBResource:
    """DuckDB resource pointing to a temporary database."""
    return DuckDBResource(database_path=temp_db_path)


@pytest.fixture
def initialized_ledger(ledger: DuckDBResource) -> DuckDBResource:
    """Ledger with its schema and metadata tables created."""
    ledger.initialize()
    return ledger


@pytest.fixture
def artifacts(tmp_path: Path) -> ArtifactStore:
    """Artifact store rooted in a temporary directory."""
    return ArtifactStore(root_dir=str(tmp_path / "output"))


@pytest.fixture
def small_config(artifacts: ArtifactStore) -> PipelineConfig:
    """Henon run small enough for a unit-test budget."""
    return PipelineConfig(
        system="henon",
        n_samples=1500,
        delta=0.2,
        simulation_steps=1000,
        lags=10,
        theta_samples=2000,
        spread_probes=20,
        threads=2,
        output_dir=artifacts.root_dir,
    )
