"""Dagster resources for the zero-noise-limit pipeline."""

from znl_pipeline.resources.artifact_store import ArtifactStore
from znl_pipeline.resources.duckdb_resource import DuckDBResource

__all__ = ["ArtifactStore", "DuckDBResource"]
