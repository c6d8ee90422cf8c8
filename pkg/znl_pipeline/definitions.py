"""
Dagster Definitions - Pipeline Configuration

This module defines the complete Dagster pipeline:
- Assets: training_series -> znl_model -> markov_run -> diagnostics_report
- Jobs: the full reconstruction job
- Resources: artifact directory and DuckDB provenance ledger
"""

import os

from dagster import (
    AssetSelection,
    Definitions,
    define_asset_job,
)

from znl_pipeline.assets import (
    diagnostics_report,
    markov_run,
    training_series,
    znl_model,
)
from znl_pipeline.resources.artifact_store import ArtifactStore
from znl_pipeline.resources.duckdb_resource import DuckDBResource


# Full pipeline job - runs all assets in dependency order
znl_pipeline_job = define_asset_job(
    name="znl_pipeline_job",
    selection=AssetSelection.all(),
    description="Generate, fit, simulate and diagnose a zero-noise-limit Markov model",
)


# Environment variables can override defaults (useful for Docker/local differences)
resources = {
    "artifacts": ArtifactStore(
        root_dir=os.environ.get("ZNL_OUTPUT_DIR", "data/output"),
    ),
    "ledger": DuckDBResource(
        database_path=os.environ.get("ZNL_LEDGER_DATABASE", "data/znl_ledger.duckdb"),
    ),
}


# Loaded by workspace.yaml and exposed to the Dagster UI
defs = Definitions(
    assets=[
        training_series,
        znl_model,
        markov_run,
        diagnostics_report,
    ],
    jobs=[znl_pipeline_job],
    resources=resources,
)
