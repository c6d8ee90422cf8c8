"""
Series Layer Assets - Training Trajectory

This module produces the trajectory every later layer learns from:
- Integrates / iterates the configured benchmark system, or imports a CSV series
- Writes series.csv with a provenance sidecar
- Skips when the ledger already holds an unchanged series for the same config
"""

from dagster import (
    AssetExecutionContext,
    MaterializeResult,
    MetadataValue,
    asset,
)

from znl_pipeline.config import PipelineConfig
from znl_pipeline.resources.artifact_store import ArtifactStore
from znl_pipeline.resources.duckdb_resource import DuckDBResource
from znl_pipeline.stages import cmd_generate


@asset(
    group_name="series",
    description="Generate (or import) the observed trajectory",
)
def training_series(
    context: AssetExecutionContext,
    config: PipelineConfig,
    artifacts: ArtifactStore,
    ledger: DuckDBResource,
) -> MaterializeResult:
    """
    Write series.csv for the configured system.

    Returns MaterializeResult with the sample count, dimension and file hash.
    """
    context.log.info(f"Generating {config.system} series (n={config.n_samples})...")
    result = cmd_generate(config, store=artifacts, ledger=ledger)
    path = result.outputs["series"]

    if result.skipped:
        context.log.info(f"Series {path} unchanged; already recorded in the ledger")
        return MaterializeResult(
            metadata={
                "status": MetadataValue.text("Skipped - already processed"),
                "path": MetadataValue.path(str(path)),
                "sha256": MetadataValue.text(artifacts.file_hash(str(path))),
            }
        )

    return MaterializeResult(
        metadata={
            "system": MetadataValue.text(config.system),
            "samples": MetadataValue.int(result.details["samples"]),
            "dim": MetadataValue.int(result.details["dim"]),
            "path": MetadataValue.path(str(path)),
            "sha256": MetadataValue.text(artifacts.file_hash(str(path))),
        }
    )
