"""
Model Layer Assets - Cover, Transitions and Edge Maps

Fits the finite-state-driven Markov model to the training series and stores it as model.json.
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
from znl_pipeline.stages import cmd_fit


@asset(
    group_name="model",
    deps=["training_series"],
    description="Fit the zero-noise-limit Markov model",
)
def znl_model(
    context: AssetExecutionContext,
    config: PipelineConfig,
    artifacts: ArtifactStore,
    ledger: DuckDBResource,
) -> MaterializeResult:
    context.log.info(f"Fitting model with delta={config.delta}, gamma={config.gamma}")
    result = cmd_fit(config, store=artifacts, ledger=ledger)
    path = result.outputs["model"]

    if result.skipped:
        context.log.info(f"Model {path} unchanged; already recorded in the ledger")
        return MaterializeResult(
            metadata={
                "status": MetadataValue.text("Skipped - already processed"),
                "path": MetadataValue.path(str(path)),
            }
        )

    details = result.details
    context.log.info(f"Model has {details['m']} states and {details['edges']} edges")
    return MaterializeResult(
        metadata={
            "states": MetadataValue.int(details["m"]),
            "cover_cells": MetadataValue.int(details["cover_cells"]),
            "edges": MetadataValue.int(details["edges"]),
            "bandwidth": MetadataValue.float(details["bandwidth"]),
            "path": MetadataValue.path(str(path)),
        }
    )
