"""
Simulation Layer Assets - Markov Run

Iterates the fitted model from its first training point and stores run.csv. A run cut short by
an out-of-domain evaluation is still written (marked partial in its sidecar) and then fails the
asset.
"""

from dagster import (
    AssetExecutionContext,
    MaterializeResult,
    MetadataValue,
    asset,
)

from znl_pipeline.config import PipelineConfig
from znl_pipeline.errors import NumericError, StageError
from znl_pipeline.resources.artifact_store import ArtifactStore
from znl_pipeline.resources.duckdb_resource import DuckDBResource
from znl_pipeline.stages import cmd_simulate


@asset(
    group_name="simulation",
    deps=["znl_model"],
    description="Simulate the fitted Markov model",
)
def markov_run(
    context: AssetExecutionContext,
    config: PipelineConfig,
    artifacts: ArtifactStore,
    ledger: DuckDBResource,
) -> MaterializeResult:
    context.log.info(
        f"Simulating {config.simulation_steps} steps (seed={config.simulation_seed})..."
    )
    result = cmd_simulate(config, store=artifacts, ledger=ledger)
    path = result.outputs["run"]

    if result.skipped:
        context.log.info(f"Run {path} unchanged; already recorded in the ledger")
        return MaterializeResult(
            metadata={
                "status": MetadataValue.text("Skipped - already processed"),
                "path": MetadataValue.path(str(path)),
            }
        )

    details = result.details
    if result.partial:
        context.log.error(
            f"Run stopped at step {details['failed_step']}: {details['failure']}"
        )
        raise StageError("simulate", NumericError(details["failure"]))

    if details["far_evaluations"]:
        context.log.warning(
            f"{details['far_evaluations']} edge-map evaluations were far from training inputs"
        )
    return MaterializeResult(
        metadata={
            "steps": MetadataValue.int(details["steps"]),
            "far_evaluations": MetadataValue.int(details["far_evaluations"]),
            "seed": MetadataValue.int(config.simulation_seed),
            "path": MetadataValue.path(str(path)),
        }
    )
