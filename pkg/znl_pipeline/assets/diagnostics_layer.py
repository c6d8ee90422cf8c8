"""
Diagnostics Layer Assets - Fidelity Report

This module compares the simulation with the training trajectory:
- Hausdorff and L1-Hausdorff distances in both directions
- Autocorrelation curves and their relative error
- Symbolic fidelity curve over prediction horizons
- Containment of simulated points near the training data
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
from znl_pipeline.stages import REPORT_FILE, cmd_diagnose


@asset(
    group_name="diagnostics",
    deps=["markov_run"],
    description="Diagnostics report comparing the simulation with the training series",
)
def diagnostics_report(
    context: AssetExecutionContext,
    config: PipelineConfig,
    artifacts: ArtifactStore,
    ledger: DuckDBResource,
) -> MaterializeResult:
    """
    Write report.json plus the autocorrelation and theta curve CSVs.

    Returns MaterializeResult with the headline distances and containment fractions.
    """
    context.log.info("Computing diagnostics...")
    result = cmd_diagnose(config, store=artifacts, ledger=ledger)
    report = artifacts.read_json(REPORT_FILE)

    for warning in report["warnings"]:
        context.log.warning(warning)

    status = "Skipped - already processed" if result.skipped else "completed"
    containment = report["containment"]
    return MaterializeResult(
        metadata={
            "status": MetadataValue.text(status),
            "hausdorff_sim_to_train": MetadataValue.float(report["hauss_fwd"]),
            "hausdorff_train_to_sim": MetadataValue.float(report["hauss_bwd"]),
            "l1_hausdorff_sim_to_train": MetadataValue.float(report["l1_fwd"]),
            "l1_hausdorff_train_to_sim": MetadataValue.float(report["l1_bwd"]),
            "autocorr_rel_err": MetadataValue.float(report["autocorr_rel_err"]),
            "within_2delta": MetadataValue.float(containment["within_2delta"]),
            "far_evaluations": MetadataValue.int(report["far_evaluations"]),
            "theta_curve": MetadataValue.json(report["theta_curve"]),
            "report": MetadataValue.path(str(result.outputs["report"])),
        }
    )
