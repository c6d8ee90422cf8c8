"""
Pipeline Stages - generate, fit, simulate, diagnose, sweep, pipeline

Each stage reads its inputs through the ArtifactStore, writes its outputs plus a provenance
sidecar, and records itself in the DuckDB ledger:
- Fingerprint = hash of the effective config and the input file hashes
- A stage whose fingerprint is already recorded as completed, with outputs unchanged on disk,
  is skipped
- Failures are recorded in the ledger before the exception propagates
"""

import shutil
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Optional

import pandas as pd
from dagster import get_dagster_logger

from znl_pipeline.config import PipelineConfig
from znl_pipeline.diagnostics import DiagnosticsReport, diagnose
from znl_pipeline.errors import NumericError, SeriesFormatError, StageError, ZnlError
from znl_pipeline.markov import SimulationRun, build_model, simulate, zero_noise_sweep
from znl_pipeline.resources.artifact_store import ArtifactStore
from znl_pipeline.resources.duckdb_resource import DuckDBResource
from znl_pipeline.serialization import (
    read_model,
    read_series_csv,
    sha256_file,
    sha256_json,
    sidecar_path,
)
from znl_pipeline.systems import (
    FlowSpec,
    TimeSeries,
    default_initial_state,
    generate_henon,
    generate_lorenz63,
    generate_lorenz96,
    lorenz63_field,
    lorenz96_field,
)


logger = get_dagster_logger()

SERIES_FILE = "series.csv"
MODEL_FILE = "model.json"
RUN_FILE = "run.csv"
REPORT_FILE = "report.json"
AUTOCORR_TRUE_FILE = "autocorr_true.csv"
AUTOCORR_SIM_FILE = "autocorr_sim.csv"
THETA_FILE = "theta_curve.csv"
SWEEP_FILE = "sweep.csv"
CONFIG_ECHO_FILE = "config.effective.json"

# settings that change how a stage runs but never what it writes
_EXECUTION_ONLY = ("output_dir", "threads")


@dataclass
class StageResult:
    stage: str
    outputs: dict[str, Path]
    skipped: bool = False
    partial: bool = False
    exit_code: int = 0
    details: dict[str, Any] = field(default_factory=dict)


def store_for(config: PipelineConfig) -> ArtifactStore:
    return ArtifactStore(root_dir=config.output_dir)


def echo_config(store: ArtifactStore, config: PipelineConfig) -> Path:
    return store.write_json(CONFIG_ECHO_FILE, config.to_dict())


def _fingerprint(stage: str, config: PipelineConfig, input_hashes: dict[str, str]) -> str:
    values = {k: v for k, v in config.to_dict().items() if k not in _EXECUTION_ONLY}
    return sha256_json({"stage": stage, "config": values, "inputs": input_hashes})


def _check_stage_completed(
    ledger: DuckDBResource,
    store: ArtifactStore,
    fingerprint: str,
    outputs: list[str],
) -> bool:
    """
    True if every output was recorded as completed under this fingerprint and is unchanged on disk.
    """
    rows = ledger.fetch_all(
        """
        SELECT artifact_path, sha256 FROM ledger.artifact_metadata
        WHERE fingerprint = ? AND status = 'completed'
        """,
        (fingerprint,),
    )
    recorded = {path: sha for path, sha in rows}
    for name in outputs:
        path = str(store.path(name))
        if path not in recorded or store.file_hash(name) != recorded[path]:
            return False
    return True


def _record_artifact(
    ledger: DuckDBResource,
    stage: str,
    path: Path,
    fingerprint: str,
    status: str = "completed",
    error_message: str = None,
) -> None:
    sha = sha256_file(path) if path.exists() else None
    ledger.execute(
        """
        INSERT INTO ledger.artifact_metadata
        (artifact_id, stage, artifact_path, sha256, fingerprint, recorded_at, status, error_message)
        VALUES (?, ?, ?, ?, ?, CURRENT_TIMESTAMP, ?, ?)
        ON CONFLICT (fingerprint, artifact_path) DO UPDATE SET
            sha256 = EXCLUDED.sha256,
            status = EXCLUDED.status,
            error_message = EXCLUDED.error_message,
            recorded_at = EXCLUDED.recorded_at
        """,
        (str(uuid.uuid4()), stage, str(path), sha, fingerprint, status, error_message),
    )


def _record_stage_run(
    ledger: DuckDBResource,
    stage: str,
    fingerprint: str,
    status: str,
    duration: float,
    error_message: str = None,
) -> None:
    ledger.execute(
        """
        INSERT INTO ledger.stage_runs
        (run_id, stage, fingerprint, status, duration_seconds, error_message)
        VALUES (?, ?, ?, ?, ?, ?)
        """,
        (str(uuid.uuid4()), stage, fingerprint, status, duration, error_message),
    )


def _run_stage(
    stage: str,
    config: PipelineConfig,
    store: ArtifactStore,
    ledger: Optional[DuckDBResource],
    inputs: dict[str, Path],
    outputs: list[str],
    produce: Callable[[dict[str, Any]], StageResult],
) -> StageResult:
    """Fingerprint, skip check, run ``produce`` and record the outcome."""
    for name, path in inputs.items():
        if not Path(path).is_file():
            raise SeriesFormatError(f"{name} input not found", path=str(path))
    input_hashes = {name: sha256_file(path) for name, path in sorted(inputs.items())}
    fingerprint = _fingerprint(stage, config, input_hashes)
    echo_config(store, config)

    if ledger is not None:
        ledger.initialize()
        if _check_stage_completed(ledger, store, fingerprint, outputs):
            logger.info(f"Stage '{stage}' unchanged (fingerprint {fingerprint[:12]}); skipping")
            _record_stage_run(ledger, stage, fingerprint, "skipped", 0.0)
            return StageResult(
                stage=stage,
                outputs={name: store.path(name) for name in outputs},
                skipped=True,
            )

    provenance = {
        "stage": stage,
        "config": config.to_dict(),
        "inputs": input_hashes,
        "fingerprint": fingerprint,
    }
    start = time.perf_counter()
    try:
        result = produce(provenance)
    except Exception as e:
        if ledger is not None:
            duration = time.perf_counter() - start
            for name in outputs:
                _record_artifact(ledger, stage, store.path(name), fingerprint, "failed", str(e))
            _record_stage_run(ledger, stage, fingerprint, "failed", duration, str(e))
        raise

    duration = time.perf_counter() - start
    status = "partial" if result.partial else "completed"
    if ledger is not None:
        for name in outputs:
            _record_artifact(ledger, stage, store.path(name), fingerprint, status)
        _record_stage_run(ledger, stage, fingerprint, status, duration)
    logger.info(f"Stage '{stage}' {status} in {duration:.2f}s")
    return result


def generate_series(config: PipelineConfig) -> TimeSeries:
    """Trajectory of the configured benchmark system (or the configured CSV file)."""
    if config.system == "csv":
        return read_series_csv(config.csv_path)
    params = config.system_params()
    x0 = config.initial_state
    if x0 is None:
        x0 = default_initial_state(config.system, params, seed=config.generation_seed)
    skip = config.effective_transient_skip()
    if config.system == "henon":
        return generate_henon(params.henon.a, params.henon.b, x0, config.n_samples, skip)
    if config.system == "lorenz63":
        spec = FlowSpec(lorenz63_field(params.lorenz63), x0, config.dt, config.sample_stride, skip)
        return generate_lorenz63(params.lorenz63, spec, config.n_samples)
    spec = FlowSpec(lorenz96_field(params.lorenz96), x0, config.dt, config.sample_stride, skip)
    return generate_lorenz96(params.lorenz96.forcing, params.lorenz96.m, spec, config.n_samples)


def cmd_generate(
    config: PipelineConfig,
    store: Optional[ArtifactStore] = None,
    ledger: Optional[DuckDBResource] = None,
) -> StageResult:
    """Write series.csv (+ sidecar); a csv system copies its file verbatim after validating it."""
    config.check_ranges()
    store = store or store_for(config)
    inputs = {"csv": Path(config.csv_path)} if config.system == "csv" else {}

    def produce(provenance: dict[str, Any]) -> StageResult:
        series = generate_series(config)
        if config.system == "csv":
            target = store.path(SERIES_FILE)
            target.parent.mkdir(parents=True, exist_ok=True)
            if Path(config.csv_path).resolve() != target.resolve():
                shutil.copyfile(config.csv_path, target)
        else:
            store.write_series(SERIES_FILE, series, header=config.header)
        store.write_sidecar(
            SERIES_FILE,
            {**provenance, "seed": config.generation_seed, "samples": series.length,
             "dim": series.dim, "partial": False},
        )
        logger.info(f"Series: {series.length} samples in R^{series.dim} ({config.system})")
        return StageResult(
            stage="generate",
            outputs={"series": store.path(SERIES_FILE)},
            details={"samples": series.length, "dim": series.dim},
        )

    return _run_stage("generate", config, store, ledger, inputs, [SERIES_FILE], produce)


def cmd_fit(
    config: PipelineConfig,
    series_path: Optional[str] = None,
    store: Optional[ArtifactStore] = None,
    ledger: Optional[DuckDBResource] = None,
) -> StageResult:
    """Fit the model on a series file and write model.json (+ sidecar)."""
    config.check_ranges()
    store = store or store_for(config)
    series_file = Path(series_path) if series_path else store.path(SERIES_FILE)

    def produce(provenance: dict[str, Any]) -> StageResult:
        series = read_series_csv(series_file)
        model = build_model(
            series,
            config.delta,
            config.kernel_config(),
            workers=config.threads,
            restrict_to_core=config.restrict_to_core,
            method=config.neighbor_method,
        )
        path = store.write_model(MODEL_FILE, model)
        details = {
            "m": model.m,
            "cover_cells": model.cover.m,
            "edges": model.transitions.n_edges,
            "bandwidth": model.bandwidth,
        }
        store.write_sidecar(MODEL_FILE, {**provenance, **details, "partial": False})
        return StageResult(stage="fit", outputs={"model": path}, details=details)

    return _run_stage(
        "fit", config, store, ledger, {"series": series_file}, [MODEL_FILE], produce
    )


def cmd_simulate(
    config: PipelineConfig,
    model_path: Optional[str] = None,
    store: Optional[ArtifactStore] = None,
    ledger: Optional[DuckDBResource] = None,
) -> StageResult:
    """
    Simulate the model and write run.csv (+ sidecar).

    A run stopped by an out-of-domain evaluation is still written, marked partial, and the
    result carries exit code 3.
    """
    config.check_ranges()
    store = store or store_for(config)
    model_file = Path(model_path) if model_path else store.path(MODEL_FILE)

    def produce(provenance: dict[str, Any]) -> StageResult:
        model = read_model(model_file)
        x0 = config.x0 if config.x0 is not None else model.series.points[0]
        run = simulate(model, x0, config.simulation_steps, config.simulation_seed)
        path = store.write_run(RUN_FILE, run)
        details = {
            "steps": run.n_steps,
            "completed": run.completed,
            "failed_step": run.failed_step,
            "far_evaluations": run.far_evaluations,
        }
        store.write_sidecar(
            RUN_FILE,
            {
                **provenance,
                **details,
                "seed": config.simulation_seed,
                "model_sha256": provenance["inputs"]["model"],
                "failure": run.failure,
                "warnings": run.warnings,
                "partial": not run.completed,
            },
        )
        return StageResult(
            stage="simulate",
            outputs={"run": path},
            partial=not run.completed,
            exit_code=0 if run.completed else NumericError.exit_code,
            details={**details, "failure": run.failure},
        )

    return _run_stage("simulate", config, store, ledger, {"model": model_file}, [RUN_FILE], produce)


def write_report(store: ArtifactStore, report: DiagnosticsReport) -> dict[str, Path]:
    return {
        "report": store.write_json(REPORT_FILE, report.to_dict()),
        "autocorr_true": store.write_curve(AUTOCORR_TRUE_FILE, report.autocorr_true),
        "autocorr_sim": store.write_curve(AUTOCORR_SIM_FILE, report.autocorr_sim),
        "theta_curve": store.write_curve(
            THETA_FILE,
            [report.theta_curve[n] for n in sorted(report.theta_curve)],
            index_name="N",
            value_name="theta",
            index=sorted(report.theta_curve),
        ),
    }


def cmd_diagnose(
    config: PipelineConfig,
    model_path: Optional[str] = None,
    run_path: Optional[str] = None,
    series_path: Optional[str] = None,
    store: Optional[ArtifactStore] = None,
    ledger: Optional[DuckDBResource] = None,
) -> StageResult:
    """Write report.json and the autocorrelation / theta curve CSVs."""
    config.check_ranges()
    store = store or store_for(config)
    model_file = Path(model_path) if model_path else store.path(MODEL_FILE)
    run_file = Path(run_path) if run_path else store.path(RUN_FILE)
    inputs = {"model": model_file, "run": run_file}
    if series_path:
        inputs["series"] = Path(series_path)
    outputs = [REPORT_FILE, AUTOCORR_TRUE_FILE, AUTOCORR_SIM_FILE, THETA_FILE]

    def produce(provenance: dict[str, Any]) -> StageResult:
        model = read_model(model_file)
        run = _load_run(store, run_file, config)
        series = read_series_csv(series_path) if series_path else model.series
        report = diagnose(
            model,
            run,
            series,
            lags=config.lags,
            theta_horizons=config.theta_horizons,
            theta_samples=config.theta_samples,
            seed=config.diagnostics_seed,
            probes=config.spread_probes,
            method=config.neighbor_method,
        )
        paths = write_report(store, report)
        store.write_sidecar(
            REPORT_FILE,
            {**provenance, "seed": config.diagnostics_seed, "partial": not run.completed},
        )
        return StageResult(
            stage="diagnose",
            outputs=paths,
            details={
                "within_2delta": report.containment.within_2delta,
                "l1_fwd": report.l1_fwd,
                "l1_bwd": report.l1_bwd,
            },
        )

    return _run_stage("diagnose", config, store, ledger, inputs, outputs, produce)


def _load_run(store: ArtifactStore, run_file: Path, config: PipelineConfig) -> SimulationRun:
    """Run CSV plus the seed, truncation state, far count and warnings from its sidecar."""
    meta: dict[str, Any] = {}
    if sidecar_path(run_file).exists():
        meta = store.read_sidecar(str(run_file))
    run = store.read_run(str(run_file), seed=int(meta.get("seed", config.simulation_seed)))
    run.completed = not meta.get("partial", False)
    run.failure = meta.get("failure")
    run.failed_step = meta.get("failed_step")
    run.far_evaluations = int(meta.get("far_evaluations", 0))
    run.warnings = list(meta.get("warnings", []))
    return run


def cmd_sweep(
    config: PipelineConfig,
    series_path: Optional[str] = None,
    store: Optional[ArtifactStore] = None,
    ledger: Optional[DuckDBResource] = None,
) -> StageResult:
    """Spread statistics over config.sweep_deltas, written to sweep.csv."""
    config.check_ranges()
    store = store or store_for(config)
    series_file = Path(series_path) if series_path else store.path(SERIES_FILE)

    def produce(provenance: dict[str, Any]) -> StageResult:
        series = read_series_csv(series_file)
        rows = zero_noise_sweep(
            series,
            config.sweep_deltas,
            config.kernel_config(),
            probes=config.spread_probes,
            seed=config.diagnostics_seed,
            workers=config.threads,
            restrict_to_core=config.restrict_to_core,
        )
        path = store.write_frame(SWEEP_FILE, pd.DataFrame([row.to_dict() for row in rows]))
        store.write_sidecar(SWEEP_FILE, {**provenance, "partial": False})
        return StageResult(stage="sweep", outputs={"sweep": path}, details={"rows": len(rows)})

    return _run_stage(
        "sweep", config, store, ledger, {"series": series_file}, [SWEEP_FILE], produce
    )


def cmd_pipeline(
    config: PipelineConfig,
    store: Optional[ArtifactStore] = None,
    ledger: Optional[DuckDBResource] = None,
) -> list[StageResult]:
    """generate -> fit -> simulate -> diagnose; the first failing stage aborts with its name."""
    config.check_ranges()
    store = store or store_for(config)
    stages: list[tuple[str, Callable[[], StageResult]]] = [
        ("generate", lambda: cmd_generate(config, store=store, ledger=ledger)),
        ("fit", lambda: cmd_fit(config, store=store, ledger=ledger)),
        ("simulate", lambda: cmd_simulate(config, store=store, ledger=ledger)),
        ("diagnose", lambda: cmd_diagnose(config, store=store, ledger=ledger)),
    ]
    results = []
    for name, run_stage in stages:
        try:
            result = run_stage()
        except ZnlError as e:
            raise StageError(name, e) from e
        results.append(result)
        if result.partial:
            raise StageError(name, NumericError(result.details.get("failure") or "run truncated"))
    return results
