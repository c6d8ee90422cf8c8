"""Dagster assets for the zero-noise-limit pipeline."""

from znl_pipeline.assets.series_layer import training_series
from znl_pipeline.assets.model_layer import znl_model
from znl_pipeline.assets.simulation_layer import markov_run
from znl_pipeline.assets.diagnostics_layer import diagnostics_report

__all__ = [
    "training_series",
    "znl_model",
    "markov_run",
    "diagnostics_report",
]
