"""
Pipeline Configuration

PipelineConfig is a dagster Config (pydantic model), so the same object configures the CLI
stages and the dagster assets:
- Loaded from a single JSON document; command-line flags override file values
- Unknown keys and out-of-range values are configuration errors
- to_dict() / from_dict() round-trip losslessly; the effective config is echoed with every output
"""

import json
import os
from pathlib import Path
from typing import Any, Optional

from dagster import Config
from pydantic import ValidationError

from znl_pipeline.errors import ConfigError
from znl_pipeline.kernel import KernelConfig
from znl_pipeline.systems import (
    FLOW_DT,
    FLOW_SAMPLE_STRIDE,
    FLOW_TRANSIENT_SKIP,
    HENON_TRANSIENT_SKIP,
    HenonParams,
    Lorenz63Params,
    Lorenz96Params,
    SystemParams,
)


SYSTEMS = ("lorenz63", "henon", "lorenz96", "csv")
NEIGHBOR_METHODS = ("auto", "brute", "tree")


class PipelineConfig(Config):
    """Every parameter of a generate -> fit -> simulate -> diagnose run."""

    # trajectory
    system: str = "henon"
    sigma: float = 10.0
    rho: float = 28.0
    beta: float = 8.0 / 3.0
    henon_a: float = 1.4
    henon_b: float = 0.3
    forcing: float = 8.0
    m: int = 10
    csv_path: Optional[str] = None
    header: bool = False
    n_samples: int = 10_000
    dt: float = FLOW_DT
    sample_stride: int = FLOW_SAMPLE_STRIDE
    transient_skip: Optional[int] = None
    initial_state: Optional[list[float]] = None

    # model
    delta: float = 0.1
    eta: float = 0.01
    theta_zero: float = 1e-14
    subsample_fraction: float = 0.1
    gamma: float = 0.001
    bandwidth: Optional[float] = None
    strict_domain: bool = False
    restrict_to_core: bool = False

    # seeds
    generation_seed: int = 0
    simulation_seed: int = 1
    diagnostics_seed: int = 2

    # simulation and diagnostics
    simulation_steps: int = 100_000
    x0: Optional[list[float]] = None
    lags: int = 50
    theta_samples: int = 10_000
    theta_horizons: list[int] = [1, 2, 4, 8, 16]
    spread_probes: int = 100
    sweep_deltas: list[float] = [0.4, 0.2, 0.1]

    # execution
    output_dir: str = os.environ.get("ZNL_OUTPUT_DIR", "data/output")
    threads: Optional[int] = None
    neighbor_method: str = "auto"

    def check_ranges(self) -> "PipelineConfig":
        """Range checks; raises ConfigError naming the offending field."""
        problems = []
        if self.system not in SYSTEMS:
            problems.append(f"system must be one of {SYSTEMS}, got '{self.system}'")
        if self.system == "csv" and not self.csv_path:
            problems.append("system 'csv' needs csv_path")
        if self.system == "lorenz96" and self.m < 4:
            problems.append(f"m must be >= 4, got {self.m}")
        if self.neighbor_method not in NEIGHBOR_METHODS:
            problems.append(f"neighbor_method must be one of {NEIGHBOR_METHODS}")
        positive = {
            "delta": self.delta,
            "dt": self.dt,
            "n_samples": self.n_samples,
            "sample_stride": self.sample_stride,
            "simulation_steps": self.simulation_steps,
            "lags": self.lags,
            "theta_samples": self.theta_samples,
            "spread_probes": self.spread_probes,
        }
        problems += [f"{k} must be positive, got {v}" for k, v in positive.items() if not v > 0]
        if not 0.0 < self.eta < 1.0:
            problems.append(f"eta must be in (0, 1), got {self.eta}")
        if not 0.0 < self.theta_zero < 1.0:
            problems.append(f"theta_zero must be in (0, 1), got {self.theta_zero}")
        if not 0.0 < self.subsample_fraction <= 1.0:
            problems.append(f"subsample_fraction must be in (0, 1], got {self.subsample_fraction}")
        if self.gamma < 0:
            problems.append(f"gamma must be >= 0, got {self.gamma}")
        if self.bandwidth is not None and not self.bandwidth > 0:
            problems.append(f"bandwidth must be positive, got {self.bandwidth}")
        if self.transient_skip is not None and self.transient_skip < 0:
            problems.append(f"transient_skip must be >= 0, got {self.transient_skip}")
        if self.threads is not None and self.threads < 1:
            problems.append(f"threads must be >= 1, got {self.threads}")
        if not self.theta_horizons or min(self.theta_horizons) < 1:
            problems.append("theta_horizons must be a non-empty list of positive integers")
        if not self.sweep_deltas or min(self.sweep_deltas) <= 0:
            problems.append("sweep_deltas must be a non-empty list of positive numbers")
        for name in ("generation_seed", "simulation_seed", "diagnostics_seed"):
            if getattr(self, name) < 0:
                problems.append(f"{name} must be non-negative")
        if problems:
            raise ConfigError("invalid configuration: " + "; ".join(problems))
        return self

    def kernel_config(self) -> KernelConfig:
        return KernelConfig(
            bandwidth=self.bandwidth,
            zero_threshold=self.theta_zero,
            quantile=self.eta,
            subsample_fraction=self.subsample_fraction,
            ridge=self.gamma,
            strict_domain=self.strict_domain,
        )

    def system_params(self) -> SystemParams:
        return SystemParams(
            lorenz63=Lorenz63Params(sigma=self.sigma, rho=self.rho, beta=self.beta),
            henon=HenonParams(a=self.henon_a, b=self.henon_b),
            lorenz96=Lorenz96Params(forcing=self.forcing, m=self.m),
        )

    def effective_transient_skip(self) -> int:
        if self.transient_skip is not None:
            return self.transient_skip
        return HENON_TRANSIENT_SKIP if self.system == "henon" else FLOW_TRANSIENT_SKIP

    def to_dict(self) -> dict[str, Any]:
        return self.model_dump()

    def with_overrides(self, **overrides: Any) -> "PipelineConfig":
        """New config with the non-None ``overrides`` applied."""
        values = self.to_dict()
        values.update({k: v for k, v in overrides.items() if v is not None})
        return PipelineConfig.from_dict(values)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "PipelineConfig":
        unknown = sorted(set(data) - set(cls.model_fields))
        if unknown:
            raise ConfigError(f"unknown configuration keys: {unknown}")
        try:
            return cls(**data)
        except ValidationError as exc:
            raise ConfigError(f"invalid configuration: {exc}") from exc

    @classmethod
    def load_json(cls, path: Optional[str], **overrides: Any) -> "PipelineConfig":
        """Config from a JSON file (or defaults when ``path`` is None), then CLI overrides."""
        data: dict[str, Any] = {}
        if path is not None:
            try:
                data = json.loads(Path(path).read_text())
            except FileNotFoundError as exc:
                raise ConfigError(f"config file not found: {path}") from exc
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}:{exc.lineno}: invalid JSON: {exc.msg}") from exc
            if not isinstance(data, dict):
                raise ConfigError(f"{path}: config must be a JSON object")
        config = cls.from_dict(data)
        if overrides:
            config = config.with_overrides(**overrides)
        return config.check_ranges()


def run_config_for(config: PipelineConfig) -> dict[str, Any]:
    """dagster run_config that hands ``config`` to every pipeline asset."""
    values = config.to_dict()
    ops = ("training_series", "znl_model", "markov_run", "diagnostics_report")
    return {"ops": {name: {"config": values} for name in ops}}
