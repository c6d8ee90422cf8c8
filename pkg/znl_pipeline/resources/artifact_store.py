"""
Artifact Store Resource - Local Artifact Directory

This resource gives stages and assets one place to read and write their files:
- Path resolution under a root directory (absolute paths pass through)
- Series / run CSV and model / report JSON via the serialization module
- Provenance sidecars (<file>.meta.json)
- SHA-256 file hashes for idempotency checks
"""

import os
from pathlib import Path
from typing import Any, Optional

from dagster import ConfigurableResource

from znl_pipeline import serialization
from znl_pipeline.markov import SimulationRun, ZnlModel
from znl_pipeline.systems import TimeSeries


class ArtifactStore(ConfigurableResource):
    """
    Resource for pipeline artifacts on the local filesystem.

    Relative names resolve under ``root_dir``; absolute paths are used as given.
    """

    root_dir: str = os.environ.get("ZNL_OUTPUT_DIR", "data/output")

    def path(self, name: str) -> Path:
        return Path(self.root_dir) / name

    def exists(self, name: str) -> bool:
        return self.path(name).exists()

    def file_hash(self, name: str) -> Optional[str]:
        """SHA-256 of the file, or None when it does not exist."""
        path = self.path(name)
        return serialization.sha256_file(path) if path.exists() else None

    def write_json(self, name: str, data: Any) -> Path:
        return serialization.write_json(data, self.path(name))

    def read_json(self, name: str) -> Any:
        return serialization.read_json(self.path(name))

    def write_sidecar(self, name: str, payload: dict[str, Any]) -> Path:
        return serialization.write_json(payload, serialization.sidecar_path(self.path(name)))

    def read_sidecar(self, name: str) -> dict[str, Any]:
        return serialization.read_json(serialization.sidecar_path(self.path(name)))

    def write_series(self, name: str, series: TimeSeries, header: bool = False) -> Path:
        return serialization.write_series_csv(series, self.path(name), header=header)

    def read_series(self, name: str) -> TimeSeries:
        return serialization.read_series_csv(self.path(name))

    def write_model(self, name: str, model: ZnlModel) -> Path:
        return serialization.write_model(model, self.path(name))

    def read_model(self, name: str) -> ZnlModel:
        return serialization.read_model(self.path(name))

    def write_run(self, name: str, run: SimulationRun) -> Path:
        return serialization.write_run_csv(run, self.path(name))

    def read_run(self, name: str, seed: int = 0) -> SimulationRun:
        return serialization.read_run_csv(self.path(name), seed=seed)

    def write_curve(
        self,
        name: str,
        values,
        index_name: str = "lag",
        value_name: str = "value",
        index=None,
    ) -> Path:
        return serialization.write_curve_csv(
            values, self.path(name), index_name=index_name, value_name=value_name, index=index
        )

    def write_frame(self, name: str, frame) -> Path:
        path = self.path(name)
        path.parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(
            path,
            index=False,
            float_format=serialization.FLOAT_FORMAT,
            lineterminator="\n",
        )
        return path
