"""
Serialization - Series, Model, Run and Report Files

File formats used by every stage:
- Series CSV: one sample per row, columns x0..x{d-1}, optional header line
- Model JSON: cover, kernel config, transitions, edge maps and the training series in one document
- Run CSV: step, s, x0..x{d-1}
- Report JSON plus two-column curve CSVs for plotting

Writers are deterministic (fixed float format, sorted keys, "\\n" line endings) so reruns with
the same inputs produce byte-identical files.
"""

import hashlib
import json
from pathlib import Path
from typing import Any, Iterable, Optional, Union

import numpy as np
import pandas as pd

from znl_pipeline.errors import SeriesFormatError
from znl_pipeline.markov import SimulationRun, ZnlModel
from znl_pipeline.systems import TimeSeries


PathLike = Union[str, Path]

FLOAT_FORMAT = "%.17g"
MODEL_FORMAT = "znl-model"
MODEL_VERSION = 1
SIDECAR_SUFFIX = ".meta.json"


def sha256_file(path: PathLike) -> str:
    """SHA-256 hex digest of a file, read in chunks."""
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def sha256_json(data: Any) -> str:
    return hashlib.sha256(dumps_json(data).encode()).hexdigest()


def sidecar_path(path: PathLike) -> Path:
    path = Path(path)
    return path.with_name(path.name + SIDECAR_SUFFIX)


def dumps_json(data: Any) -> str:
    return json.dumps(data, sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_json(data: Any, path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps_json(data))
    return path


def read_json(path: PathLike) -> Any:
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise SeriesFormatError("file not found", path=str(path)) from exc
    except json.JSONDecodeError as exc:
        raise SeriesFormatError(
            f"invalid JSON: {exc.msg}", path=str(path), line=exc.lineno
        ) from exc


def _write_frame(frame: pd.DataFrame, path: PathLike, header: bool = True) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, header=header, float_format=FLOAT_FORMAT, lineterminator="\n")
    return path


def series_frame(series: TimeSeries) -> pd.DataFrame:
    return pd.DataFrame(series.points, columns=[f"x{k}" for k in range(series.dim)])


def write_series_csv(series: TimeSeries, path: PathLike, header: bool = False) -> Path:
    return _write_frame(series_frame(series), path, header=header)


def _is_number(token: str) -> bool:
    try:
        float(token)
    except (TypeError, ValueError):
        return False
    return True


def _numeric_block(raw: pd.DataFrame, path: PathLike, first_line: int) -> np.ndarray:
    """Parse a frame of strings into floats, reporting the first bad cell by file line."""
    values = raw.apply(lambda col: pd.to_numeric(col.str.strip(), errors="coerce"))
    block = values.to_numpy(dtype=float)
    bad = ~np.isfinite(block)
    if bad.any():
        row, col = np.argwhere(bad)[0]
        token = raw.iat[row, col]
        raise SeriesFormatError(
            f"column {col}: '{token}' is not a finite number",
            path=str(path),
            line=first_line + int(row),
        )
    return block


def read_series_csv(path: PathLike) -> TimeSeries:
    """
    Series from CSV; a first line with any non-numeric field is taken as a header.

    Malformed rows raise SeriesFormatError carrying the file and line.
    """
    try:
        raw = pd.read_csv(path, header=None, dtype=str, skip_blank_lines=True)
    except FileNotFoundError as exc:
        raise SeriesFormatError("file not found", path=str(path)) from exc
    except pd.errors.EmptyDataError as exc:
        raise SeriesFormatError("file is empty", path=str(path)) from exc
    except pd.errors.ParserError as exc:
        raise SeriesFormatError(f"malformed CSV: {exc}", path=str(path)) from exc

    first_line = 1
    if not all(_is_number(t) for t in raw.iloc[0]):
        raw = raw.iloc[1:].reset_index(drop=True)
        first_line = 2
    if raw.shape[0] < 2:
        raise SeriesFormatError(
            f"series needs at least 2 samples, found {raw.shape[0]}", path=str(path)
        )
    return TimeSeries(_numeric_block(raw, path, first_line))


def model_document(model: ZnlModel) -> dict[str, Any]:
    document = model.to_dict()
    document["format"] = MODEL_FORMAT
    document["version"] = MODEL_VERSION
    return document


def write_model(model: ZnlModel, path: PathLike) -> Path:
    return write_json(model_document(model), path)


def read_model(path: PathLike) -> ZnlModel:
    document = read_json(path)
    if not isinstance(document, dict) or document.get("format") != MODEL_FORMAT:
        raise SeriesFormatError("not a model file", path=str(path))
    if document.get("version") != MODEL_VERSION:
        raise SeriesFormatError(
            f"unsupported model version {document.get('version')}", path=str(path)
        )
    try:
        return ZnlModel.from_dict(document)
    except (KeyError, TypeError, ValueError) as exc:
        raise SeriesFormatError(f"incomplete model document: {exc}", path=str(path)) from exc


def run_frame(run: SimulationRun) -> pd.DataFrame:
    frame = pd.DataFrame(run.points, columns=[f"x{k}" for k in range(run.points.shape[1])])
    frame.insert(0, "s", run.symbols)
    frame.insert(0, "step", np.arange(len(run.symbols)))
    return frame


def write_run_csv(run: SimulationRun, path: PathLike) -> Path:
    return _write_frame(run_frame(run), path)


def read_run_csv(path: PathLike, seed: int = 0) -> SimulationRun:
    try:
        raw = pd.read_csv(path, dtype=str)
    except FileNotFoundError as exc:
        raise SeriesFormatError("file not found", path=str(path)) from exc
    except (pd.errors.EmptyDataError, pd.errors.ParserError) as exc:
        raise SeriesFormatError(f"malformed run CSV: {exc}", path=str(path)) from exc
    coords = [c for c in raw.columns if c.startswith("x")]
    if list(raw.columns[:2]) != ["step", "s"] or not coords:
        raise SeriesFormatError("run CSV needs columns step, s, x0, ...", path=str(path), line=1)
    if raw.shape[0] == 0:
        raise SeriesFormatError("run has no rows", path=str(path))
    symbols = _numeric_block(raw[["s"]], path, 2)[:, 0].astype(np.int64)
    points = _numeric_block(raw[coords], path, 2)
    return SimulationRun(seed=seed, symbols=symbols, points=points)


def write_curve_csv(
    values: Iterable[float],
    path: PathLike,
    index_name: str = "lag",
    value_name: str = "value",
    index: Optional[Iterable[int]] = None,
) -> Path:
    values = list(values)
    index = list(range(1, len(values) + 1)) if index is None else list(index)
    frame = pd.DataFrame({index_name: index, value_name: values})
    return _write_frame(frame, path)
