"""
Tests for series, model, run and curve files.
"""

import json

import numpy as np
import pytest  # type: ignore[import-untyped]

from znl_pipeline.errors import SeriesFormatError
from znl_pipeline.markov import build_model, simulate
from znl_pipeline.serialization import (
    MODEL_FORMAT,
    read_json,
    read_model,
    read_run_csv,
    read_series_csv,
    sha256_json,
    sidecar_path,
    write_curve_csv,
    write_json,
    write_model,
    write_run_csv,
    write_series_csv,
)
from znl_pipeline.systems import TimeSeries, generate_henon


@pytest.fixture(scope="module")
def henon_model():
    return build_model(generate_henon(1.4, 0.3, [0.0, 0.0], 800), 0.2, workers=1)


class TestSeriesCsv:
    """Test series CSV reading and writing."""

    @pytest.mark.parametrize("header", [False, True])
    def test_exact_round_trip(self, tmp_path, header):
        """Verify written values read back bit-for-bit."""
        rng = np.random.default_rng(0)
        series = TimeSeries(rng.normal(size=(20, 3)) * 1e3)
        path = write_series_csv(series, tmp_path / "series.csv", header=header)
        np.testing.assert_array_equal(read_series_csv(path).points, series.points)

    def test_header_written(self, tmp_path):
        """Verify the optional header names the coordinates."""
        path = write_series_csv(TimeSeries(np.zeros((2, 2))), tmp_path / "s.csv", header=True)
        assert path.read_text().splitlines()[0] == "x0,x1"

    def test_bad_token_reports_line(self, tmp_path):
        """Verify a non-numeric cell is reported with its file line."""
        path = tmp_path / "bad.csv"
        path.write_text("x0,x1\n1,2\n3,abc\n")
        with pytest.raises(SeriesFormatError) as exc:
            read_series_csv(path)
        assert exc.value.line == 3
        assert "abc" in str(exc.value)

    def test_single_sample(self, tmp_path):
        """Verify one sample is too few."""
        path = tmp_path / "one.csv"
        path.write_text("1.0,2.0\n")
        with pytest.raises(SeriesFormatError):
            read_series_csv(path)

    def test_missing_and_empty(self, tmp_path):
        """Verify missing and empty files are format errors."""
        with pytest.raises(SeriesFormatError):
            read_series_csv(tmp_path / "absent.csv")
        empty = tmp_path / "empty.csv"
        empty.write_text("")
        with pytest.raises(SeriesFormatError):
            read_series_csv(empty)


class TestModelJson:
    """Test the model document."""

    def test_round_trip(self, tmp_path, henon_model):
        """Verify a reloaded model has the same content and simulates identically."""
        path = write_model(henon_model, tmp_path / "model.json")
        restored = read_model(path)
        assert restored.to_dict() == henon_model.to_dict()
        x0 = henon_model.series.points[0]
        first = simulate(restored, x0, 100, seed=1)
        second = simulate(henon_model, x0, 100, seed=1)
        np.testing.assert_array_equal(first.points, second.points)

    def test_wrong_format(self, tmp_path):
        """Verify a JSON file that is not a model is rejected."""
        path = write_json({"format": "other"}, tmp_path / "model.json")
        with pytest.raises(SeriesFormatError, match="not a model file"):
            read_model(path)

    def test_wrong_version(self, tmp_path):
        """Verify an unknown version is rejected."""
        path = write_json({"format": MODEL_FORMAT, "version": 99}, tmp_path / "model.json")
        with pytest.raises(SeriesFormatError, match="version"):
            read_model(path)

    def test_invalid_json(self, tmp_path):
        """Verify malformed JSON carries its line."""
        path = tmp_path / "model.json"
        path.write_text("{\n  \"format\": \n")
        with pytest.raises(SeriesFormatError) as exc:
            read_json(path)
        assert exc.value.line is not None


class TestRunCsv:
    """Test simulation run files."""

    def test_round_trip(self, tmp_path, henon_model):
        """Verify symbols and points survive a write / read."""
        run = simulate(henon_model, henon_model.series.points[0], 50, seed=4)
        path = write_run_csv(run, tmp_path / "run.csv")
        restored = read_run_csv(path, seed=4)
        np.testing.assert_array_equal(restored.symbols, run.symbols)
        np.testing.assert_array_equal(restored.points, run.points)
        assert path.read_text().splitlines()[0] == "step,s,x0,x1"

    def test_missing_columns(self, tmp_path):
        """Verify a run file needs step and s columns."""
        path = tmp_path / "run.csv"
        path.write_text("a,b\n1,2\n")
        with pytest.raises(SeriesFormatError):
            read_run_csv(path)


class TestJsonHelpers:
    """Test hashing, sidecars and curves."""

    def test_hash_ignores_key_order(self):
        """Verify canonical JSON hashing is key-order independent."""
        assert sha256_json({"a": 1, "b": [1, 2]}) == sha256_json({"b": [1, 2], "a": 1})
        assert sha256_json({"a": 1}) != sha256_json({"a": 2})

    def test_sidecar_path(self, tmp_path):
        """Verify sidecars sit next to their artifact."""
        assert sidecar_path(tmp_path / "run.csv") == tmp_path / "run.csv.meta.json"

    def test_curve(self, tmp_path):
        """Verify curves are written with a 1-based index by default."""
        path = write_curve_csv([0.5, 0.25], tmp_path / "curve.csv", value_name="theta")
        assert path.read_text().splitlines() == ["lag,theta", "1,0.5", "2,0.25"]

    def test_json_is_canonical(self, tmp_path):
        """Verify written JSON has sorted keys."""
        path = write_json({"b": 1, "a": 2}, tmp_path / "x.json")
        assert list(json.loads(path.read_text())) == ["a", "b"]
