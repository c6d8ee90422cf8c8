"""
Tests for the reconstruction diagnostics.
"""

import json

import numpy as np
import pytest  # type: ignore[import-untyped]

from znl_pipeline import diagnostics
from znl_pipeline.diagnostics import (
    autocorrelation,
    cell_mismatch_fraction,
    containment_check,
    diagnose,
    directed_hausdorff,
    itinerary,
    l1_directed_hausdorff,
    theta_curve,
    theta_fidelity,
)
from znl_pipeline.errors import ArgumentError, ConvergenceError
from znl_pipeline.kernel import KernelConfig
from znl_pipeline.markov import build_model, simulate
from znl_pipeline.systems import TimeSeries, generate_henon


A = np.array([0.0, 0.0])
B = np.array([1.0, 1.0])


@pytest.fixture
def swap_model():
    series = TimeSeries(np.array([A, B, A]))
    return build_model(series, 0.1, KernelConfig(ridge=0.0), workers=1)


@pytest.fixture(scope="module")
def coin_series():
    """0, 0, 1, 1, 0, 0, ...: from either value the next is 0 or 1 with probability 1/2."""
    return TimeSeries(np.array([(n // 2) % 2 for n in range(401)], dtype=float))


@pytest.fixture(scope="module")
def cycle_series():
    return TimeSeries(np.array([n % 3 for n in range(61)], dtype=float))


class TestHausdorff:
    """Test directed and L1 Hausdorff distances."""

    def test_directed(self):
        """Verify sup-inf distances in both directions."""
        A_set = np.array([[0.0], [5.0]])
        B_set = np.array([[0.0]])
        assert directed_hausdorff(A_set, B_set) == 5.0
        assert directed_hausdorff(B_set, A_set) == 0.0

    def test_subset_is_zero(self):
        """Verify a subset is at directed distance 0."""
        rng = np.random.default_rng(0)
        points = rng.normal(size=(50, 3))
        assert directed_hausdorff(points[:20], points) == 0.0

    def test_l1_uniform(self):
        """Verify {0, 2} against {0} averages to 1."""
        assert l1_directed_hausdorff(np.array([[0.0], [2.0]]), np.array([[0.0]])) == 1.0

    def test_l1_weighted(self):
        """Verify explicit weights replace the uniform average."""
        A_set = np.array([[0.0], [2.0]])
        assert l1_directed_hausdorff(A_set, np.array([[0.0]]), weights=[0.25, 0.75]) == 1.5

    def test_l1_bad_weights(self):
        """Verify weights must be a probability vector over A."""
        A_set = np.array([[0.0], [2.0]])
        with pytest.raises(ArgumentError):
            l1_directed_hausdorff(A_set, A_set, weights=[0.5, 0.6])
        with pytest.raises(ArgumentError):
            l1_directed_hausdorff(A_set, A_set, weights=[1.0])

    def test_methods_agree(self):
        """Verify brute-force and tree searches give identical distances on random clouds."""
        rng = np.random.default_rng(1)
        for _ in range(100):
            d = int(rng.integers(1, 5))
            A_set = rng.normal(size=(int(rng.integers(1, 80)), d))
            B_set = rng.normal(size=(int(rng.integers(1, 80)), d))
            assert directed_hausdorff(A_set, B_set, method="brute") == directed_hausdorff(
                A_set, B_set, method="tree"
            )
            assert l1_directed_hausdorff(A_set, B_set, method="brute") == l1_directed_hausdorff(
                A_set, B_set, method="tree"
            )


class TestAutocorrelation:
    """Test the lagged autocorrelation curve."""

    def test_alternating_sign(self):
        """Verify +-1 alternation gives -1 at lag 1 and +1 at lag 2."""
        series = np.array([(-1.0) ** n for n in range(10)])
        np.testing.assert_allclose(autocorrelation(series, 2), [-1.0, 1.0])

    def test_shared_normalizer(self):
        """Verify every lag divides by N - T."""
        series = np.array([0.0, 1.0, 0.0, -1.0, 0.0])
        acf = autocorrelation(series, 2)
        # centered values equal the raw ones (mean 0); lag 1 sums 0 over 3 terms
        np.testing.assert_allclose(acf, [0.0, -1.0 / 3.0])

    def test_matches_double_loop(self):
        """Verify the vectorized curve against an explicit sum over samples and coordinates."""
        rng = np.random.default_rng(7)
        points = rng.normal(size=(120, 3))
        T = 15
        N = points.shape[0]
        mean = points.mean(axis=0)
        expected = []
        for t in range(1, T + 1):
            total = 0.0
            for n in range(N - T):
                for k in range(points.shape[1]):
                    total += (points[n, k] - mean[k]) * (points[n + t, k] - mean[k])
            expected.append(total / (N - T))
        np.testing.assert_allclose(autocorrelation(points, T), expected, rtol=0, atol=1e-12)

    def test_constant_series_is_zero(self):
        """Verify a constant series has zero autocorrelation at every lag."""
        np.testing.assert_array_equal(autocorrelation(np.full((30, 2), 4.5), 5), np.zeros(5))

    def test_invariant_under_shift(self):
        """Verify adding a constant vector leaves the curve unchanged."""
        rng = np.random.default_rng(8)
        points = rng.normal(size=(200, 2))
        np.testing.assert_allclose(
            autocorrelation(points + np.array([3.0, -7.0]), 10),
            autocorrelation(points, 10),
            rtol=0,
            atol=1e-12,
        )

    def test_lag_too_long(self):
        """Verify T must be smaller than the series length."""
        with pytest.raises(ArgumentError):
            autocorrelation(np.arange(3.0), 3)


class TestItinerary:
    """Test symbolic itineraries."""

    def test_swap_itinerary(self, swap_model):
        """Verify each sample maps to its own cell."""
        np.testing.assert_array_equal(
            itinerary(np.array([A, B, A, B]), swap_model.cover, training=swap_model.series),
            [0, 1, 0, 1],
        )


class TestThetaCurve:
    """Test the itinerary fidelity theta(N)."""

    def test_deterministic_chain(self, cycle_series):
        """Verify a deterministic period-3 chain always follows the true path."""
        model = build_model(cycle_series, 0.1, workers=1)
        curve = theta_curve(model, cycle_series, Ns=[1, 5, 10, 20], n_samples=500, seed=0)
        assert curve == {1: 1.0, 5: 1.0, 10: 1.0, 20: 1.0}

    def test_fair_coin(self, coin_series):
        """Verify a fair two-state chain stays on the path with probability 2^-N."""
        model = build_model(coin_series, 0.1, workers=1)
        n = 10_000
        curve = theta_curve(model, coin_series, Ns=range(1, 7), n_samples=n, seed=3)
        for N, theta in curve.items():
            p = 2.0**-N
            assert abs(theta - p) <= 3 * np.sqrt(p * (1 - p) / n)

    def test_non_increasing(self, coin_series):
        """Verify the curve never increases with N."""
        model = build_model(coin_series, 0.1, workers=1)
        curve = theta_curve(model, coin_series, Ns=[1, 2, 3, 4, 8], n_samples=2000, seed=9)
        values = [curve[N] for N in sorted(curve)]
        assert all(a >= b for a, b in zip(values, values[1:]))

    def test_shared_random_numbers(self, coin_series):
        """Verify single-N calls with a shared horizon match the curve."""
        model = build_model(coin_series, 0.1, workers=1)
        curve = theta_curve(model, coin_series, Ns=[2, 4], n_samples=1000, seed=5, horizon=4)
        assert theta_fidelity(model, coin_series, None, 2, 1000, 5, horizon=4) == curve[2]

    def test_rejects_bad_arguments(self, coin_series):
        """Verify N and horizon are validated."""
        model = build_model(coin_series, 0.1, workers=1)
        with pytest.raises(ArgumentError):
            theta_curve(model, coin_series, Ns=[0])
        with pytest.raises(ArgumentError):
            theta_curve(model, coin_series, Ns=[4], horizon=2)
        with pytest.raises(ArgumentError):
            theta_curve(model, coin_series, Ns=[500])


class TestContainment:
    """Test containment and cell consistency of a run."""

    def test_exact_run(self, swap_model):
        """Verify an exact reproduction is fully contained and covers the data."""
        run = simulate(swap_model, A, 6, seed=0)
        result = containment_check(swap_model, run)
        assert result.within_delta == 1.0
        assert result.within_3delta == 1.0
        assert result.reverse_distance == 0.0
        assert result.n_points == 7
        assert cell_mismatch_fraction(swap_model, run) == 0.0

    def test_henon_run_mostly_contained(self):
        """Verify a short Henon reconstruction stays near the attractor."""
        series = generate_henon(1.4, 0.3, [0.0, 0.0], 3000)
        model = build_model(series, 0.1, workers=2)
        run = simulate(model, series.points[0], 3000, seed=1)
        result = containment_check(model, run)
        assert result.within_3delta >= 0.95
        assert result.within_delta <= result.within_2delta <= result.within_3delta


class TestDiagnose:
    """Test the combined report."""

    def test_swap_report(self, swap_model):
        """Verify the report for an exact period-2 reconstruction."""
        run = simulate(swap_model, A, 6, seed=0)
        report = diagnose(swap_model, run, lags=1, theta_samples=200, probes=10)
        assert report.hauss_fwd == 0.0
        assert report.hauss_bwd == 0.0
        assert report.l1_fwd == 0.0
        assert report.theta_curve == {1: 1.0, 2: 1.0}
        assert report.spread_p99 == 0.0
        assert report.irreducible
        assert report.n_components == 1
        np.testing.assert_allclose(report.pi, [0.5, 0.5])
        assert report.lipschitz is None
        assert any("theta horizons" in w for w in report.warnings)
        json.dumps(report.to_dict())

    def test_lags_checked(self, swap_model):
        """Verify lags longer than the data are rejected."""
        run = simulate(swap_model, A, 6, seed=0)
        with pytest.raises(ArgumentError):
            diagnose(swap_model, run, lags=5)

    def test_stationary_failure_is_reported(self, swap_model, monkeypatch):
        """Verify a chain that converges neither plainly nor lazily leaves pi empty."""

        def never_converges(model, **kwargs):
            raise ConvergenceError("power iteration did not converge", residual=1.0, iterations=5)

        monkeypatch.setattr(diagnostics, "stationary_measure", never_converges)
        run = simulate(swap_model, A, 6, seed=0)
        report = diagnose(swap_model, run, lags=1, theta_samples=200, probes=10)
        assert report.pi is None
        assert report.stationary_lazy
        assert any("stationary: power iteration" in w for w in report.warnings)

    def test_deterministic(self, cycle_series):
        """Verify equal seeds give equal reports."""
        model = build_model(cycle_series, 0.1, workers=1)
        run = simulate(model, cycle_series.points[0], 60, seed=2)
        first = diagnose(model, run, lags=5, theta_horizons=(1, 2), theta_samples=300, probes=10)
        second = diagnose(model, run, lags=5, theta_horizons=(1, 2), theta_samples=300, probes=10)
        assert first.to_dict() == second.to_dict()
