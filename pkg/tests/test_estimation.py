"""Tests for the algebraic sliding-window estimators."""

import numpy as np
import pandas as pd
import pytest
from scipy.integrate import quad

from vehctl.errors import (
    InsufficientDataError,
    ParameterError,
    SamplingError,
    SchemaError,
    WindowAlignmentError,
)
from vehctl.estimation import (
    Denoiser,
    Differentiator,
    EstimatorConfig,
    FEstimator,
    SlidingWindow,
    denoise,
    denoise_time,
    differentiate,
    estimate_F_order1,
    estimate_F_order2,
    estimate_frame,
    kernel_weights,
)

PERIOD = 0.001


def window_of(func, span, t_end, period=PERIOD):
    n = int(round(span / period)) + 1
    t = t_end - span + np.arange(n) * period
    return SlidingWindow.from_samples(func(t), period, t_end)


class TestSlidingWindow:
    """Tests for SlidingWindow."""

    def test_size(self):
        """Should hold span/period + 1 samples."""
        assert SlidingWindow(0.1, 0.001).size == 101
        assert SlidingWindow(0.05, 0.001).size == 51

    def test_warms_up_after_size_samples(self):
        """Should become warm exactly when full."""
        window = SlidingWindow(0.01, 0.001)
        for k in range(10):
            window.push(float(k), k * 0.001)
        assert not window.is_warm
        window.push(10.0, 0.01)
        assert window.is_warm

    def test_values_are_oldest_first(self):
        """Should return the last `size` samples oldest first after wrapping."""
        window = SlidingWindow(0.002, 0.001)
        for k in range(5):
            window.push(float(k), k * 0.001)
        np.testing.assert_array_equal(window.values(), [2.0, 3.0, 4.0])
        np.testing.assert_allclose(window.times(), [0.002, 0.003, 0.004])
        assert window.end_time == pytest.approx(0.004)
        assert window.start_time == pytest.approx(0.002)

    def test_rejects_irregular_sample(self):
        """Should raise SamplingError on a jittered timestamp."""
        window = SlidingWindow(0.01, 0.001)
        window.push(0.0, 0.0)
        with pytest.raises(SamplingError):
            window.push(0.0, 0.0011)

    def test_cold_window_raises(self):
        """Should refuse to estimate before the window is full."""
        window = SlidingWindow(0.01, 0.001)
        window.push(1.0, 0.0)
        with pytest.raises(InsufficientDataError):
            differentiate(window)
        with pytest.raises(InsufficientDataError):
            denoise(window)

    def test_rejects_span_shorter_than_two_periods(self):
        """Should reject a window that cannot hold a chord."""
        with pytest.raises(ParameterError):
            SlidingWindow(0.001, 0.001)


class TestKernelWeights:
    """Tests for kernel_weights."""

    def test_denoise_weights_sum_to_one(self):
        """Should integrate the normalized denoise kernel to one."""
        assert kernel_weights("denoise", 101).sum() == pytest.approx(1.0, abs=1e-12)

    def test_derivative_weights_sum_to_zero(self):
        """Should annihilate constants."""
        assert kernel_weights("derivative", 101).sum() == pytest.approx(0.0, abs=1e-12)

    def test_weights_are_read_only(self):
        """Should hand out cached arrays that cannot be modified."""
        weights = kernel_weights("derivative", 11)
        with pytest.raises(ValueError):
            weights[0] = 1.0


class TestDifferentiate:
    """Tests for differentiate."""

    @pytest.mark.parametrize("slope", [-5.0, 0.1, 3.0])
    def test_exact_on_ramps(self, slope):
        """Should recover the slope of a ramp to rounding."""
        window = window_of(lambda t: slope * t + 1.0, 0.1, 2.0)
        assert differentiate(window) == pytest.approx(slope, rel=1e-9)

    def test_constant_has_zero_derivative(self):
        """Should return zero for a constant signal."""
        window = window_of(lambda t: np.full_like(t, 5.0), 0.05, 1.0)
        assert differentiate(window) == pytest.approx(0.0, abs=1e-9)

    def test_parabola_lags_by_half_window(self):
        """Should return the derivative at the window centre for y = t^2."""
        window = window_of(lambda t: t**2, 0.1, 2.0)
        assert differentiate(window) == pytest.approx(2.0 * (2.0 - 0.05), rel=1e-6)

    def test_linear(self):
        """Should be linear in the signal."""
        a = window_of(np.sin, 0.05, 1.0)
        b = window_of(np.exp, 0.05, 1.0)
        combined = window_of(lambda t: 2.0 * np.sin(t) - 3.0 * np.exp(t), 0.05, 1.0)
        expected = 2.0 * differentiate(a) - 3.0 * differentiate(b)
        assert differentiate(combined) == pytest.approx(expected, rel=1e-9)

    def test_quadrature_converges_quadratically(self):
        """Should divide the quadrature error by about four when the period halves."""
        omega, span, t_end = 20.0, 0.1, 1.0

        def exact():
            start = t_end - span
            integral, _ = quad(lambda s: (span - 2.0 * s) * np.sin(omega * (start + s)),
                               0.0, span, epsabs=1e-12)
            return -6.0 / span**3 * integral

        errors = []
        for period in (0.002, 0.001):
            window = window_of(lambda t: np.sin(omega * t), span, t_end, period)
            errors.append(abs(differentiate(window) - exact()))
        assert 3.0 < errors[0] / errors[1] < 5.0

    def test_noise_variance_drops_with_span(self):
        """Should amplify white noise less as the window grows."""
        gains = []
        for span in (0.02, 0.05, 0.1):
            size = int(round(span / PERIOD)) + 1
            weights = (6.0 / span) * kernel_weights("derivative", size)
            gains.append(np.sum(weights**2))
        assert gains[0] > gains[1] > gains[2]


class TestDenoise:
    """Tests for denoise and denoise_time."""

    def test_constant(self):
        """Should return a constant unchanged."""
        window = window_of(lambda t: np.full_like(t, 7.5), 0.05, 1.0)
        assert denoise(window) == pytest.approx(7.5, rel=1e-6)

    def test_ramp_refers_to_window_start(self):
        """Should return the ramp value at t - T."""
        window = window_of(lambda t: 4.0 * t - 1.0, 0.1, 3.0)
        assert denoise_time(window) == pytest.approx(2.9)
        assert denoise(window) == pytest.approx(4.0 * 2.9 - 1.0, rel=1e-9)

    def test_noise_is_unbiased(self):
        """Should average Gaussian noise on a constant down to zero mean."""
        rng = np.random.default_rng(11)
        sigma, level, n = 0.2, 3.0, 1000
        estimates = [
            denoise(SlidingWindow.from_samples(
                level + sigma * rng.standard_normal(n), PERIOD, 1.0))
            for _ in range(100)
        ]
        spread = sigma * np.sqrt(np.sum(kernel_weights("denoise", n) ** 2))
        assert abs(np.mean(estimates) - level) < 4.0 * spread / np.sqrt(100)
        assert np.std(estimates) < sigma


class TestEstimateF:
    """Tests for estimate_F_order1 and estimate_F_order2."""

    def test_order1_recovers_constant_F(self):
        """Should recover F = 2 from y_dot = 2 + sin t with u = sin t."""
        span, t_end = 0.1, 1.0
        y = window_of(lambda t: 2.0 * t - np.cos(t), span, t_end)
        u = window_of(np.sin, span, t_end)
        assert estimate_F_order1(y, u, alpha=1.0) == pytest.approx(2.0, rel=0.01)

    def test_order2_recovers_constant_F(self):
        """Should recover F = -1 from y_ddot = -1 + 2 cos 2t with u = cos 2t."""
        span, t_end = 0.1, 2.0
        y = window_of(lambda t: -0.5 * t**2 - 0.5 * np.cos(2.0 * t), span, t_end)
        u = window_of(lambda t: np.cos(2.0 * t), span, t_end)
        assert estimate_F_order2(y, u, alpha=2.0) == pytest.approx(-1.0, rel=0.02)

    def test_order2_sign_on_pure_parabola(self):
        """Should return +F for y = F t^2 / 2 and no input."""
        y = window_of(lambda t: 1.5 * t**2, 0.05, 1.0)
        u = window_of(np.zeros_like, 0.05, 1.0)
        assert estimate_F_order2(y, u, alpha=1.0) == pytest.approx(3.0, rel=1e-5)

    def test_order1_ignores_constant_output(self):
        """Should give F = 0 for a constant output and zero input."""
        y = window_of(lambda t: np.full_like(t, 5.0), 0.05, 1.0)
        u = window_of(np.zeros_like, 0.05, 1.0)
        assert abs(estimate_F_order1(y, u, alpha=1.0)) < 1e-6

    def test_order2_annihilates_affine_output(self):
        """Should give F = 0 for an affine output and zero input."""
        y = window_of(lambda t: 3.0 * t - 2.0, 0.05, 1.0)
        u = window_of(np.zeros_like, 0.05, 1.0)
        assert abs(estimate_F_order2(y, u, alpha=1.0)) < 1e-6

    def test_rejects_mismatched_windows(self):
        """Should raise WindowAlignmentError for windows of different size."""
        y = window_of(np.sin, 0.05, 1.0)
        u = window_of(np.sin, 0.1, 1.0)
        with pytest.raises(WindowAlignmentError):
            estimate_F_order1(y, u, alpha=1.0)

    def test_rejects_skewed_windows(self):
        """Should raise WindowAlignmentError when the windows end at different times."""
        y = window_of(np.sin, 0.05, 1.0)
        u = window_of(np.sin, 0.05, 1.01)
        with pytest.raises(WindowAlignmentError):
            estimate_F_order1(y, u, alpha=1.0)


class TestEstimatorConfig:
    """Tests for EstimatorConfig."""

    def test_rejects_order_three(self):
        """Should only allow nu in {1, 2}."""
        with pytest.raises(ParameterError):
            EstimatorConfig(nu=3)

    def test_rejects_zero_alpha(self):
        """Should reject alpha = 0."""
        with pytest.raises(ParameterError):
            EstimatorConfig(alpha=0.0)

    def test_span_must_cover_ten_periods(self):
        """Should reject a span shorter than ten sampling periods."""
        with pytest.raises(ParameterError):
            FEstimator(EstimatorConfig(span=0.005), 0.001)
        FEstimator(EstimatorConfig(span=0.01), 0.001)


class TestStreamingEstimators:
    """Tests for Differentiator, Denoiser and FEstimator."""

    def test_differentiator_warmup(self):
        """Should return None until the window is full, then the slope."""
        diff = Differentiator(0.01, 0.001)
        outputs = [diff.push(2.0 * k * 0.001, k * 0.001) for k in range(12)]
        assert outputs[:10] == [None] * 10
        assert outputs[10] == pytest.approx(2.0, rel=1e-9)
        assert outputs[11] == pytest.approx(2.0, rel=1e-9)

    def test_denoiser_reports_value_time(self):
        """Should expose the instant the denoised value refers to."""
        denoiser = Denoiser(0.01, 0.001)
        for k in range(11):
            denoiser.push(1.0, k * 0.001)
        assert denoiser.value_time == pytest.approx(0.0, abs=1e-12)

    def test_streaming_matches_batch(self):
        """Should give the same F as the batch estimator on the same samples."""
        config = EstimatorConfig(span=0.05, alpha=2.0, nu=2)
        estimator = FEstimator(config, PERIOD)
        t = np.arange(200) * PERIOD
        y = np.sin(3.0 * t)
        u = np.cos(t)
        for k in range(200):
            estimator.push(y[k], u[k], t[k])
        batch = estimate_F_order2(
            SlidingWindow.from_samples(y[-51:], PERIOD, t[-1]),
            SlidingWindow.from_samples(u[-51:], PERIOD, t[-1]),
            2.0,
        )
        assert estimator.value == pytest.approx(batch, rel=1e-9)


class TestEstimateFrame:
    """Tests for estimate_frame."""

    def test_adds_estimate_columns(self):
        """Should add the estimate columns and leave warmup rows empty."""
        t = np.arange(100) * PERIOD
        frame = pd.DataFrame({"t": t, "y": 3.0 * t, "u": np.zeros(100)})
        result = estimate_frame(frame, EstimatorConfig(span=0.02))
        assert {"denoised", "denoised_time", "derivative", "F_est"} <= set(result.columns)
        assert result["derivative"].iloc[:20].isna().all()
        assert result["derivative"].iloc[20:].to_numpy() == pytest.approx(3.0, rel=1e-9)
        assert result["F_est"].iloc[20:].to_numpy() == pytest.approx(3.0, rel=1e-9)

    def test_without_input_column(self):
        """Should skip F_est when there is no input column."""
        t = np.arange(50) * PERIOD
        result = estimate_frame(pd.DataFrame({"t": t, "y": t}), EstimatorConfig(span=0.02))
        assert "F_est" not in result.columns

    def test_missing_column(self):
        """Should raise SchemaError naming the missing column."""
        with pytest.raises(SchemaError, match="'y'"):
            estimate_frame(pd.DataFrame({"t": [0.0, 0.001]}), EstimatorConfig())
