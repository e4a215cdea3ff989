"""
Algebraic sliding-window estimators.

Every estimator is an integral of the last T seconds of a uniformly sampled
signal against a low-degree polynomial kernel:

    denoise        y_hat(t)  = 2/T^2   int (3(t-s) - T) y(s) ds
    differentiate  y'_hat(t) = -6/T^3  int (2(t-s) - T) y(s) ds
    F, nu = 1      F(t) = -6/tau^3 int [(tau - 2 sig) y + alpha sig (tau - sig) u] dsig
    F, nu = 2      F(t) = 60/tau^5 int (tau^2 + 6 sig^2 - 6 tau sig) y dsig
                        - 30 alpha/tau^5 int (tau - sig)^2 sig^2 u dsig

with sig measured from the start of the window (sig in [0, tau]). See
docs/estimators.md for the two sign/typo corrections relative to the
commonly printed forms and for the operational-calculus derivation.

Integrals use the composite trapezoid in product form: the samples are joined
by straight lines and each kernel is integrated exactly against every linear
piece. Affine signals are therefore handled exactly, and smooth signals with
an O(period^2) error.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import pandas as pd
from numpy.polynomial import Polynomial

from vehctl.errors import (
    InsufficientDataError,
    ParameterError,
    SamplingError,
    SchemaError,
    WindowAlignmentError,
)

# Allowed deviation of a sample interval from the nominal period [s]
SAMPLING_TOLERANCE = 1e-9

# A window must hold at least this many periods
MIN_PERIODS_PER_SPAN = 10

DEFAULT_SPAN = 0.05


# =============================================================================
# Sliding Window
# =============================================================================

class SlidingWindow:
    """Fixed-duration ring buffer of uniformly sampled values.

    Holds round(span/period) + 1 samples once warm; samples are stored
    oldest-first in window coordinates sig = 0 .. span.
    """

    def __init__(self, span: float, period: float):
        if not period > 0:
            raise ParameterError(f"period must be > 0, got {period}")
        if not span >= 2 * period:
            raise ParameterError(f"span {span} must cover at least two periods")
        self.period = period
        self.size = int(round(span / period)) + 1
        self._values = np.zeros(self.size)
        self._times = np.zeros(self.size)
        self._head = 0  # next write position == oldest sample once warm
        self._count = 0

    @property
    def span(self) -> float:
        """Covered duration T = (size - 1) * period."""
        return (self.size - 1) * self.period

    @property
    def is_warm(self) -> bool:
        return self._count >= self.size

    @property
    def end_time(self) -> float:
        if self._count == 0:
            raise InsufficientDataError("window is empty")
        return float(self._times[(self._head - 1) % self.size])

    @property
    def start_time(self) -> float:
        return self.end_time - self.span

    def __len__(self) -> int:
        return min(self._count, self.size)

    def push(self, value: float, t: float) -> None:
        """Append a sample taken at time t (one period after the previous one)."""
        if self._count:
            gap = t - self._times[(self._head - 1) % self.size]
            if abs(gap - self.period) >= SAMPLING_TOLERANCE:
                raise SamplingError(
                    f"sample at t={t} is {gap} s after the previous one, "
                    f"expected {self.period} s"
                )
        self._values[self._head] = value
        self._times[self._head] = t
        self._head = (self._head + 1) % self.size
        self._count += 1

    def values(self) -> np.ndarray:
        """Samples oldest-first (copy)."""
        n = len(self)
        if n < self.size:
            return self._values[:n].copy()
        return np.concatenate((self._values[self._head:], self._values[:self._head]))

    def times(self) -> np.ndarray:
        n = len(self)
        if n < self.size:
            return self._times[:n].copy()
        return np.concatenate((self._times[self._head:], self._times[:self._head]))

    def weighted_sum(self, weights: np.ndarray) -> float:
        """sum_j weights[j] * sample[j] with samples oldest-first, no copy."""
        if not self.is_warm:
            raise InsufficientDataError(
                f"window holds {self._count} of {self.size} samples"
            )
        h = self._head
        tail = self.size - h
        return float(
            np.dot(weights[:tail], self._values[h:])
            + np.dot(weights[tail:], self._values[:h])
        )

    @classmethod
    def from_samples(
        cls, values: np.ndarray, period: float, t_end: float = 0.0
    ) -> "SlidingWindow":
        """Warm window filled with `values` (oldest first) ending at t_end."""
        values = np.asarray(values, dtype=float)
        window = cls((len(values) - 1) * period, period)
        start = t_end - (len(values) - 1) * period
        for j, value in enumerate(values):
            window.push(value, start + j * period)
        return window


# =============================================================================
# Kernel Quadrature
# =============================================================================

# Kernels in normalized window coordinate xi = sig / T in [0, 1]
_KERNELS = {
    "denoise": Polynomial([4.0, -6.0]),             # 2 (2 - 3 xi)
    "derivative": Polynomial([1.0, -2.0]),          # (1 - 2 xi)
    "f1_input": Polynomial([0.0, 1.0, -1.0]),       # xi (1 - xi)
    "f2_output": Polynomial([1.0, -6.0, 6.0]),      # 1 - 6 xi + 6 xi^2
    "f2_input": Polynomial([0.0, 0.0, 1.0, -2.0, 1.0]),  # xi^2 (1 - xi)^2
}


@lru_cache(maxsize=64)
def kernel_weights(kernel: str, size: int) -> np.ndarray:
    """Quadrature weights w_j with int_0^1 k(xi) y(xi) dxi ~ sum_j w_j y_j.

    The signal is taken piecewise linear between the `size` equally spaced
    samples, so w_j = int k(xi) phi_j(xi) dxi with phi_j the hat function of
    node j; the kernel polynomial is integrated exactly.
    """
    k = _KERNELS[kernel]
    n = size - 1
    h = 1.0 / n
    grid = np.arange(size) * h
    p0 = k.integ()
    p1 = (k * Polynomial([0.0, 1.0])).integ()
    i0 = np.diff(p0(grid))
    i1 = np.diff(p1(grid))
    left = grid[:-1]
    right = grid[1:]
    weights = np.zeros(size)
    weights[1:] += (i1 - left * i0) / h
    weights[:-1] += (right * i0 - i1) / h
    weights.setflags(write=False)
    return weights


def _require_warm(window: SlidingWindow) -> None:
    if not window.is_warm:
        raise InsufficientDataError(
            f"window holds {len(window)} of {window.size} samples"
        )


def _check_aligned(y_window: SlidingWindow, u_window: SlidingWindow) -> None:
    _require_warm(y_window)
    _require_warm(u_window)
    if y_window.size != u_window.size or abs(y_window.period - u_window.period) > 0:
        raise WindowAlignmentError(
            f"windows differ: {y_window.size} samples @ {y_window.period} s vs "
            f"{u_window.size} samples @ {u_window.period} s"
        )
    skew = abs(y_window.end_time - u_window.end_time)
    if skew > 0.5 * y_window.period:
        raise WindowAlignmentError(f"windows are skewed by {skew} s")


# =============================================================================
# Estimators
# =============================================================================

def denoise(window: SlidingWindow) -> float:
    """Denoised value; for affine signals it equals y(t - T) (see denoise_time)."""
    _require_warm(window)
    return window.weighted_sum(kernel_weights("denoise", window.size))


def denoise_time(window: SlidingWindow) -> float:
    """Instant the denoised value refers to: the start of the window."""
    return window.start_time


def differentiate(window: SlidingWindow) -> float:
    """First-derivative estimate, exact on affine signals."""
    _require_warm(window)
    scale = -6.0 / window.span
    return scale * window.weighted_sum(kernel_weights("derivative", window.size))


def estimate_F_order1(
    y_window: SlidingWindow, u_window: SlidingWindow, alpha: float
) -> float:
    """F of y_dot = F + alpha u, taken constant over the window."""
    _check_aligned(y_window, u_window)
    size = y_window.size
    output = (-6.0 / y_window.span) * y_window.weighted_sum(
        kernel_weights("derivative", size)
    )
    forcing = -6.0 * alpha * u_window.weighted_sum(kernel_weights("f1_input", size))
    return output + forcing


def estimate_F_order2(
    y_window: SlidingWindow, u_window: SlidingWindow, alpha: float
) -> float:
    """F of y_ddot = F + alpha u, taken constant over the window."""
    _check_aligned(y_window, u_window)
    size = y_window.size
    tau = y_window.span
    output = (60.0 / tau**2) * y_window.weighted_sum(kernel_weights("f2_output", size))
    forcing = -30.0 * alpha * u_window.weighted_sum(kernel_weights("f2_input", size))
    return output + forcing


# =============================================================================
# Streaming Estimators
# =============================================================================

@dataclass(frozen=True)
class EstimatorConfig:
    """Window length, input gain and derivation order of an F estimator."""
    span: float = DEFAULT_SPAN
    alpha: float = 1.0
    nu: int = 1

    def __post_init__(self):
        if self.nu not in (1, 2):
            raise ParameterError(f"nu must be 1 or 2, got {self.nu}")
        if self.alpha == 0 or not np.isfinite(self.alpha):
            raise ParameterError("alpha must be finite and non-zero")
        if not self.span > 0:
            raise ParameterError(f"span must be > 0, got {self.span}")

    def check_period(self, period: float) -> None:
        if self.span < MIN_PERIODS_PER_SPAN * period - SAMPLING_TOLERANCE:
            raise ParameterError(
                f"span {self.span} s is shorter than {MIN_PERIODS_PER_SPAN} "
                f"sampling periods of {period} s"
            )


class Differentiator:
    """Streaming differentiator: push samples, read `value` once warm."""

    def __init__(self, span: float, period: float):
        self.window = SlidingWindow(span, period)
        self.value: float | None = None

    def push(self, y: float, t: float) -> float | None:
        self.window.push(y, t)
        if self.window.is_warm:
            self.value = differentiate(self.window)
        return self.value


class Denoiser:
    """Streaming denoiser; `value` refers to time `value_time` (= t - T)."""

    def __init__(self, span: float, period: float):
        self.window = SlidingWindow(span, period)
        self.value: float | None = None
        self.value_time: float | None = None

    def push(self, y: float, t: float) -> float | None:
        self.window.push(y, t)
        if self.window.is_warm:
            self.value = denoise(self.window)
            self.value_time = denoise_time(self.window)
        return self.value


class FEstimator:
    """Streaming F estimator for the ultra-local model of order config.nu."""

    def __init__(self, config: EstimatorConfig, period: float):
        config.check_period(period)
        self.config = config
        self.y_window = SlidingWindow(config.span, period)
        self.u_window = SlidingWindow(config.span, period)
        self.value: float | None = None

    @property
    def is_warm(self) -> bool:
        return self.y_window.is_warm

    def push(self, y: float, u: float, t: float) -> float | None:
        """Add output y(t) and the input held over the interval ending at t."""
        self.y_window.push(y, t)
        self.u_window.push(u, t)
        if self.y_window.is_warm:
            if self.config.nu == 1:
                self.value = estimate_F_order1(
                    self.y_window, self.u_window, self.config.alpha
                )
            else:
                self.value = estimate_F_order2(
                    self.y_window, self.u_window, self.config.alpha
                )
        return self.value


# =============================================================================
# Offline Validation
# =============================================================================

def estimate_frame(frame: pd.DataFrame, config: EstimatorConfig) -> pd.DataFrame:
    """Run the streaming estimators over a recorded (t, y[, u]) table.

    Adds denoised, denoised_time and derivative columns, plus F_est when the
    table has an input column `u`. Rows before the window fills stay NaN.

    Raises:
        SchemaError: if `t` or `y` is missing
        SamplingError: if t is not uniformly sampled
    """
    for column in ("t", "y"):
        if column not in frame.columns:
            raise SchemaError(column)
    t = frame["t"].to_numpy(dtype=float)
    y = frame["y"].to_numpy(dtype=float)
    if len(t) < 2:
        raise InsufficientDataError("need at least two samples to infer the period")
    period = float(t[1] - t[0])
    has_input = "u" in frame.columns

    denoiser = Denoiser(config.span, period)
    differentiator = Differentiator(config.span, period)
    f_estimator = FEstimator(config, period) if has_input else None
    u = frame["u"].to_numpy(dtype=float) if has_input else None

    n = len(t)
    denoised = np.full(n, np.nan)
    denoised_time = np.full(n, np.nan)
    derivative = np.full(n, np.nan)
    f_est = np.full(n, np.nan)
    for k in range(n):
        if denoiser.push(y[k], t[k]) is not None:
            denoised[k] = denoiser.value
            denoised_time[k] = denoiser.value_time
        if differentiator.push(y[k], t[k]) is not None:
            derivative[k] = differentiator.value
        if f_estimator is not None and f_estimator.push(y[k], u[k], t[k]) is not None:
            f_est[k] = f_estimator.value

    result = frame.copy()
    result["denoised"] = denoised
    result["denoised_time"] = denoised_time
    result["derivative"] = derivative
    if has_input:
        result["F_est"] = f_est
    return result
