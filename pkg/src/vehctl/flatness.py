"""
Flat outputs of the two-wheel model and the flatness-based tracking controller.

The outputs

    y1 = Vx
    y2 = Lf m Vy - Iz psi_dot

are flat: (Vx, Vy, psi_dot) = A(y1, y2, y2_dot) and the inputs follow from

    [y1_dot; y2_ddot] = Delta(y1, y2, y2_dot) u + Phi(y1, y2, y2_dot)

y2_dot does not depend on u, so y2 has relative degree two. Delta and Phi are
obtained by differentiating y2_dot = h(x) along f and g; the derivation is
written out in docs/flatness_derivation.md.
"""

from dataclasses import dataclass

import numpy as np

from vehctl.actuators import ActuatorLimits, ClampedIntegrator
from vehctl.errors import (
    DegenerateParameterError,
    NearSingularDeltaError,
    ParameterError,
)
from vehctl.estimation import DEFAULT_SPAN, Differentiator
from vehctl.plant import VX_MIN, ControlInput, VehicleParams, VehicleState
from vehctl.signals import Measurement, ReferenceSample
from vehctl.track import PathGuidance

# Relative size below which a factor of det(Delta) counts as vanished
DEFAULT_SINGULAR_TOLERANCE = 1e-6


def is_hurwitz(coefficients: list[float]) -> bool:
    """True if the polynomial (highest power first) has all roots in Re < 0."""
    coeffs = np.asarray(coefficients, dtype=float)
    if coeffs[0] == 0 or not np.all(np.isfinite(coeffs)):
        return False
    if len(coeffs) == 1:
        return True
    return bool(np.all(np.roots(coeffs).real < 0))


# =============================================================================
# Data Classes
# =============================================================================

@dataclass(frozen=True, slots=True)
class FlatOutputs:
    y1: float
    y2: float
    y2_dot: float | None = None


@dataclass(frozen=True)
class FlatOutputModel:
    """The three parameters needed to form y2 from measurements."""
    m: float
    Iz: float
    Lf: float

    @classmethod
    def from_params(cls, params: VehicleParams) -> "FlatOutputModel":
        return cls(m=params.m, Iz=params.Iz, Lf=params.Lf)

    def y2(self, vy: float, yaw_rate: float) -> float:
        return self.Lf * self.m * vy - self.Iz * yaw_rate


@dataclass(frozen=True)
class FlatnessGains:
    """PI gains on e_y1 and PID-with-integral gains on e_y2."""
    K1_1: float = 4.0
    K1_2: float = 4.0
    K2_1: float = 9.0
    K2_2: float = 27.0
    K2_3: float = 27.0

    def __post_init__(self):
        if not is_hurwitz([1.0, self.K1_1, self.K1_2]):
            raise ParameterError(
                f"s^2 + {self.K1_1} s + {self.K1_2} is not Hurwitz"
            )
        if not is_hurwitz([1.0, self.K2_1, self.K2_2, self.K2_3]):
            raise ParameterError(
                f"s^3 + {self.K2_1} s^2 + {self.K2_2} s + {self.K2_3} is not Hurwitz"
            )


@dataclass(frozen=True)
class FlatnessConfig:
    """Settings of the flatness controller ([flatness] config section)."""
    k1_1: float = 4.0
    k1_2: float = 4.0
    k2_1: float = 9.0
    k2_2: float = 27.0
    k2_3: float = 27.0
    diff_span: float = DEFAULT_SPAN
    singular_tolerance: float = DEFAULT_SINGULAR_TOLERANCE
    initial_torque: float = 0.0
    initial_steer: float = 0.0

    def __post_init__(self):
        self.gains  # raises unless Hurwitz
        if not self.diff_span > 0:
            raise ParameterError(f"diff_span must be > 0, got {self.diff_span}")
        if not 0 < self.singular_tolerance < 1:
            raise ParameterError("singular_tolerance must lie in (0, 1)")

    @property
    def gains(self) -> FlatnessGains:
        return FlatnessGains(self.k1_1, self.k1_2, self.k2_1, self.k2_2, self.k2_3)


@dataclass(frozen=True, slots=True)
class FlatReference:
    """Desired flat outputs and the derivatives the control law needs."""
    y1: float
    y1_dot: float
    y2: float
    y2_dot: float
    y2_ddot: float


@dataclass(frozen=True)
class DecouplingMatrix:
    matrix: np.ndarray
    det: float              # from the entries
    det_closed_form: float  # printed factorized form


# =============================================================================
# Flat Outputs and Inverse Map
# =============================================================================

def flat_outputs(state: VehicleState, params: VehicleParams) -> FlatOutputs:
    return FlatOutputs(
        y1=state.Vx,
        y2=params.Lf * params.m * state.Vy - params.Iz * state.psi_dot,
    )


def flat_output_rate(state: VehicleState, params: VehicleParams) -> float:
    """Exact y2_dot = -Lf m Vx psi_dot - Cr (Lf + Lr) (Vy - Lr psi_dot) / Vx."""
    p = params
    return (
        -p.Lf * p.m * state.Vx * state.psi_dot
        - p.Cr * p.wheelbase * (state.Vy - p.Lr * state.psi_dot) / state.Vx
    )


def _lateral_inertia_factor(y1: float, p: VehicleParams) -> float:
    return p.Cr * p.wheelbase * (p.Iz - p.Lr * p.Lf * p.m) + (p.Lf * p.m * y1) ** 2


def state_from_flat(
    y1: float, y2: float, y2_dot: float, params: VehicleParams
) -> tuple[float, float, float]:
    """(Vx, Vy, psi_dot) from the flat outputs and y2_dot.

    Raises:
        DegenerateParameterError: if Cr L (Iz - Lr Lf m) + (Lf m y1)^2 == 0
    """
    p = params
    denominator = _lateral_inertia_factor(y1, p)
    if denominator == 0:
        raise DegenerateParameterError(
            "Cr*(Lf+Lr)*(Iz - Lr*Lf*m) + (Lf*m*y1)^2 is zero"
        )
    lfm = p.Lf * p.m
    numerator = lfm * y1 * y2_dot + p.Cr * p.wheelbase * y2
    yaw_rate = -numerator / denominator
    vy = (y2 + p.Iz * yaw_rate) / lfm
    return y1, vy, yaw_rate


def _output_gradient(
    vx: float, vy: float, r: float, p: VehicleParams
) -> tuple[float, float, float]:
    """Partial derivatives of y2_dot = h(Vx, Vy, psi_dot)."""
    cl = p.Cr * p.wheelbase
    return (
        -p.Lf * p.m * r + cl * (vy - p.Lr * r) / vx**2,
        -cl / vx,
        -p.Lf * p.m * vx + cl * p.Lr / vx,
    )


# =============================================================================
# Decoupling Matrix and Drift
# =============================================================================

def delta_closed_form(y1: float, params: VehicleParams, omega_f_dot: float) -> float:
    """det(Delta) as the printed product of the two nonsingularity factors."""
    p = params
    wheel = p.Ir * omega_f_dot - p.Cf * p.R
    inertia = (
        p.Lf**2 * p.m**2 * y1**2
        - p.Cr * p.wheelbase * p.Lr * p.Lf * p.m
        + p.Cr * p.Iz * p.wheelbase
    )
    return wheel * inertia / (p.Iz * p.R**2 * y1 * p.m**2)


def _check_nonsingular(
    y1: float, p: VehicleParams, omega_f_dot: float, tolerance: float, det: float
) -> None:
    wheel = p.Ir * omega_f_dot - p.Cf * p.R
    if abs(wheel) <= tolerance * p.Cf * p.R:
        raise NearSingularDeltaError(NearSingularDeltaError.WHEEL_ACCELERATION, det)
    inertia = _lateral_inertia_factor(y1, p)
    scale = p.Cr * p.wheelbase * p.Iz + (p.Lf * p.m * y1) ** 2
    if abs(inertia) <= tolerance * scale:
        raise NearSingularDeltaError(NearSingularDeltaError.LATERAL_INERTIA, det)


def delta_matrix(
    y1: float,
    y2: float,
    y2_dot: float,
    params: VehicleParams,
    omega_f_dot: float,
    tolerance: float = DEFAULT_SINGULAR_TOLERANCE,
) -> DecouplingMatrix:
    """Delta evaluated at the state reconstructed from (y1, y2, y2_dot).

    Raises:
        ParameterError: if y1 < VX_MIN
        NearSingularDeltaError: naming the factor of det(Delta) that vanished
    """
    if not y1 >= VX_MIN:
        raise ParameterError(f"y1={y1} is below Vx_min={VX_MIN}")
    p = params
    det_closed_form = delta_closed_form(y1, p, omega_f_dot)
    _check_nonsingular(y1, p, omega_f_dot, tolerance, det_closed_form)
    vx, vy, r = state_from_flat(y1, y2, y2_dot, p)
    h_vx, h_vy, h_r = _output_gradient(vx, vy, r, p)

    steer_gain = p.Cf * p.R - p.Ir * omega_f_dot
    g11 = 1.0 / (p.m * p.R)
    g12 = p.Cf / p.m * (vy + p.Lf * r) / vx
    g22 = steer_gain / (p.m * p.R)
    g32 = p.Lf * steer_gain / (p.Iz * p.R)

    matrix = np.array([
        [g11, g12],
        [h_vx * g11, h_vx * g12 + h_vy * g22 + h_r * g32],
    ])
    det = float(matrix[0, 0] * matrix[1, 1] - matrix[0, 1] * matrix[1, 0])
    return DecouplingMatrix(matrix=matrix, det=det, det_closed_form=det_closed_form)


def phi_term(
    y1: float,
    y2: float,
    y2_dot: float,
    params: VehicleParams,
    wheel_accels: tuple[float, float],
) -> np.ndarray:
    """[y1_dot; y2_ddot] at u = 0: the drift seen through the flat outputs."""
    if not y1 >= VX_MIN:
        raise ParameterError(f"y1={y1} is below Vx_min={VX_MIN}")
    p = params
    wf_dot, wr_dot = wheel_accels
    vx, vy, r = state_from_flat(y1, y2, y2_dot, p)
    slip_f = (vy + p.Lf * r) / vx
    slip_r = (vy - p.Lr * r) / vx
    f1 = r * vy - p.Ir / (p.m * p.R) * (wr_dot + wf_dot)
    f2 = -r * vx + (-p.Cf * slip_f - p.Cr * slip_r) / p.m
    f3 = (-p.Lf * p.Cf * slip_f + p.Lr * p.Cr * slip_r) / p.Iz
    h_vx, h_vy, h_r = _output_gradient(vx, vy, r, p)
    return np.array([f1, h_vx * f1 + h_vy * f2 + h_r * f3])


# =============================================================================
# Control Law
# =============================================================================

def flat_control(
    measured: FlatOutputs,
    refs: FlatReference,
    gains: FlatnessGains,
    integrals: tuple[float, float],
    params: VehicleParams,
    wheel_accels: tuple[float, float],
    tolerance: float = DEFAULT_SINGULAR_TOLERANCE,
) -> tuple[ControlInput, DecouplingMatrix]:
    """u = Delta^-1 (v - Phi) with the linear tracking virtual inputs v.

    Errors are e = ref - measured; `integrals` hold int e_y1 and int e_y2
    including the current step. measured.y2_dot must be set.
    """
    e1 = refs.y1 - measured.y1
    e2 = refs.y2 - measured.y2
    e2_dot = refs.y2_dot - measured.y2_dot
    int_e1, int_e2 = integrals
    v = np.array([
        refs.y1_dot + gains.K1_1 * e1 + gains.K1_2 * int_e1,
        refs.y2_ddot + gains.K2_1 * e2_dot + gains.K2_2 * e2 + gains.K2_3 * int_e2,
    ])
    decoupling = delta_matrix(
        measured.y1, measured.y2, measured.y2_dot, params, wheel_accels[0], tolerance
    )
    phi = phi_term(measured.y1, measured.y2, measured.y2_dot, params, wheel_accels)
    torque, steer = np.linalg.solve(decoupling.matrix, v - phi)
    return ControlInput(T_w=float(torque), delta=float(steer)), decoupling


class FlatnessController:
    """Flatness-based tracking controller built on the nominal model.

    y2_dot comes from the algebraic differentiator applied to measured y2;
    until its window fills the configured initial input is held.
    """

    name = "flatness"
    telemetry_columns = ("e_y1", "e_y2", "det_delta")

    def __init__(
        self,
        config: FlatnessConfig,
        params: VehicleParams,
        limits: ActuatorLimits,
        period: float,
        guidance: PathGuidance | None = None,
    ):
        self.config = config
        self.gains = config.gains
        self.params = params
        self.limits = limits
        self.period = period
        self.guidance = guidance
        self.model = FlatOutputModel.from_params(params)
        self._differentiator = Differentiator(config.diff_span, period)
        self._int_e1 = ClampedIntegrator()
        self._int_e2 = ClampedIntegrator()
        self.saturated = False
        self.telemetry: tuple[float, ...] = (np.nan,) * 3

    def update(self, meas: Measurement, ref: ReferenceSample) -> ControlInput:
        y2 = self.model.y2(meas.vy, meas.yaw_rate)
        y2_dot = self._differentiator.push(y2, meas.t)
        y2_ref = ref.y2
        if self.guidance is not None:
            y2_ref = self.guidance.y2_command(ref.y2, meas)
        e1 = ref.vx - meas.vx
        e2 = y2_ref - y2

        if y2_dot is None:
            initial = ControlInput(self.config.initial_torque, self.config.initial_steer)
            applied, torque_sat, steer_sat = self.limits.apply(initial)
            self.saturated = torque_sat or steer_sat
            self.telemetry = (e1, e2, np.nan)
            return applied

        candidates = (
            self._int_e1.candidate(e1, self.period),
            self._int_e2.candidate(e2, self.period),
        )
        command, decoupling = flat_control(
            FlatOutputs(meas.vx, y2, y2_dot),
            FlatReference(ref.vx, ref.vx_dot, y2_ref, ref.y2_dot, ref.y2_ddot),
            self.gains,
            candidates,
            self.params,
            (meas.omega_f_dot, meas.omega_r_dot),
            self.config.singular_tolerance,
        )
        applied, torque_sat, steer_sat = self.limits.apply(command)
        self._int_e1.commit(candidates[0], torque_sat)
        self._int_e2.commit(candidates[1], steer_sat)
        self.saturated = torque_sat or steer_sat
        self.telemetry = (e1, e2, decoupling.det)
        return applied
