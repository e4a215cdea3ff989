"""
3DoF nonlinear two-wheel vehicle model.

The dynamic substate x = [Vx, Vy, psi_dot] follows the control-affine form

    x_dot = f(x) + g(x) u,    u = [T_w, delta]

with a linear tire law (small slip angles). The pose (psi, X, Y) is carried
along by planar kinematics, and the wheel speeds follow one of the policies
in `WheelMode`. Integration is classical fixed-step RK4.

Usage:
    params = VehicleParams()
    state = VehicleState.rolling(20.0, params)
    state = step(state, ControlInput(T_w=100.0, delta=0.01), params, dt=0.001)
"""

import math
from dataclasses import dataclass, fields, replace
from enum import Enum

from vehctl.errors import DivergenceError, ParameterError, SingularSpeedError

# =============================================================================
# Constants
# =============================================================================

# Lower speed guard: f(x) divides by Vx
VX_MIN = 0.5

DEFAULT_DT = 0.001

# Longitudinal slip stiffness per axle for the dynamic wheel policy [N / unit slip]
DEFAULT_SLIP_STIFFNESS = 5.0e4


class WheelMode(Enum):
    """How wheel speeds and accelerations are produced."""
    QUASI_STATIC = "quasi-static"  # omega = Vx/R, omega_dot from previous step
    DYNAMIC = "dynamic"            # I_r omega_dot = T_w/2 - R F_x per axle
    FROZEN = "frozen"              # omega_dot supplied (encoder), held constant


# =============================================================================
# Data Classes
# =============================================================================

@dataclass(frozen=True)
class VehicleParams:
    """Physical constants of the two-wheel model (SI units)."""
    m: float = 1500.0      # mass [kg]
    Iz: float = 2500.0     # yaw inertia [kg m^2]
    Ir: float = 1.0        # wheel spin inertia [kg m^2]
    Lf: float = 1.1        # CoG to front axle [m]
    Lr: float = 1.5        # CoG to rear axle [m]
    Cf: float = 60000.0    # front cornering stiffness [N/rad]
    Cr: float = 57000.0    # rear cornering stiffness [N/rad]
    R: float = 0.3         # tire radius [m]
    g: float = 9.81        # gravity [m/s^2]

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if not math.isfinite(value) or value <= 0:
                raise ParameterError(f"{f.name} must be finite and > 0, got {value}")
        if self.Iz <= self.Lf * self.m:
            raise ParameterError(
                f"Iz={self.Iz} must exceed Lf*m={self.Lf * self.m} "
                "for the decoupling matrix to stay invertible"
            )

    @property
    def wheelbase(self) -> float:
        return self.Lf + self.Lr


@dataclass(frozen=True, slots=True)
class VehicleState:
    """Dynamic and pose state propagated by the plant."""
    Vx: float
    Vy: float = 0.0
    psi_dot: float = 0.0
    psi: float = 0.0
    X: float = 0.0
    Y: float = 0.0
    omega_f: float = 0.0
    omega_r: float = 0.0
    omega_f_dot: float = 0.0
    omega_r_dot: float = 0.0

    @classmethod
    def rolling(cls, Vx: float, params: VehicleParams, **kwargs) -> "VehicleState":
        """State with both wheels rolling without slip at speed Vx."""
        omega = Vx / params.R
        return cls(Vx=Vx, omega_f=omega, omega_r=omega, **kwargs)

    @property
    def wheel_accels(self) -> tuple[float, float]:
        return self.omega_f_dot, self.omega_r_dot


@dataclass(frozen=True, slots=True)
class ControlInput:
    """Wheel torque [N m] and steer angle [rad]."""
    T_w: float = 0.0
    delta: float = 0.0


@dataclass(frozen=True)
class ForceSet:
    """Tire forces, yaw moment, slip and sideslip angles at one instant."""
    Fx_f: float
    Fx_r: float
    Fy_f: float
    Fy_r: float
    Mz: float
    alpha_f: float
    alpha_r: float
    beta: float


# =============================================================================
# Model Equations
# =============================================================================

def _check_speed(vx: float, vx_min: float) -> None:
    if not vx >= vx_min:
        raise SingularSpeedError(vx, vx_min)


def _affine_rhs(
    vx: float,
    vy: float,
    r: float,
    torque: float,
    delta: float,
    wf_dot: float,
    wr_dot: float,
    p: VehicleParams,
) -> tuple[float, float, float]:
    """f(x) + g(x) u with the entries as printed for the affine model."""
    slip_f = (vy + p.Lf * r) / vx
    slip_r = (vy - p.Lr * r) / vx
    mR = p.m * p.R

    f1 = r * vy - p.Ir / mR * (wr_dot + wf_dot)
    f2 = -r * vx + (-p.Cf * slip_f - p.Cr * slip_r) / p.m
    f3 = (-p.Lf * p.Cf * slip_f + p.Lr * p.Cr * slip_r) / p.Iz

    steer_gain = p.Cf * p.R - p.Ir * wf_dot
    g11 = 1.0 / mR
    g12 = p.Cf / p.m * slip_f
    g22 = steer_gain / mR
    g32 = p.Lf * steer_gain / (p.Iz * p.R)

    return (
        f1 + g11 * torque + g12 * delta,
        f2 + g22 * delta,
        f3 + g32 * delta,
    )


def dynamics_rhs(
    state: VehicleState,
    control: ControlInput,
    params: VehicleParams,
    wheel_accels: tuple[float, float] | None = None,
    vx_min: float = VX_MIN,
) -> tuple[float, float, float]:
    """Time derivative of (Vx, Vy, psi_dot).

    Args:
        state: Current vehicle state
        control: Wheel torque and steer angle
        params: Vehicle parameters
        wheel_accels: (omega_f_dot, omega_r_dot); defaults to the state's values
        vx_min: Speed guard

    Returns:
        (Vx_dot, Vy_dot, psi_ddot)

    Raises:
        SingularSpeedError: if state.Vx < vx_min
    """
    _check_speed(state.Vx, vx_min)
    wf_dot, wr_dot = wheel_accels if wheel_accels is not None else state.wheel_accels
    return _affine_rhs(
        state.Vx, state.Vy, state.psi_dot,
        control.T_w, control.delta,
        wf_dot, wr_dot, params,
    )


def pose_rhs(state: VehicleState) -> tuple[float, float, float]:
    """Time derivative of (psi, X, Y) in the global frame."""
    c = math.cos(state.psi)
    s = math.sin(state.psi)
    return (
        state.psi_dot,
        state.Vx * c - state.Vy * s,
        state.Vx * s + state.Vy * c,
    )


def tire_forces(
    state: VehicleState, control: ControlInput, params: VehicleParams
) -> ForceSet:
    """Linear tire forces for the current state (small slip angles)."""
    _check_speed(state.Vx, VX_MIN)
    p = params
    alpha_f = (state.Vy + p.Lf * state.psi_dot) / state.Vx - control.delta
    alpha_r = (state.Vy - p.Lr * state.psi_dot) / state.Vx
    fy_f = -p.Cf * alpha_f
    fy_r = -p.Cr * alpha_r
    fx_f = (control.T_w / 2.0 - p.Ir * state.omega_f_dot) / p.R
    fx_r = (control.T_w / 2.0 - p.Ir * state.omega_r_dot) / p.R
    return ForceSet(
        Fx_f=fx_f,
        Fx_r=fx_r,
        Fy_f=fy_f,
        Fy_r=fy_r,
        Mz=p.Lf * fy_f - p.Lr * fy_r,
        alpha_f=alpha_f,
        alpha_r=alpha_r,
        beta=math.atan2(state.Vy, state.Vx),
    )


# =============================================================================
# Integrator
# =============================================================================

def _wheel_dynamics(
    vx: float, wf: float, wr: float, torque: float, p: VehicleParams, slip_stiffness: float
) -> tuple[float, float]:
    """Wheel accelerations from I_r omega_dot = T_w/2 - R F_x, linear slip force."""
    fx_f = slip_stiffness * (p.R * wf - vx) / vx
    fx_r = slip_stiffness * (p.R * wr - vx) / vx
    half = 0.5 * torque
    return (half - p.R * fx_f) / p.Ir, (half - p.R * fx_r) / p.Ir


def _derivatives(
    y: tuple[float, ...],
    torque: float,
    delta: float,
    held_accels: tuple[float, float],
    p: VehicleParams,
    mode: WheelMode,
    slip_stiffness: float,
    vx_min: float,
) -> tuple[float, ...]:
    vx, vy, r, psi, _, _, wf, wr = y
    _check_speed(vx, vx_min)
    if mode is WheelMode.DYNAMIC:
        wf_dot, wr_dot = _wheel_dynamics(vx, wf, wr, torque, p, slip_stiffness)
    else:
        wf_dot, wr_dot = held_accels
    dvx, dvy, dr = _affine_rhs(vx, vy, r, torque, delta, wf_dot, wr_dot, p)
    c = math.cos(psi)
    s = math.sin(psi)
    return (dvx, dvy, dr, r, vx * c - vy * s, vx * s + vy * c, wf_dot, wr_dot)


_STATE_FIELDS = ("Vx", "Vy", "psi_dot", "psi", "X", "Y", "omega_f", "omega_r")


def step(
    state: VehicleState,
    control: ControlInput,
    params: VehicleParams,
    dt: float = DEFAULT_DT,
    wheel_mode: WheelMode = WheelMode.QUASI_STATIC,
    slip_stiffness: float = DEFAULT_SLIP_STIFFNESS,
    vx_min: float = VX_MIN,
) -> VehicleState:
    """Advance the plant by one RK4 step of length dt.

    The quasi-static wheel policy holds omega_dot at the value derived from
    the previous step's longitudinal acceleration (one-step lag), then resets
    omega = Vx/R and omega_dot = Vx_dot/R from this step's speed change.

    Raises:
        ParameterError: if dt <= 0
        SingularSpeedError: if Vx drops below vx_min at any stage
        DivergenceError: if the result is not finite
    """
    if not dt > 0:
        raise ParameterError(f"dt must be > 0, got {dt}")

    y0 = (
        state.Vx, state.Vy, state.psi_dot, state.psi,
        state.X, state.Y, state.omega_f, state.omega_r,
    )
    held = state.wheel_accels
    torque = control.T_w
    delta = control.delta

    def rhs(y):
        return _derivatives(
            y, torque, delta, held, params, wheel_mode, slip_stiffness, vx_min
        )

    half = 0.5 * dt
    k1 = rhs(y0)
    k2 = rhs(tuple(a + half * b for a, b in zip(y0, k1)))
    k3 = rhs(tuple(a + half * b for a, b in zip(y0, k2)))
    k4 = rhs(tuple(a + dt * b for a, b in zip(y0, k3)))
    sixth = dt / 6.0
    y1 = tuple(
        a + sixth * (b1 + 2.0 * b2 + 2.0 * b3 + b4)
        for a, b1, b2, b3, b4 in zip(y0, k1, k2, k3, k4)
    )

    for name, value in zip(_STATE_FIELDS, y1):
        if not math.isfinite(value):
            raise DivergenceError(name, value)

    vx1, vy1, r1, psi1, x1, yy1, wf1, wr1 = y1
    if wheel_mode is WheelMode.QUASI_STATIC:
        wheel_accel = (vx1 - state.Vx) / (dt * params.R)
        wf1 = wr1 = vx1 / params.R
        wf_dot = wr_dot = wheel_accel
    elif wheel_mode is WheelMode.DYNAMIC:
        wf_dot, wr_dot = _wheel_dynamics(vx1, wf1, wr1, torque, params, slip_stiffness)
    else:
        wf_dot, wr_dot = held

    return VehicleState(
        Vx=vx1, Vy=vy1, psi_dot=r1, psi=psi1, X=x1, Y=yy1,
        omega_f=wf1, omega_r=wr1, omega_f_dot=wf_dot, omega_r_dot=wr_dot,
    )


def perturb_params(
    params: VehicleParams, cf_scale: float, cr_scale: float
) -> VehicleParams:
    """Copy of params with scaled cornering stiffnesses (invariants rechecked)."""
    for name, scale in (("cf_scale", cf_scale), ("cr_scale", cr_scale)):
        if not math.isfinite(scale) or scale <= 0:
            raise ParameterError(f"{name} must be > 0, got {scale}")
    return replace(params, Cf=params.Cf * cf_scale, Cr=params.Cr * cr_scale)
