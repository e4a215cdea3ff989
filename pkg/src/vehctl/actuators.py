"""Actuator saturation and integral clamping shared by all controllers."""

import math
from dataclasses import dataclass

from vehctl.errors import ParameterError
from vehctl.plant import ControlInput

DEFAULT_TORQUE_MAX = 1500.0                 # [N m]
DEFAULT_STEER_MAX = math.radians(30.0)      # [rad]


@dataclass(frozen=True)
class ActuatorLimits:
    """Symmetric limits |T_w| <= torque_max, |delta| <= steer_max."""
    torque_max: float = DEFAULT_TORQUE_MAX
    steer_max: float = DEFAULT_STEER_MAX

    def __post_init__(self):
        if not (self.torque_max > 0 and self.steer_max > 0):
            raise ParameterError("actuator limits must be > 0")

    def apply(self, control: ControlInput) -> tuple[ControlInput, bool, bool]:
        """Clamp a command; returns (clamped, torque_saturated, steer_saturated)."""
        torque = min(max(control.T_w, -self.torque_max), self.torque_max)
        steer = min(max(control.delta, -self.steer_max), self.steer_max)
        return (
            ControlInput(T_w=torque, delta=steer),
            torque != control.T_w,
            steer != control.delta,
        )


class ClampedIntegrator:
    """Running integral of an error that stops accumulating while saturated.

    Conditional integration: the controller computes its command with
    `candidate(...)`, saturates it, then calls `commit(...)`; a step that grows
    the integral's magnitude while the driven actuator is saturated is dropped.
    """

    def __init__(self):
        self.value = 0.0

    def candidate(self, error: float, dt: float) -> float:
        """Integral after this step, before the saturation check."""
        return self.value + error * dt

    def commit(self, candidate: float, saturated: bool) -> None:
        if saturated and abs(candidate) > abs(self.value):
            return
        self.value = candidate
