"""Per-step signals exchanged between the harness and the controllers."""

import math
from dataclasses import dataclass


@dataclass(frozen=True, slots=True)
class Measurement:
    """Controller-visible measurements at one control step (possibly noisy)."""
    t: float
    vx: float
    vy: float
    yaw_rate: float
    heading: float
    lateral_deviation: float
    path_heading: float = 0.0
    omega_f_dot: float = 0.0
    omega_r_dot: float = 0.0

    @property
    def course_error(self) -> float:
        """Velocity direction minus path direction, wrapped to (-pi, pi]."""
        return wrap_angle(self.heading + math.atan2(self.vy, self.vx) - self.path_heading)


@dataclass(frozen=True, slots=True)
class TrackingReference:
    """Desired output of one channel with the derivatives its controller needs."""
    yd: float
    yd_dot: float = 0.0
    yd_ddot: float = 0.0


@dataclass(frozen=True, slots=True)
class ReferenceSample:
    """Reference trajectory values at one control step."""
    t: float
    vx: float
    vx_dot: float = 0.0
    y2: float = 0.0
    y2_dot: float = 0.0
    y2_ddot: float = 0.0
    x: float = 0.0
    y: float = 0.0
    psi: float = 0.0
    curvature: float = 0.0

    @property
    def speed(self) -> TrackingReference:
        return TrackingReference(self.vx, self.vx_dot)

    @property
    def flat_lateral(self) -> TrackingReference:
        return TrackingReference(self.y2, self.y2_dot, self.y2_ddot)


def wrap_angle(angle: float) -> float:
    """Wrap to (-pi, pi]."""
    wrapped = math.remainder(angle, 2.0 * math.pi)
    return math.pi if wrapped == -math.pi else wrapped
