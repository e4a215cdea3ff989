"""Exception hierarchy shared by the plant, controllers, estimators and harness."""


class VehctlError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(VehctlError):
    """Invalid configuration file or value."""

    def __init__(self, message: str, path: str | None = None, line: int | None = None):
        self.message = message
        self.path = path
        self.line = line
        super().__init__(str(self))

    def __str__(self) -> str:
        if self.path is not None and self.line is not None:
            return f"{self.path}:{self.line}: {self.message}"
        if self.path is not None:
            return f"{self.path}: {self.message}"
        return self.message


class ParameterError(VehctlError, ValueError):
    """A physical parameter, gain or estimator setting violates its invariant."""


class SingularSpeedError(VehctlError):
    """Longitudinal speed fell below the guard used by the 1/Vx terms."""

    def __init__(self, vx: float, vx_min: float):
        self.vx = vx
        self.vx_min = vx_min
        super().__init__(f"Vx={vx:.6g} m/s is below Vx_min={vx_min:.6g} m/s")


class DivergenceError(VehctlError):
    """Integration produced a non-finite value."""

    def __init__(self, field: str, value: float):
        self.field = field
        self.value = value
        super().__init__(f"integration diverged: {field}={value}")


class DegenerateParameterError(VehctlError):
    """The inverse state map denominator vanished."""


class NearSingularDeltaError(VehctlError):
    """The decoupling matrix is too close to singular to invert."""

    WHEEL_ACCELERATION = "wheel-acceleration"
    LATERAL_INERTIA = "lateral-inertia"

    def __init__(self, condition: str, det: float):
        self.condition = condition
        self.det = det
        if condition == self.WHEEL_ACCELERATION:
            detail = "I_w * omega_f_dot - Cf * R vanishes (wheel acceleration condition)"
        else:
            detail = (
                "Cr*(Lf+Lr)*(Iz - Lr*Lf*m) + (Lf*m*y1)^2 vanishes "
                "(yaw inertia condition)"
            )
        super().__init__(f"det(Delta)={det:.3e}: {detail}")


class InsufficientDataError(VehctlError):
    """A sliding window has not filled yet."""


class SamplingError(VehctlError):
    """A sample broke the uniform sampling of a sliding window."""


class WindowAlignmentError(VehctlError):
    """Two windows fed to one estimator do not cover the same interval."""


class TrackConstructionError(VehctlError):
    """Track segments cannot be joined with continuous curvature."""

    def __init__(self, message: str, joint: int | None = None):
        self.joint = joint
        super().__init__(message)


class ReferenceConsistencyError(VehctlError):
    """A reference derivative disagrees with the sampled reference."""

    def __init__(self, message: str, channel: str | None = None):
        self.channel = channel
        super().__init__(message)


class OffTrackError(VehctlError):
    """Vehicle left the corridor around the reference path."""

    def __init__(self, deviation: float, corridor: float):
        self.deviation = deviation
        self.corridor = corridor
        super().__init__(
            f"lateral deviation {deviation:.3f} m exceeds corridor {corridor:.1f} m"
        )


class SchemaError(VehctlError):
    """Telemetry is missing a required column."""

    def __init__(self, column: str):
        self.column = column
        super().__init__(f"telemetry has no column '{column}'")
