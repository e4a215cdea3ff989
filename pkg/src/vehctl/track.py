"""
Synthetic tracks, reference trajectories and path-relative errors.

A track is a list of straights, circular arcs and clothoids joined with
continuous curvature. `generate_track` samples its geometry on a fine
arc-length grid, builds the speed profile, maps arc length to time and
resamples everything on the simulation grid. The flat-output references
(y2 and its derivatives) are derived from the path and the nominal model.

Usage:
    trajectory = generate_track(default_segments(), dt=0.001, params=VehicleParams())
    error = lateral_deviation(state.X, state.Y, state.psi, trajectory)
"""

import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy.integrate import cumulative_trapezoid
from scipy.interpolate import CubicSpline

from vehctl.errors import (
    OffTrackError,
    ParameterError,
    ReferenceConsistencyError,
    TrackConstructionError,
)
from vehctl.plant import VX_MIN, VehicleParams
from vehctl.signals import Measurement, ReferenceSample, wrap_angle

# =============================================================================
# Constants
# =============================================================================

SEGMENT_KINDS = ("straight", "arc", "clothoid")
DIRECTIONS = ("left", "right")
Y2_REFERENCE_MODES = ("model", "zero")

DEFAULT_DS = 0.05            # geometry sampling [m]
DEFAULT_SPEED_RAMP = 80.0    # length of a speed transition [m]
DEFAULT_CORRIDOR = 20.0      # off-track limit [m]

# Half-width of the local projection search [samples]
SEARCH_RADIUS = 400

# Curvature mismatch tolerated at a joint [1/m]
JOINT_TOLERANCE = 1e-9

# Derivative cross-check: share of the peak |yd_dot| a step may be off by,
# on top of the derivative's own change over that step
DERIVATIVE_RTOL = 0.01
DERIVATIVE_ATOL = 1e-6

KMH = 1.0 / 3.6


# =============================================================================
# Data Classes
# =============================================================================

@dataclass(frozen=True)
class SegmentSpec:
    """One track piece; angles in degrees, speeds in m/s.

    straight: length
    arc:      radius, angle, direction
    clothoid: length, curvature (magnitude at the end), direction
    `speed` is the cruise speed on the segment; None keeps the previous one.
    """
    kind: str
    length: float | None = None
    radius: float | None = None
    angle: float | None = None
    curvature: float | None = None
    direction: str = "left"
    speed: float | None = None

    def __post_init__(self):
        if self.kind not in SEGMENT_KINDS:
            raise ParameterError(f"unknown segment kind '{self.kind}'")
        if self.direction not in DIRECTIONS:
            raise ParameterError(f"direction must be left or right, got '{self.direction}'")
        if self.kind == "arc":
            if not (self.radius and self.radius > 0 and self.angle and self.angle > 0):
                raise ParameterError("arc needs radius > 0 and angle > 0")
        else:
            if not (self.length and self.length > 0):
                raise ParameterError(f"{self.kind} needs length > 0")
        if self.kind == "clothoid" and (self.curvature is None or self.curvature < 0):
            raise ParameterError("clothoid needs an end curvature >= 0")
        if self.speed is not None and not self.speed >= VX_MIN:
            raise ParameterError(f"segment speed {self.speed} is below {VX_MIN} m/s")

    @property
    def sign(self) -> float:
        return 1.0 if self.direction == "left" else -1.0

    @property
    def path_length(self) -> float:
        if self.kind == "arc":
            return self.radius * math.radians(self.angle)
        return self.length

    def curvatures(self, start: float) -> tuple[float, float]:
        """(start, end) signed curvature given the curvature entering the segment."""
        if self.kind == "straight":
            return 0.0, 0.0
        if self.kind == "arc":
            k = self.sign / self.radius
            return k, k
        return start, self.sign * self.curvature


@dataclass(frozen=True)
class TrackConfig:
    """Geometry and reference settings ([track] config section)."""
    ds: float = DEFAULT_DS
    speed_ramp: float = DEFAULT_SPEED_RAMP
    start_heading: float = 0.0
    y2_reference: str = "model"
    corridor: float = DEFAULT_CORRIDOR

    def __post_init__(self):
        if not self.ds > 0:
            raise ParameterError(f"ds must be > 0, got {self.ds}")
        if not self.speed_ramp >= 0:
            raise ParameterError(f"speed_ramp must be >= 0, got {self.speed_ramp}")
        if self.y2_reference not in Y2_REFERENCE_MODES:
            raise ParameterError(
                f"y2_reference must be one of {Y2_REFERENCE_MODES}, got '{self.y2_reference}'"
            )
        if not self.corridor > 0:
            raise ParameterError(f"corridor must be > 0, got {self.corridor}")


@dataclass(frozen=True)
class PathGeometry:
    """The path sampled on a uniform arc-length grid."""
    s: np.ndarray
    x: np.ndarray
    y: np.ndarray
    psi: np.ndarray
    curvature: np.ndarray
    speed: np.ndarray
    speed_slope: np.ndarray  # dv/ds

    @property
    def length(self) -> float:
        return float(self.s[-1])


@dataclass(frozen=True)
class ReferenceTrajectory:
    """Time-indexed references on the simulation grid."""
    dt: float
    t: np.ndarray
    s: np.ndarray
    vx: np.ndarray
    vx_dot: np.ndarray
    x: np.ndarray
    y: np.ndarray
    psi: np.ndarray
    curvature: np.ndarray
    y2: np.ndarray
    y2_dot: np.ndarray
    y2_ddot: np.ndarray
    path: PathGeometry = field(repr=False)

    def __len__(self) -> int:
        return len(self.t)

    @property
    def duration(self) -> float:
        return float(self.t[-1])

    def sample(self, k: int) -> ReferenceSample:
        return ReferenceSample(
            t=float(self.t[k]),
            vx=float(self.vx[k]),
            vx_dot=float(self.vx_dot[k]),
            y2=float(self.y2[k]),
            y2_dot=float(self.y2_dot[k]),
            y2_ddot=float(self.y2_ddot[k]),
            x=float(self.x[k]),
            y=float(self.y[k]),
            psi=float(self.psi[k]),
            curvature=float(self.curvature[k]),
        )

    def distance_mismatch(self) -> float:
        """Relative gap between path length covered and the integral of Vx_ref."""
        travelled = float(cumulative_trapezoid(self.vx, self.t)[-1]) if len(self) > 1 else 0.0
        covered = float(self.s[-1] - self.s[0])
        if covered == 0:
            return 0.0
        return abs(travelled - covered) / covered

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "t": self.t,
            "s": self.s,
            "Vx_ref": self.vx,
            "Vx_dot_ref": self.vx_dot,
            "X_ref": self.x,
            "Y_ref": self.y,
            "psi_ref": self.psi,
            "curvature": self.curvature,
            "y2_ref": self.y2,
            "y2_dot_ref": self.y2_dot,
            "y2_ddot_ref": self.y2_ddot,
        })


@dataclass(frozen=True, slots=True)
class LateralError:
    deviation: float      # positive left of the path [m]
    heading_error: float  # psi - psi_path, wrapped [rad]
    path_heading: float
    index: int            # closest path sample, reusable as the next search hint


# =============================================================================
# Default Track
# =============================================================================

def default_segments() -> list[SegmentSpec]:
    """Lap of about 2 km: four left corners (two R=120 m, two R=50 m)."""
    fast = round(70 * KMH, 2)
    medium = round(50 * KMH, 2)
    slow = round(30 * KMH, 2)
    straight = round(60 * KMH, 2)

    def corner(radius: float, entry: float, angle: float, speed: float) -> list[SegmentSpec]:
        return [
            SegmentSpec("clothoid", length=entry, curvature=1.0 / radius, speed=speed),
            SegmentSpec("arc", radius=radius, angle=angle, speed=speed),
            SegmentSpec("clothoid", length=entry, curvature=0.0, speed=speed),
        ]

    return [
        SegmentSpec("straight", length=300.0, speed=fast),
        *corner(120.0, 50.0, 66.0, medium),
        SegmentSpec("straight", length=250.0, speed=fast),
        *corner(50.0, 40.0, 44.0, slow),
        SegmentSpec("straight", length=300.0, speed=straight),
        *corner(120.0, 50.0, 66.0, medium),
        SegmentSpec("straight", length=200.0, speed=fast),
        *corner(50.0, 40.0, 44.0, slow),
        SegmentSpec("straight", length=236.0, speed=fast),
    ]


# =============================================================================
# Track Generation
# =============================================================================

def _curvature_knots(segments: list[SegmentSpec]) -> tuple[np.ndarray, np.ndarray]:
    """Arc-length knots (= segment boundaries) and the curvature at them."""
    if not segments:
        raise TrackConstructionError("track has no segments")
    first = segments[0]
    k_in = first.curvatures(0.0)[0]
    knots_s = [0.0]
    knots_k = [k_in]
    s = 0.0
    for joint, seg in enumerate(segments):
        k_start, k_end = seg.curvatures(k_in)
        if joint > 0 and abs(k_start - k_in) > JOINT_TOLERANCE:
            prev = segments[joint - 1]
            raise TrackConstructionError(
                f"curvature jumps from {k_in:.6g} to {k_start:.6g} 1/m at joint "
                f"{joint} ({prev.kind} -> {seg.kind})",
                joint=joint,
            )
        s += seg.path_length
        knots_s.append(s)
        knots_k.append(k_end)
        k_in = k_end
    return np.array(knots_s), np.array(knots_k)


def _segment_speeds(segments: list[SegmentSpec]) -> list[float]:
    speeds = []
    current = None
    for i, seg in enumerate(segments):
        if seg.speed is not None:
            current = seg.speed
        if current is None:
            raise TrackConstructionError(f"segment {i} ({seg.kind}) has no speed", joint=i)
        speeds.append(current)
    return speeds


def speed_profile(
    s: np.ndarray, boundaries: np.ndarray, speeds: list[float], ramp: float
) -> tuple[np.ndarray, np.ndarray]:
    """Cruise speeds with cosine transitions laid on the faster side of each joint.

    Returns (v(s), dv/ds).
    """
    index = np.clip(np.searchsorted(boundaries, s, side="right") - 1, 0, len(speeds) - 1)
    v = np.asarray(speeds)[index].astype(float)
    slope = np.zeros_like(v)
    if ramp == 0:
        return v, slope
    for joint in range(1, len(speeds)):
        before, after = speeds[joint - 1], speeds[joint]
        if before == after:
            continue
        s_joint = boundaries[joint]
        start = s_joint - ramp if before > after else s_joint
        mask = (s >= start) & (s <= start + ramp)
        x = (s[mask] - start) / ramp
        v[mask] = after + (before - after) * 0.5 * (1.0 + np.cos(np.pi * x))
        slope[mask] = -(before - after) * 0.5 * np.pi / ramp * np.sin(np.pi * x)
    return v, slope


def build_geometry(segments: list[SegmentSpec], config: TrackConfig) -> PathGeometry:
    knots_s, knots_k = _curvature_knots(segments)
    length = float(knots_s[-1])
    n = int(math.ceil(length / config.ds)) + 1
    s = np.linspace(0.0, length, n)
    curvature = np.interp(s, knots_s, knots_k)
    psi = config.start_heading + cumulative_trapezoid(curvature, s, initial=0.0)
    x = cumulative_trapezoid(np.cos(psi), s, initial=0.0)
    y = cumulative_trapezoid(np.sin(psi), s, initial=0.0)
    speed, slope = speed_profile(s, knots_s, _segment_speeds(segments), config.speed_ramp)
    return PathGeometry(s=s, x=x, y=y, psi=psi, curvature=curvature,
                        speed=speed, speed_slope=slope)


def y2_reference(
    t: np.ndarray,
    vx: np.ndarray,
    yaw_rate: np.ndarray,
    params: VehicleParams,
    mode: str = "model",
) -> np.ndarray:
    """y2 along the reference for a yaw-rate profile psi_dot_ref.

    "zero" takes Vy_ref = 0, so y2 = -Iz psi_dot_ref. "model" integrates the
    nominal lateral dynamics, which gives the sideslip the vehicle actually
    needs in a corner:

        y2_dot = -(Cr L y2 + D psi_dot_ref) / (Lf m Vx)
        D = Cr L (Iz - Lr Lf m) + (Lf m Vx)^2

    with the trapezoidal rule (implicit, so stiff at low speed is fine).
    """
    p = params
    if mode == "zero":
        return -p.Iz * yaw_rate
    if mode != "model":
        raise ParameterError(f"unknown y2 reference mode '{mode}'")
    cl = p.Cr * p.wheelbase
    lfm = p.Lf * p.m
    denominator = cl * (p.Iz - p.Lr * lfm) + (lfm * vx) ** 2
    a = -cl / (lfm * vx)
    b = -denominator * yaw_rate / (lfm * vx)

    y2 = np.empty_like(vx)
    y2[0] = -denominator[0] * yaw_rate[0] / cl  # steady state
    h = np.diff(t)
    for k in range(len(t) - 1):
        half = 0.5 * h[k]
        y2[k + 1] = (
            y2[k] * (1.0 + half * a[k]) + half * (b[k] + b[k + 1])
        ) / (1.0 - half * a[k + 1])
    return y2


def generate_track(
    segments: list[SegmentSpec],
    dt: float,
    params: VehicleParams | None = None,
    config: TrackConfig | None = None,
    duration: float | None = None,
) -> ReferenceTrajectory:
    """Sample the segments into a reference trajectory on the grid k*dt.

    Raises:
        TrackConstructionError: curvature jump at a joint, missing speed or an
            inconsistent time mapping
        ReferenceConsistencyError: a reference derivative that does not match
            the sampled reference
    """
    params = params or VehicleParams()
    config = config or TrackConfig()
    if not dt > 0:
        raise ParameterError(f"dt must be > 0, got {dt}")

    path = build_geometry(segments, config)
    t_of_s = cumulative_trapezoid(1.0 / path.speed, path.s, initial=0.0)
    t_end = float(t_of_s[-1])
    if duration is not None and duration > 0:
        t_end = min(t_end, duration)
    steps = int(math.floor(t_end / dt + 1e-9))
    t = np.arange(steps + 1) * dt

    s = np.interp(t, t_of_s, path.s)
    vx = np.interp(s, path.s, path.speed)
    vx_dot = vx * np.interp(s, path.s, path.speed_slope)
    curvature = np.interp(s, path.s, path.curvature)
    yaw_rate = curvature * vx

    y2 = y2_reference(t, vx, yaw_rate, params, config.y2_reference)
    if len(t) >= 2:
        spline = CubicSpline(t, y2)
        y2_dot = spline(t, 1)
        y2_ddot = spline(t, 2)
    else:
        y2_dot = np.zeros_like(t)
        y2_ddot = np.zeros_like(t)

    trajectory = ReferenceTrajectory(
        dt=dt,
        t=t,
        s=s,
        vx=vx,
        vx_dot=vx_dot,
        x=np.interp(s, path.s, path.x),
        y=np.interp(s, path.s, path.y),
        psi=np.interp(s, path.s, path.psi),
        curvature=curvature,
        y2=y2,
        y2_dot=y2_dot,
        y2_ddot=y2_ddot,
        path=path,
    )
    mismatch = trajectory.distance_mismatch()
    if mismatch > 0.01:
        raise TrackConstructionError(
            f"speed profile covers the path with a {mismatch:.2%} length error"
        )
    check_reference_derivatives("Vx", t, vx, vx_dot)
    check_reference_derivatives("y2", t, y2, y2_dot)
    check_reference_derivatives("y2_dot", t, y2_dot, y2_ddot)
    return trajectory


def check_reference_derivatives(
    channel: str,
    t: np.ndarray,
    yd: np.ndarray,
    yd_dot: np.ndarray,
    rtol: float = DERIVATIVE_RTOL,
) -> float:
    """Cross-check yd_dot against the difference quotients of yd.

    Each step's quotient is compared with the mean of yd_dot at its two ends.
    Returns the largest gap.

    Raises:
        ReferenceConsistencyError: naming the channel and the first bad step
    """
    if len(t) < 2:
        return 0.0
    quotient = np.diff(yd) / np.diff(t)
    gap = np.abs(quotient - 0.5 * (yd_dot[1:] + yd_dot[:-1]))
    allowed = rtol * float(np.max(np.abs(yd_dot))) + DERIVATIVE_ATOL + np.abs(np.diff(yd_dot))
    bad = np.flatnonzero(gap > allowed)
    if bad.size:
        k = int(bad[0])
        raise ReferenceConsistencyError(
            f"{channel} derivative disagrees with its samples at t={t[k]:.3f} s "
            f"(gap {gap[k]:.3g})",
            channel=channel,
        )
    return float(np.max(gap))


# =============================================================================
# Path-Relative Errors
# =============================================================================

def _closest_index(path: PathGeometry, x: float, y: float, hint: int | None) -> int:
    if hint is None:
        lo, hi = 0, len(path.s)
    else:
        lo = max(hint - SEARCH_RADIUS, 0)
        hi = min(hint + SEARCH_RADIUS + 1, len(path.s))
    dx = path.x[lo:hi] - x
    dy = path.y[lo:hi] - y
    return lo + int(np.argmin(dx * dx + dy * dy))


def lateral_deviation(
    x: float,
    y: float,
    psi: float,
    trajectory: ReferenceTrajectory,
    hint: int | None = None,
    corridor: float = DEFAULT_CORRIDOR,
) -> LateralError:
    """Signed distance to the path (positive left) and heading error.

    The closest sample is searched around `hint` (whole path if None) and the
    position is then projected onto the neighbouring path chord.

    Raises:
        OffTrackError: if |deviation| exceeds the corridor
    """
    path = trajectory.path
    i = _closest_index(path, x, y, hint)
    last = len(path.s) - 1

    best = None
    for j in (i - 1, i):
        if j < 0 or j + 1 > last:
            continue
        ax, ay = path.x[j], path.y[j]
        cx, cy = path.x[j + 1] - ax, path.y[j + 1] - ay
        chord2 = cx * cx + cy * cy
        u = min(max(((x - ax) * cx + (y - ay) * cy) / chord2, 0.0), 1.0)
        fx, fy = ax + u * cx, ay + u * cy
        dist2 = (x - fx) ** 2 + (y - fy) ** 2
        if best is None or dist2 < best[0]:
            best = (dist2, j, u, fx, fy)

    _, j, u, fx, fy = best
    heading = path.psi[j] + u * (path.psi[j + 1] - path.psi[j])
    tx, ty = math.cos(heading), math.sin(heading)
    deviation = tx * (y - fy) - ty * (x - fx)
    if abs(deviation) > corridor:
        raise OffTrackError(deviation, corridor)
    return LateralError(
        deviation=float(deviation),
        heading_error=wrap_angle(psi - heading),
        path_heading=float(heading),
        index=i,
    )


# =============================================================================
# Path Guidance
# =============================================================================

@dataclass(frozen=True)
class GuidanceConfig:
    """Outer path loop for the flat-output controllers ([guidance] section)."""
    enabled: bool = True
    bandwidth: float = 1.0   # [rad/s]
    damping: float = 0.9

    def __post_init__(self):
        if not (self.bandwidth > 0 and self.damping > 0):
            raise ParameterError("guidance bandwidth and damping must be > 0")


class PathGuidance:
    """Turns lateral deviation and course error into a yaw-rate correction.

    y2 alone does not see the vehicle position, so the flat-output controllers
    track y2_cmd = y2_ref - Iz * dr with

        dr = -k_chi e_chi - k_d dev,  k_chi = 2 zeta w,  k_d = w^2 / Vx
    """

    def __init__(self, config: GuidanceConfig, Iz: float):
        self.config = config
        self.Iz = Iz
        self.k_course = 2.0 * config.damping * config.bandwidth

    def yaw_rate_correction(self, meas: Measurement) -> float:
        k_dev = self.config.bandwidth**2 / max(meas.vx, VX_MIN)
        return -self.k_course * meas.course_error - k_dev * meas.lateral_deviation

    def y2_command(self, y2_ref: float, meas: Measurement) -> float:
        return y2_ref - self.Iz * self.yaw_rate_correction(meas)
