"""Tests for track generation, lateral deviation and path guidance."""

import math

import numpy as np
import pytest

from vehctl.errors import (
    OffTrackError,
    ParameterError,
    ReferenceConsistencyError,
    TrackConstructionError,
)
from vehctl.flatness import state_from_flat
from vehctl.signals import Measurement
from vehctl.track import (
    GuidanceConfig,
    PathGuidance,
    SegmentSpec,
    TrackConfig,
    check_reference_derivatives,
    default_segments,
    generate_track,
    lateral_deviation,
    speed_profile,
    y2_reference,
)

DT = 0.001


@pytest.fixture
def arc_track(params):
    return generate_track(
        [SegmentSpec("arc", radius=100.0, angle=90.0, speed=20.0)], DT, params
    )


class TestSegmentSpec:
    """Tests for SegmentSpec validation."""

    def test_arc_length(self):
        """Should measure an arc as radius times angle."""
        arc = SegmentSpec("arc", radius=50.0, angle=90.0)
        assert arc.path_length == pytest.approx(50.0 * math.pi / 2)

    def test_rejects_unknown_kind(self):
        """Should reject kinds other than straight, arc and clothoid."""
        with pytest.raises(ParameterError):
            SegmentSpec("spiral", length=10.0)

    def test_rejects_arc_without_radius(self):
        """Should require a radius and an angle on arcs."""
        with pytest.raises(ParameterError):
            SegmentSpec("arc", angle=30.0)


class TestGenerateTrack:
    """Tests for generate_track."""

    def test_straight(self, params):
        """Should move along X at constant speed on a straight."""
        trajectory = generate_track(
            [SegmentSpec("straight", length=200.0, speed=20.0)], DT, params
        )
        assert trajectory.duration == pytest.approx(10.0, abs=DT)
        np.testing.assert_allclose(trajectory.x, 20.0 * trajectory.t, atol=1e-6)
        np.testing.assert_allclose(trajectory.y, 0.0, atol=1e-12)
        np.testing.assert_allclose(trajectory.vx, 20.0)
        np.testing.assert_allclose(trajectory.y2, 0.0, atol=1e-9)

    def test_arc_yaw_rate(self, arc_track):
        """Should turn at v / R = 0.2 rad/s on an R = 100 m arc at 20 m/s."""
        rate = np.gradient(arc_track.psi, arc_track.t)
        middle = slice(100, len(arc_track) - 100)
        np.testing.assert_allclose(rate[middle], 0.2, rtol=1e-6)
        assert arc_track.path.psi[-1] == pytest.approx(math.pi / 2, abs=1e-9)

    def test_s_curve_heading(self, params):
        """Should end with the net heading of the clothoid chain."""
        segments = [
            SegmentSpec("straight", length=50.0, speed=15.0),
            SegmentSpec("clothoid", length=30.0, curvature=0.02),
            SegmentSpec("arc", radius=50.0, angle=30.0),
            SegmentSpec("clothoid", length=30.0, curvature=0.0),
            SegmentSpec("clothoid", length=20.0, curvature=0.01, direction="right"),
            SegmentSpec("clothoid", length=20.0, curvature=0.0, direction="right"),
        ]
        trajectory = generate_track(segments, DT, params)
        expected = 2 * 30.0 * 0.02 / 2 + math.radians(30.0) - 2 * 20.0 * 0.01 / 2
        assert trajectory.path.psi[-1] == pytest.approx(expected, abs=1e-5)

    def test_curvature_jump_is_rejected(self, params):
        """Should name the joint where a straight meets an arc."""
        segments = [
            SegmentSpec("straight", length=50.0, speed=15.0),
            SegmentSpec("arc", radius=100.0, angle=30.0),
        ]
        with pytest.raises(TrackConstructionError) as excinfo:
            generate_track(segments, DT, params)
        assert excinfo.value.joint == 1
        assert "joint 1" in str(excinfo.value)

    def test_missing_speed_is_rejected(self, params):
        """Should reject a track whose first segment has no speed."""
        with pytest.raises(TrackConstructionError):
            generate_track([SegmentSpec("straight", length=50.0)], DT, params)

    def test_duration_truncates(self, params):
        """Should stop the reference at the requested duration."""
        trajectory = generate_track(
            [SegmentSpec("straight", length=200.0, speed=20.0)], DT, params, duration=2.0
        )
        assert len(trajectory) == 2001
        assert trajectory.s[-1] == pytest.approx(40.0)

    def test_frame_columns(self, arc_track):
        """Should export every reference column, one row per step."""
        frame = arc_track.to_frame()
        assert list(frame.columns) == [
            "t", "s", "Vx_ref", "Vx_dot_ref", "X_ref", "Y_ref", "psi_ref",
            "curvature", "y2_ref", "y2_dot_ref", "y2_ddot_ref",
        ]
        assert len(frame) == len(arc_track)


class TestDefaultTrack:
    """Tests for the default two-kilometre lap."""

    @pytest.fixture(scope="class")
    def lap(self):
        return generate_track(default_segments(), DT)

    def test_length(self, lap):
        """Should be about 2 km long."""
        assert lap.path.length == pytest.approx(2000.0, abs=5.0)

    def test_speeds(self, lap):
        """Should stay between the 30 km/h corners and the 70 km/h straights."""
        assert lap.vx.min() == pytest.approx(8.33)
        assert lap.vx.max() == pytest.approx(19.44)

    def test_corners(self, lap):
        """Should reach the R = 50 m and R = 120 m curvatures, turning left only."""
        assert lap.path.curvature.max() == pytest.approx(1.0 / 50.0)
        assert lap.path.curvature.min() >= 0.0
        assert np.isclose(lap.path.curvature, 1.0 / 120.0).any()

    def test_total_heading(self, lap):
        """Should turn through the four corners, just short of a full circle."""
        corner_120 = 2 * 50.0 / (2 * 120.0) + math.radians(66.0)
        corner_50 = 2 * 40.0 / (2 * 50.0) + math.radians(44.0)
        expected = 2 * (corner_120 + corner_50)
        assert lap.path.psi[-1] == pytest.approx(expected, abs=1e-5)
        assert abs(expected - 2 * math.pi) < 0.02

    def test_curvature_is_continuous(self, lap):
        """Should have no curvature jumps between geometry samples."""
        assert np.max(np.abs(np.diff(lap.path.curvature))) < 1e-3

    def test_time_mapping_is_consistent(self, lap):
        """Should cover the path length with the integral of the speed reference."""
        assert lap.distance_mismatch() < 1e-3


class TestSpeedProfile:
    """Tests for speed_profile."""

    def test_braking_ramp_ends_at_joint(self):
        """Should finish a slow-down at the joint where the slower segment starts."""
        s = np.linspace(0.0, 200.0, 2001)
        v, slope = speed_profile(s, np.array([0.0, 100.0, 200.0]), [20.0, 10.0], ramp=50.0)
        assert v[0] == 20.0
        assert v[np.searchsorted(s, 50.0)] == pytest.approx(20.0)
        assert v[np.searchsorted(s, 100.0)] == pytest.approx(10.0)
        assert np.all(slope <= 0.0)
        assert np.all(np.diff(v) <= 1e-12)

    def test_without_ramp(self):
        """Should step the speed when the ramp is zero."""
        s = np.array([0.0, 99.0, 101.0])
        v, slope = speed_profile(s, np.array([0.0, 100.0, 200.0]), [20.0, 10.0], ramp=0.0)
        assert list(v) == [20.0, 20.0, 10.0]
        assert not slope.any()


class TestReferenceDerivatives:
    """Tests for check_reference_derivatives and its use in generate_track."""

    def test_accepts_exact_derivative(self):
        """Should return a gap of the order of dt^2 for a smooth signal."""
        t = np.arange(2001) * DT
        gap = check_reference_derivatives("sin", t, np.sin(t), np.cos(t))
        assert gap < 1e-6

    def test_rejects_scaled_derivative(self):
        """Should name the channel whose derivative is off by a factor."""
        t = np.arange(2001) * DT
        with pytest.raises(ReferenceConsistencyError) as excinfo:
            check_reference_derivatives("sin", t, np.sin(t), 2.0 * np.cos(t))
        assert excinfo.value.channel == "sin"

    def test_rejects_step_without_rate(self):
        """Should reject a jump the derivative does not account for."""
        t = np.arange(11) * DT
        yd = np.zeros_like(t)
        yd[5:] = 1.0
        with pytest.raises(ReferenceConsistencyError, match="t=0.004"):
            check_reference_derivatives("step", t, yd, np.zeros_like(t))

    def test_single_sample(self):
        """Should accept a one-sample reference."""
        assert check_reference_derivatives("y", np.zeros(1), np.ones(1), np.zeros(1)) == 0.0

    def test_speed_step_is_rejected(self, params):
        """Should reject a speed change without a ramp."""
        segments = [
            SegmentSpec("straight", length=50.0, speed=20.0),
            SegmentSpec("straight", length=50.0, speed=10.0),
        ]
        with pytest.raises(ReferenceConsistencyError) as excinfo:
            generate_track(segments, DT, params, TrackConfig(speed_ramp=0.0))
        assert excinfo.value.channel == "Vx"

    @pytest.mark.parametrize("mode", ["model", "zero"])
    def test_clothoid_references_pass(self, params, mode):
        """Should build y2 references whose derivatives pass the cross-check."""
        segments = [
            SegmentSpec("straight", length=30.0, speed=15.0),
            SegmentSpec("clothoid", length=30.0, curvature=0.02),
            SegmentSpec("clothoid", length=30.0, curvature=0.0),
        ]
        trajectory = generate_track(segments, DT, params, TrackConfig(y2_reference=mode))
        assert np.max(np.abs(trajectory.y2_dot)) > 0.0
        check_reference_derivatives("y2", trajectory.t, trajectory.y2, trajectory.y2_dot)
        check_reference_derivatives("y2_dot", trajectory.t, trajectory.y2_dot, trajectory.y2_ddot)


class TestY2Reference:
    """Tests for y2_reference."""

    def test_zero_sideslip_mode(self, params):
        """Should give y2 = -Iz * yaw rate when the reference has no sideslip."""
        t = np.arange(5) * DT
        yaw_rate = np.full(5, 0.2)
        y2 = y2_reference(t, np.full(5, 20.0), yaw_rate, params, mode="zero")
        np.testing.assert_allclose(y2, -2500.0 * 0.2)

    def test_model_mode_is_steady_on_an_arc(self, params, arc_track):
        """Should reconstruct the reference yaw rate from y2 on a steady arc."""
        k = len(arc_track) // 2
        _, _, yaw_rate = state_from_flat(
            arc_track.vx[k], arc_track.y2[k], arc_track.y2_dot[k], params
        )
        assert yaw_rate == pytest.approx(0.2, rel=1e-6)
        assert arc_track.y2_dot[k] == pytest.approx(0.0, abs=1e-6)

    def test_rejects_unknown_mode(self, params):
        """Should reject modes other than model and zero."""
        with pytest.raises(ParameterError):
            y2_reference(np.zeros(2), np.ones(2), np.zeros(2), params, mode="steady")


class TestLateralDeviation:
    """Tests for lateral_deviation."""

    @pytest.fixture
    def straight(self, params):
        return generate_track(
            [SegmentSpec("straight", length=100.0, speed=10.0)], DT, params
        )

    def test_on_path(self, straight):
        """Should report zero deviation on the path."""
        error = lateral_deviation(40.0, 0.0, 0.0, straight)
        assert error.deviation == pytest.approx(0.0, abs=1e-12)
        assert error.heading_error == 0.0

    def test_left_is_positive(self, straight):
        """Should be positive left of the path and negative right of it."""
        assert lateral_deviation(40.0, 0.5, 0.0, straight).deviation == pytest.approx(0.5)
        assert lateral_deviation(40.0, -0.3, 0.0, straight).deviation == pytest.approx(-0.3)

    def test_heading_error_is_wrapped(self, straight):
        """Should wrap the heading error into (-pi, pi]."""
        error = lateral_deviation(40.0, 0.0, 2 * math.pi + 0.1, straight)
        assert error.heading_error == pytest.approx(0.1)

    def test_leaving_the_corridor(self, straight):
        """Should raise OffTrackError beyond the corridor."""
        with pytest.raises(OffTrackError):
            lateral_deviation(40.0, 25.0, 0.0, straight)
        with pytest.raises(OffTrackError):
            lateral_deviation(40.0, 1.5, 0.0, straight, corridor=1.0)

    def test_matches_brute_force_on_an_arc(self, arc_track):
        """Should match the distance to the closest path sample within the sampling."""
        path = arc_track.path
        rng = np.random.default_rng(9)
        for _ in range(50):
            i = int(rng.integers(200, len(path.s) - 200))
            offset = rng.uniform(-2.0, 2.0)
            x = path.x[i] - offset * math.sin(path.psi[i])
            y = path.y[i] + offset * math.cos(path.psi[i])
            error = lateral_deviation(x, y, path.psi[i], arc_track)
            brute = np.min(np.hypot(path.x - x, path.y - y))
            assert abs(error.deviation) == pytest.approx(brute, abs=1e-3)
            assert error.deviation == pytest.approx(offset, abs=1e-3)

    def test_inside_of_left_turn_is_positive(self, arc_track):
        """Should count the centre side of a left turn as left."""
        path = arc_track.path
        i = len(path.s) // 2
        x = path.x[i] - 1.0 * math.sin(path.psi[i])
        y = path.y[i] + 1.0 * math.cos(path.psi[i])
        centre = (0.0, 100.0)
        assert math.hypot(x - centre[0], y - centre[1]) < 100.0
        assert lateral_deviation(x, y, path.psi[i], arc_track).deviation > 0.0

    def test_hint_limits_search(self, arc_track):
        """Should return the same answer with a nearby hint."""
        path = arc_track.path
        i = len(path.s) // 3
        full = lateral_deviation(path.x[i], path.y[i] + 0.2, 0.0, arc_track)
        hinted = lateral_deviation(path.x[i], path.y[i] + 0.2, 0.0, arc_track, hint=i + 10)
        assert hinted.deviation == pytest.approx(full.deviation)
        assert hinted.index == full.index


class TestPathGuidance:
    """Tests for PathGuidance."""

    def test_no_correction_on_path(self):
        """Should leave y2_ref unchanged on the path with no course error."""
        guidance = PathGuidance(GuidanceConfig(), Iz=2500.0)
        meas = Measurement(0.0, 20.0, 0.0, 0.0, 0.3, 0.0, path_heading=0.3)
        assert guidance.y2_command(-150.0, meas) == pytest.approx(-150.0)

    def test_turns_right_when_left_of_path(self):
        """Should ask for a clockwise yaw-rate correction left of the path."""
        guidance = PathGuidance(GuidanceConfig(bandwidth=1.0, damping=0.9), Iz=2500.0)
        meas = Measurement(0.0, 20.0, 0.0, 0.0, 0.0, 0.5)
        assert guidance.yaw_rate_correction(meas) == pytest.approx(-0.5 / 20.0)
        assert guidance.y2_command(0.0, meas) == pytest.approx(2500.0 * 0.5 / 20.0)

    def test_damps_course_error(self):
        """Should counter a course error with gain 2 zeta omega."""
        guidance = PathGuidance(GuidanceConfig(bandwidth=2.0, damping=0.5), Iz=2500.0)
        meas = Measurement(0.0, 20.0, 0.0, 0.0, 0.1, 0.0)
        assert guidance.yaw_rate_correction(meas) == pytest.approx(-2.0 * 0.1)

    def test_rejects_non_positive_bandwidth(self):
        """Should reject a zero bandwidth."""
        with pytest.raises(ParameterError):
            GuidanceConfig(bandwidth=0.0)


class TestTrackConfig:
    """Tests for TrackConfig validation."""

    def test_rejects_unknown_y2_mode(self):
        """Should only accept the model and zero y2 references."""
        with pytest.raises(ParameterError):
            TrackConfig(y2_reference="other")
