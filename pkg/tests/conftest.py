"""Shared fixtures: nominal vehicle and short scenarios that run in well under a second."""

from dataclasses import replace

import pytest

from vehctl.harness import ScenarioConfig
from vehctl.plant import VehicleParams
from vehctl.track import SegmentSpec


def short_segments(speed: float = 15.0) -> tuple[SegmentSpec, ...]:
    """Straight, then a gentle left corner entry."""
    return (
        SegmentSpec("straight", length=60.0, speed=speed),
        SegmentSpec("clothoid", length=20.0, curvature=0.01),
        SegmentSpec("arc", radius=100.0, angle=20.0),
    )


@pytest.fixture
def params():
    """Nominal sedan."""
    return VehicleParams()


@pytest.fixture
def make_config():
    """Factory for a short scenario on `short_segments`."""

    def factory(controller: str = "flatness", duration: float = 1.5, **sections):
        config = ScenarioConfig(segments=short_segments())
        config = replace(
            config,
            scenario=replace(config.scenario, controller=controller, duration=duration),
        )
        return replace(config, **sections)

    return factory
