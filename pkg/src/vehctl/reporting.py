"""Console reports and plot-data files for scenario runs."""

from __future__ import annotations

from pathlib import Path
from typing import TYPE_CHECKING

import numpy as np
import pandas as pd

from vehctl.errors import SchemaError

if TYPE_CHECKING:
    from vehctl.harness import ScenarioConfig, TrackingMetrics
    from vehctl.track import ReferenceTrajectory

# Panel name -> (x column, y column); one two-column CSV per panel
PLOT_PANELS = {
    "path_vehicle": ("X", "Y"),
    "path_reference": ("X_ref", "Y_ref"),
    "lateral_error": ("t", "lat_dev"),
    "yaw_error": ("t", "yaw_err"),
    "speed": ("t", "Vx"),
    "speed_reference": ("t", "Vx_ref"),
    "torque": ("t", "T_w"),
    "steer": ("t", "delta"),
}


def emit_plot_data(
    telemetry: pd.DataFrame,
    out_dir: Path,
    panels: dict[str, tuple[str, str]] | None = None,
) -> list[Path]:
    """Write `<panel>.csv` for every panel; returns the written paths.

    Raises:
        SchemaError: naming the first column the telemetry lacks
    """
    panels = PLOT_PANELS if panels is None else panels
    for x_col, y_col in panels.values():
        for column in (x_col, y_col):
            if column not in telemetry.columns:
                raise SchemaError(column)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for name, (x_col, y_col) in panels.items():
        path = out_dir / f"{name}.csv"
        telemetry[[x_col, y_col]].to_csv(path, index=False)
        written.append(path)
    return written


def _fmt(value: float, spec: str) -> str:
    return "n/a" if value is None or np.isnan(value) else format(value, spec)


class Reporter:
    """Formats and prints run results."""

    @staticmethod
    def print_scenario(config: ScenarioConfig, reference: ReferenceTrajectory) -> None:
        s = config.scenario
        print("=" * 60)
        print("Vehicle Tracking Scenario")
        print("=" * 60)
        print(f"Controller:         {s.controller}")
        print(f"Time step:          {s.dt * 1000:.3f} ms")
        print(f"Duration:           {reference.duration:.1f} s ({len(reference):,} steps)")
        print(f"Track length:       {reference.path.length:.1f} m")
        print(f"Cf / Cr scale:      {config.perturbation.cf_scale:g} / "
              f"{config.perturbation.cr_scale:g}")
        print(f"Noise:              {'on' if config.noise.enabled else 'off'}")
        print(f"Seed:               {s.seed}")
        print()

    @staticmethod
    def print_metrics(metrics: TrackingMetrics) -> None:
        print()
        print("--- Tracking Metrics ---")
        print(f"Status:             {metrics.status}")
        print(f"Steps:              {metrics.steps:,}")
        print(f"Warmup:             {metrics.warmup_time:.3f} s")
        print(f"Lateral RMS:        {_fmt(metrics.lateral_rms, '.4f')} m")
        print(f"Lateral max:        {_fmt(metrics.lateral_max, '.4f')} m")
        print(f"Yaw RMS:            {_fmt(np.degrees(metrics.yaw_rms), '.3f')} deg")
        print(f"Yaw max:            {_fmt(np.degrees(metrics.yaw_max), '.3f')} deg")
        print(f"Speed RMS:          {_fmt(metrics.speed_rms, '.4f')} m/s")
        print(f"Effort T_w:         {_fmt(metrics.effort_torque, '.4g')} N^2 m^2 s")
        print(f"Effort delta:       {_fmt(metrics.effort_steer, '.4g')} rad^2 s")
        print(f"Saturation duty:    {_fmt(100 * metrics.saturation_duty, '.2f')} %")
        print("=" * 60)

    @staticmethod
    def print_comparison(table: pd.DataFrame) -> None:
        print()
        print("=" * 60)
        print("Controller Comparison (ranked by lateral RMS)")
        print("=" * 60)
        print(f"{'Variant':<16} {'Controller':<12} {'Rank':>4} {'Status':<17} "
              f"{'Lat RMS':>9} {'Lat max':>9} {'Spd RMS':>9}")
        print("-" * 80)
        for row in table.itertuples(index=False):
            print(f"{row.variant:<16} {row.controller:<12} {row.rank:>4} {row.status:<17} "
                  f"{_fmt(row.lateral_rms, '.4f'):>9} {_fmt(row.lateral_max, '.4f'):>9} "
                  f"{_fmt(row.speed_rms, '.4f'):>9}")
        print("-" * 80)

    @staticmethod
    def print_track(reference: ReferenceTrajectory) -> None:
        print("=" * 60)
        print("Reference Track")
        print("=" * 60)
        print(f"Length:             {reference.path.length:.1f} m")
        print(f"Duration:           {reference.duration:.1f} s")
        print(f"Samples:            {len(reference):,}")
        print(f"Speed range:        {reference.vx.min():.2f} .. {reference.vx.max():.2f} m/s")
        print(f"Max |curvature|:    {np.abs(reference.curvature).max():.4f} 1/m")
        print("=" * 60)
