"""
Closed-loop scenarios: plant + controller + reference + noise, and metrics.

`run_scenario` steps the plant at dt, feeds the selected controller with
(possibly noisy) measurements, logs every step into a telemetry frame and
computes tracking metrics after the warmup window. Simulation faults never
escape: they end the run early and are reported in `TrackingMetrics.status`.

Usage:
    result = run_scenario(ScenarioConfig())
    print(result.metrics.lateral_rms)
    table = compare_controllers(ScenarioConfig(), perturbations=[(0.3, 0.3)])
"""

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Protocol

import numpy as np
import pandas as pd

from vehctl.actuators import ActuatorLimits
from vehctl.errors import (
    DegenerateParameterError,
    DivergenceError,
    NearSingularDeltaError,
    OffTrackError,
    ParameterError,
    SchemaError,
    SingularSpeedError,
    VehctlError,
)
from vehctl.estimation import EstimatorConfig
from vehctl.flatness import FlatnessConfig, FlatnessController, FlatOutputModel
from vehctl.mfc import (
    MfcFlatConfig,
    MfcFlatController,
    MfcNaturalConfig,
    MfcNaturalController,
)
from vehctl.plant import (
    DEFAULT_DT,
    DEFAULT_SLIP_STIFFNESS,
    VX_MIN,
    ControlInput,
    VehicleParams,
    VehicleState,
    WheelMode,
    perturb_params,
    step,
    tire_forces,
)
from vehctl.reporting import emit_plot_data
from vehctl.signals import Measurement, ReferenceSample
from vehctl.track import (
    GuidanceConfig,
    PathGuidance,
    ReferenceTrajectory,
    SegmentSpec,
    TrackConfig,
    default_segments,
    generate_track,
    lateral_deviation,
)

# =============================================================================
# Constants
# =============================================================================

CONTROLLERS = ("flatness", "mfc-flat", "mfc-natural")

NOISE_CHANNELS = ("vx", "vy", "yaw_rate", "heading", "lateral_deviation")

PLANT_COLUMNS = ("t", "Vx", "Vy", "psi_dot", "psi", "X", "Y", "T_w", "delta")
HARNESS_COLUMNS = ("Vx_ref", "X_ref", "Y_ref", "lat_dev", "yaw_err", "saturated")
# Tire forces of the true plant
TIRE_COLUMNS = ("Fy_f", "Fy_r", "beta")

# Columns compute_metrics needs
METRIC_COLUMNS = ("t", "Vx", "Vx_ref", "lat_dev", "yaw_err", "T_w", "delta", "saturated")

DEFAULT_WARMUP_FACTOR = 3.0
DEFAULT_MAX_FAULT_STEPS = 100

STATUS_OK = "ok"
STATUS_DIVERGED = "diverged"
STATUS_OFF_TRACK = "off-track"
STATUS_CONTROLLER_FAULT = "controller-fault"
STATUS_FAILED = "failed"

PROGRESS_STEPS = 10


# =============================================================================
# Configuration
# =============================================================================

@dataclass(frozen=True)
class ScenarioSettings:
    """[scenario] section."""
    controller: str = "flatness"
    dt: float = DEFAULT_DT
    duration: float = 0.0          # 0 runs the whole track
    seed: int = 0
    warmup_factor: float = DEFAULT_WARMUP_FACTOR
    vx_min: float = VX_MIN
    max_fault_steps: int = DEFAULT_MAX_FAULT_STEPS

    def __post_init__(self):
        if self.controller not in CONTROLLERS:
            raise ParameterError(
                f"controller must be one of {CONTROLLERS}, got '{self.controller}'"
            )
        if not self.dt > 0:
            raise ParameterError(f"dt must be > 0, got {self.dt}")
        if not self.duration >= 0:
            raise ParameterError(f"duration must be >= 0, got {self.duration}")
        if self.seed < 0:
            raise ParameterError(f"seed must be >= 0, got {self.seed}")
        if not self.warmup_factor >= 0:
            raise ParameterError("warmup_factor must be >= 0")
        if not self.vx_min > 0:
            raise ParameterError("vx_min must be > 0")
        if self.max_fault_steps < 0:
            raise ParameterError("max_fault_steps must be >= 0")


@dataclass(frozen=True)
class PlantConfig:
    """[plant] section."""
    wheel_mode: str = WheelMode.QUASI_STATIC.value
    slip_stiffness: float = DEFAULT_SLIP_STIFFNESS

    def __post_init__(self):
        WheelMode(self.wheel_mode)
        if not self.slip_stiffness > 0:
            raise ParameterError("slip_stiffness must be > 0")

    @property
    def mode(self) -> WheelMode:
        return WheelMode(self.wheel_mode)


@dataclass(frozen=True)
class PerturbationConfig:
    """[perturbation] section: plant-only scaling of the cornering stiffnesses."""
    cf_scale: float = 1.0
    cr_scale: float = 1.0

    def __post_init__(self):
        if not (self.cf_scale > 0 and self.cr_scale > 0):
            raise ParameterError("perturbation scales must be > 0")


@dataclass(frozen=True)
class NoiseConfig:
    """[noise] section: Gaussian sigma per measured channel."""
    enabled: bool = False
    vx: float = 0.05                 # [m/s]
    vy: float = 0.01                 # [m/s]
    yaw_rate: float = 0.005          # [rad/s]
    heading: float = 0.002           # [rad]
    lateral_deviation: float = 0.01  # [m]

    def __post_init__(self):
        for name in NOISE_CHANNELS:
            if not getattr(self, name) >= 0:
                raise ParameterError(f"noise sigma '{name}' must be >= 0")

    def sigma(self, channel: str) -> float:
        return getattr(self, channel) if self.enabled else 0.0


@dataclass(frozen=True)
class CompareConfig:
    """[compare] section."""
    perturbations: tuple[tuple[float, float], ...] = ((0.3, 0.3),)
    controllers: tuple[str, ...] = CONTROLLERS
    workers: int = 1

    def __post_init__(self):
        for name in self.controllers:
            if name not in CONTROLLERS:
                raise ParameterError(f"unknown controller '{name}'")
        for cf, cr in self.perturbations:
            if not (cf > 0 and cr > 0):
                raise ParameterError("perturbation scales must be > 0")
        if self.workers < 1:
            raise ParameterError("workers must be >= 1")


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything one invocation needs, one attribute per config section."""
    scenario: ScenarioSettings = field(default_factory=ScenarioSettings)
    vehicle: VehicleParams = field(default_factory=VehicleParams)
    plant: PlantConfig = field(default_factory=PlantConfig)
    perturbation: PerturbationConfig = field(default_factory=PerturbationConfig)
    actuators: ActuatorLimits = field(default_factory=ActuatorLimits)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    flatness: FlatnessConfig = field(default_factory=FlatnessConfig)
    mfc_flat: MfcFlatConfig = field(default_factory=MfcFlatConfig)
    mfc_natural: MfcNaturalConfig = field(default_factory=MfcNaturalConfig)
    guidance: GuidanceConfig = field(default_factory=GuidanceConfig)
    track: TrackConfig = field(default_factory=TrackConfig)
    estimator: EstimatorConfig = field(default_factory=EstimatorConfig)
    compare: CompareConfig = field(default_factory=CompareConfig)
    segments: tuple[SegmentSpec, ...] = field(
        default_factory=lambda: tuple(default_segments())
    )

    def with_controller(self, controller: str) -> "ScenarioConfig":
        return replace(self, scenario=replace(self.scenario, controller=controller))

    def with_perturbation(self, cf_scale: float, cr_scale: float) -> "ScenarioConfig":
        return replace(self, perturbation=PerturbationConfig(cf_scale, cr_scale))

    def with_seed(self, seed: int) -> "ScenarioConfig":
        return replace(self, scenario=replace(self.scenario, seed=seed))


# =============================================================================
# Noise
# =============================================================================

def noise_stream(sigma: float, seed: int, channel: int, n: int) -> np.ndarray:
    """n Gaussian draws; the k-th draw belongs to step k of (seed, channel)."""
    if sigma == 0:
        return np.zeros(n)
    key = np.array([seed, channel], dtype=np.uint64)
    rng = np.random.Generator(np.random.Philox(key=key))
    return sigma * rng.standard_normal(n)


def add_noise(signal: np.ndarray, sigma: float, seed: int, channel: int = 0) -> np.ndarray:
    """Signal plus reproducible zero-mean Gaussian noise."""
    if sigma < 0:
        raise ParameterError(f"sigma must be >= 0, got {sigma}")
    signal = np.asarray(signal, dtype=float)
    return signal + noise_stream(sigma, seed, channel, len(signal))


# =============================================================================
# Controllers
# =============================================================================

class Controller(Protocol):
    name: str
    telemetry_columns: tuple[str, ...]
    saturated: bool
    telemetry: tuple[float, ...]

    def update(self, meas: Measurement, ref: ReferenceSample) -> ControlInput: ...


def build_controller(config: ScenarioConfig) -> Controller:
    """Controller selected by the scenario, built on the nominal vehicle model."""
    period = config.scenario.dt
    nominal = config.vehicle
    guidance = None
    if config.guidance.enabled:
        guidance = PathGuidance(config.guidance, nominal.Iz)
    name = config.scenario.controller
    if name == "flatness":
        return FlatnessController(
            config.flatness, nominal, config.actuators, period, guidance
        )
    if name == "mfc-flat":
        return MfcFlatController(
            config.mfc_flat,
            FlatOutputModel.from_params(nominal),
            config.actuators,
            period,
            guidance,
        )
    return MfcNaturalController(config.mfc_natural, config.actuators, period)


def warmup_time(config: ScenarioConfig) -> float:
    """Metrics start after warmup_factor times the longest estimator window."""
    name = config.scenario.controller
    if name == "flatness":
        span = config.flatness.diff_span
    elif name == "mfc-flat":
        span = config.mfc_flat.span
    else:
        span = config.mfc_natural.span
    return config.scenario.warmup_factor * span


# =============================================================================
# Metrics
# =============================================================================

@dataclass(frozen=True)
class TrackingMetrics:
    status: str
    completed: bool
    steps: int
    warmup_time: float
    lateral_max: float
    lateral_rms: float
    yaw_max: float
    yaw_rms: float
    speed_rms: float
    effort_torque: float
    effort_steer: float
    saturation_duty: float

    def to_text(self) -> str:
        """One `metric=value` line per field."""
        lines = []
        for name, value in asdict(self).items():
            if isinstance(value, bool):
                value = str(value).lower()
            elif isinstance(value, float):
                value = repr(value)
            lines.append(f"{name}={value}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "TrackingMetrics":
        values = dict(line.split("=", 1) for line in text.splitlines() if "=" in line)
        kwargs = {}
        for f in fields(cls):
            raw = values[f.name]
            if f.type is bool:
                kwargs[f.name] = raw == "true"
            elif f.type is int:
                kwargs[f.name] = int(raw)
            elif f.type is float:
                kwargs[f.name] = float(raw)
            else:
                kwargs[f.name] = raw
        return cls(**kwargs)


def _rms(values: np.ndarray) -> float:
    return float(np.sqrt(np.mean(values**2))) if len(values) else math.nan


def _max_abs(values: np.ndarray) -> float:
    return float(np.max(np.abs(values))) if len(values) else math.nan


def compute_metrics(
    telemetry: pd.DataFrame,
    warmup: float,
    status: str = STATUS_OK,
    completed: bool = True,
) -> TrackingMetrics:
    """Tracking metrics over the rows with t >= warmup.

    Raises:
        SchemaError: if a required column is missing
    """
    for column in METRIC_COLUMNS:
        if column not in telemetry.columns:
            raise SchemaError(column)
    window = telemetry[telemetry["t"].to_numpy() >= warmup]
    t = window["t"].to_numpy(dtype=float)
    lat = window["lat_dev"].to_numpy(dtype=float)
    yaw = window["yaw_err"].to_numpy(dtype=float)
    speed = window["Vx"].to_numpy(dtype=float) - window["Vx_ref"].to_numpy(dtype=float)
    torque = window["T_w"].to_numpy(dtype=float)
    steer = window["delta"].to_numpy(dtype=float)
    saturated = window["saturated"].to_numpy(dtype=float)
    has_span = len(t) >= 2
    return TrackingMetrics(
        status=status,
        completed=completed,
        steps=len(telemetry),
        warmup_time=warmup,
        lateral_max=_max_abs(lat),
        lateral_rms=_rms(lat),
        yaw_max=_max_abs(yaw),
        yaw_rms=_rms(yaw),
        speed_rms=_rms(speed),
        effort_torque=float(np.trapezoid(torque**2, t)) if has_span else math.nan,
        effort_steer=float(np.trapezoid(steer**2, t)) if has_span else math.nan,
        saturation_duty=float(np.mean(saturated)) if len(t) else math.nan,
    )


def read_telemetry(path: Path) -> pd.DataFrame:
    return pd.read_csv(path, float_precision="round_trip")


def metrics_from_csv(
    path: Path, warmup: float, status: str = STATUS_OK, completed: bool = True
) -> TrackingMetrics:
    """Recompute metrics from a telemetry CSV written by `write_run`."""
    return compute_metrics(read_telemetry(path), warmup, status, completed)


# =============================================================================
# Scenario Runner
# =============================================================================

@dataclass
class ScenarioResult:
    config: ScenarioConfig
    metrics: TrackingMetrics
    telemetry: pd.DataFrame
    reference: ReferenceTrajectory = field(repr=False)


def build_reference(config: ScenarioConfig) -> ReferenceTrajectory:
    duration = config.scenario.duration or None
    return generate_track(
        list(config.segments),
        config.scenario.dt,
        params=config.vehicle,
        config=config.track,
        duration=duration,
    )


def _measurement_noise(config: ScenarioConfig, n: int) -> dict[str, np.ndarray]:
    seed = config.scenario.seed
    return {
        name: noise_stream(config.noise.sigma(name), seed, index, n)
        for index, name in enumerate(NOISE_CHANNELS)
    }


def _tire_row(
    state: VehicleState, applied: ControlInput, params: VehicleParams
) -> tuple[float, float, float]:
    if state.Vx < VX_MIN:
        return (math.nan,) * len(TIRE_COLUMNS)
    forces = tire_forces(state, applied, params)
    return forces.Fy_f, forces.Fy_r, forces.beta


def run_scenario(
    config: ScenarioConfig,
    reference: ReferenceTrajectory | None = None,
    verbose: bool = False,
) -> ScenarioResult:
    """Run one closed-loop scenario over the reference trajectory.

    The plant integrates the truth with the perturbed parameters; the
    controller only sees the measurements and its own nominal model.
    """
    settings = config.scenario
    dt = settings.dt
    ref = reference if reference is not None else build_reference(config)
    plant_params = perturb_params(
        config.vehicle, config.perturbation.cf_scale, config.perturbation.cr_scale
    )
    wheel_mode = config.plant.mode
    controller = build_controller(config)
    corridor = config.track.corridor

    n = len(ref)
    noise = _measurement_noise(config, n)
    columns = PLANT_COLUMNS + HARNESS_COLUMNS + TIRE_COLUMNS + controller.telemetry_columns
    log = np.full((n, len(columns)), np.nan)

    state = VehicleState.rolling(
        float(ref.vx[0]), plant_params,
        psi=float(ref.psi[0]), X=float(ref.x[0]), Y=float(ref.y[0]),
    )
    applied = ControlInput()
    hint = None
    faults = 0
    status = STATUS_OK
    rows = 0

    progress_every = max(n // PROGRESS_STEPS, 1)
    start_time = time.time()
    if verbose:
        print(f"Running {settings.controller} over {ref.duration:.1f} s ({n:,} steps)...")

    for k in range(n):
        try:
            error = lateral_deviation(state.X, state.Y, state.psi, ref, hint, corridor)
        except OffTrackError:
            status = STATUS_OFF_TRACK
            break
        hint = error.index
        t = float(ref.t[k])
        meas = Measurement(
            t=t,
            vx=state.Vx + noise["vx"][k],
            vy=state.Vy + noise["vy"][k],
            yaw_rate=state.psi_dot + noise["yaw_rate"][k],
            heading=state.psi + noise["heading"][k],
            lateral_deviation=error.deviation + noise["lateral_deviation"][k],
            path_heading=error.path_heading,
            omega_f_dot=state.omega_f_dot,
            omega_r_dot=state.omega_r_dot,
        )
        try:
            applied = controller.update(meas, ref.sample(k))
            faults = 0
        except (NearSingularDeltaError, DegenerateParameterError, ParameterError):
            # hold the previous input
            faults += 1
            if faults > settings.max_fault_steps:
                status = STATUS_CONTROLLER_FAULT
                break

        log[k, :len(PLANT_COLUMNS)] = (
            t, state.Vx, state.Vy, state.psi_dot, state.psi, state.X, state.Y,
            applied.T_w, applied.delta,
        )
        log[k, len(PLANT_COLUMNS):len(PLANT_COLUMNS) + len(HARNESS_COLUMNS)] = (
            ref.vx[k], ref.x[k], ref.y[k], error.deviation, error.heading_error,
            float(controller.saturated),
        )
        log[k, len(PLANT_COLUMNS) + len(HARNESS_COLUMNS):] = (
            _tire_row(state, applied, plant_params) + tuple(controller.telemetry)
        )
        rows = k + 1

        if verbose and rows % progress_every == 0:
            elapsed = time.time() - start_time
            rate = rows / elapsed if elapsed > 0 else 0.0
            print(f"  Progress: {100 * rows // n}% (t={t:.1f} s, {rate:.0f} steps/sec)")

        if k == n - 1:
            break
        try:
            state = step(
                state, applied, plant_params, dt,
                wheel_mode=wheel_mode,
                slip_stiffness=config.plant.slip_stiffness,
                vx_min=settings.vx_min,
            )
        except (SingularSpeedError, DivergenceError):
            status = STATUS_DIVERGED
            break

    telemetry = pd.DataFrame(log[:rows], columns=list(columns))
    telemetry["saturated"] = telemetry["saturated"].astype(int)
    completed = status == STATUS_OK
    metrics = compute_metrics(telemetry, warmup_time(config), status, completed)
    if verbose:
        print(f"Finished: status={status}, {rows:,} steps in {time.time() - start_time:.1f} s")
    return ScenarioResult(config=config, metrics=metrics, telemetry=telemetry, reference=ref)


def write_run(result: ScenarioResult, directory: Path) -> None:
    """telemetry.csv and metrics.txt under `directory`."""
    directory.mkdir(parents=True, exist_ok=True)
    result.telemetry.to_csv(directory / "telemetry.csv", index=False)
    (directory / "metrics.txt").write_text(result.metrics.to_text())


# =============================================================================
# Comparison
# =============================================================================

def _variants(perturbations) -> list[tuple[str, float, float]]:
    variants = [("nominal", 1.0, 1.0)]
    for cf, cr in perturbations:
        if (cf, cr) == (1.0, 1.0):
            continue
        variants.append((f"cf{cf:g}_cr{cr:g}", cf, cr))
    return variants


def _failed_metrics() -> TrackingMetrics:
    nan = math.nan
    return TrackingMetrics(STATUS_FAILED, False, 0, nan, nan, nan, nan, nan, nan, nan, nan, nan)


def _run_cell(config: ScenarioConfig, run_dir: Path | None) -> TrackingMetrics:
    try:
        result = run_scenario(config)
    except VehctlError:
        return _failed_metrics()
    if run_dir is not None:
        write_run(result, run_dir)
        emit_plot_data(result.telemetry, run_dir / "plots")
    return result.metrics


def compare_controllers(
    base: ScenarioConfig,
    perturbations=None,
    controllers=None,
    workers: int | None = None,
    out_dir: Path | None = None,
    verbose: bool = False,
) -> pd.DataFrame:
    """One run per (plant variant, controller), ranked by lateral RMS per variant.

    The nominal plant is always included. A run that fails keeps its row with
    its status and ranks last within its variant.
    With `out_dir`, each run writes its telemetry, metrics and plot data to
    `out_dir/<variant>/<controller>`.
    """
    perturbations = base.compare.perturbations if perturbations is None else perturbations
    controllers = base.compare.controllers if controllers is None else controllers
    workers = base.compare.workers if workers is None else workers

    cells = []
    for variant, cf, cr in _variants(perturbations):
        for name in controllers:
            config = base.with_perturbation(cf, cr).with_controller(name)
            run_dir = out_dir / variant / name if out_dir is not None else None
            cells.append(((variant, cf, cr, name), config, run_dir))

    if verbose:
        print(f"Running {len(cells)} scenarios with {workers} worker(s)...")
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_run_cell, config, run_dir) for _, config, run_dir in cells]
            results = [f.result() for f in futures]
    else:
        results = []
        for i, (key, config, run_dir) in enumerate(cells):
            results.append(_run_cell(config, run_dir))
            if verbose:
                print(f"  Progress: {i + 1}/{len(cells)} ({key[0]} / {key[3]})")

    rows = []
    for ((variant, cf, cr, name), _, _), metrics in zip(cells, results):
        row = {"variant": variant, "cf_scale": cf, "cr_scale": cr, "controller": name}
        row.update(asdict(metrics))
        rows.append(row)
    table = pd.DataFrame(rows)
    if table.empty:
        return table

    table["_failed"] = table["status"] != STATUS_OK
    table["_order"] = table["variant"].map(
        {v: i for i, (v, _, _) in enumerate(_variants(perturbations))}
    )
    table = table.sort_values(
        ["_order", "_failed", "lateral_rms"], na_position="last", kind="stable"
    )
    table["rank"] = table.groupby("variant").cumcount() + 1
    table = table.drop(columns=["_failed", "_order"]).reset_index(drop=True)
    leading = ["variant", "cf_scale", "cr_scale", "controller", "rank"]
    return table[leading + [c for c in table.columns if c not in leading]]
