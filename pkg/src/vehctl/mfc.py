"""
Model-free control: ultra-local models and intelligent controllers.

Each channel is replaced by the ultra-local model

    y^(nu) = F + alpha u

where F lumps everything unknown and is re-estimated every step from the
last `span` seconds of y and u. The intelligent controllers cancel the
estimate and impose linear error dynamics with e = y - y_d:

    iP    u = -(F - yd_dot + KP e) / alpha
    iPI   u = -(F - yd_dot + KP e + KI int e) / alpha
    iPD   u = -(F - yd_ddot + KP e + KD e_dot) / alpha
    iPID  u = -(F - yd_ddot + KP e + KI int e + KD e_dot) / alpha

Two vehicle controllers are composed from them: a pair of iPIs on the flat
outputs (needs only m, Iz, Lf to form y2) and an iP/iPD pair on the natural
outputs speed and lateral deviation (needs no vehicle parameter at all).
"""

from dataclasses import dataclass, replace

import numpy as np

from vehctl.actuators import ActuatorLimits, ClampedIntegrator
from vehctl.errors import ParameterError
from vehctl.estimation import DEFAULT_SPAN, Differentiator, EstimatorConfig, FEstimator
from vehctl.flatness import FlatOutputModel, is_hurwitz
from vehctl.plant import ControlInput
from vehctl.signals import Measurement, ReferenceSample, TrackingReference
from vehctl.track import PathGuidance

# alpha for the torque channel: 1 / (m R) of the nominal sedan
DEFAULT_ALPHA_TORQUE = 1.0 / 450.0

# Flat-output lateral channel: y2_dot does not see delta directly, so the
# ultra-local gain must be large and carry the sign of d(y2_ddot)/d(delta)
DEFAULT_ALPHA_Y2 = -3.0e5

# Natural lateral channel: d(lat_dev_ddot)/d(delta) is about Cf/m = 40 for
# the nominal sedan. The F estimate lags by about span * m alpha / Cf, so a smaller
# alpha keeps a weak-tire plant close to nominal; it must stay above Cf/(2 m).
DEFAULT_ALPHA_DEVIATION = 25.0

# Shorter window for the natural-output controller; noisy setups raise it
DEFAULT_NATURAL_SPAN = 0.025

# The natural lateral output is measured from the path itself
ON_PATH = TrackingReference(0.0)


@dataclass(frozen=True)
class IntelligentGains:
    KP: float
    KI: float = 0.0
    KD: float = 0.0

    def is_hurwitz(self, nu: int) -> bool:
        """Whether the closed-loop error polynomial of this controller is stable."""
        if nu == 1:
            if self.KD != 0:
                return False
            coeffs = [1.0, self.KP] if self.KI == 0 else [1.0, self.KP, self.KI]
        elif nu == 2:
            if self.KI == 0:
                coeffs = [1.0, self.KD, self.KP]
            else:
                coeffs = [1.0, self.KD, self.KP, self.KI]
        else:
            raise ParameterError(f"nu must be 1 or 2, got {nu}")
        return is_hurwitz(coeffs)


# =============================================================================
# Intelligent Controllers
# =============================================================================

def _check_alpha(alpha: float) -> None:
    if alpha == 0:
        raise ParameterError("alpha must be non-zero")


def ip_control(F: float, yd_dot: float, e: float, KP: float, alpha: float) -> float:
    _check_alpha(alpha)
    return -(F - yd_dot + KP * e) / alpha


def ipi_control(
    F: float, yd_dot: float, e: float, e_int: float, KP: float, KI: float, alpha: float
) -> float:
    _check_alpha(alpha)
    return -(F - yd_dot + KP * e + KI * e_int) / alpha


def ipd_control(
    F: float, yd_ddot: float, e: float, e_dot: float, KP: float, KD: float, alpha: float
) -> float:
    _check_alpha(alpha)
    return -(F - yd_ddot + KP * e + KD * e_dot) / alpha


def ipid_control(
    F: float,
    yd_ddot: float,
    e: float,
    e_dot: float,
    e_int: float,
    gains: IntelligentGains,
    alpha: float,
) -> float:
    _check_alpha(alpha)
    return -(
        F - yd_ddot + gains.KP * e + gains.KI * e_int + gains.KD * e_dot
    ) / alpha


# =============================================================================
# Ultra-Local Model
# =============================================================================

class UltraLocalModel:
    """y^(nu) = F + alpha u with F re-estimated from a sliding window."""

    def __init__(self, config: EstimatorConfig, period: float):
        self.estimator = FEstimator(config, period)

    @property
    def nu(self) -> int:
        return self.estimator.config.nu

    @property
    def alpha(self) -> float:
        return self.estimator.config.alpha

    @property
    def F_est(self) -> float | None:
        return self.estimator.value

    @property
    def is_warm(self) -> bool:
        return self.estimator.is_warm

    def observe(self, y: float, u_applied: float, t: float) -> float | None:
        """Feed y(t) and the input that was held over the step ending at t."""
        return self.estimator.push(y, u_applied, t)


# =============================================================================
# Vehicle Controllers
# =============================================================================

@dataclass(frozen=True)
class MfcFlatConfig:
    """Two iPIs on (Vx, y2) ([mfc_flat] config section)."""
    alpha1: float = DEFAULT_ALPHA_TORQUE
    kp1: float = 4.0
    ki1: float = 4.0
    alpha2: float = DEFAULT_ALPHA_Y2
    kp2: float = 6.0
    ki2: float = 9.0
    span: float = DEFAULT_SPAN
    initial_torque: float = 0.0
    initial_steer: float = 0.0

    def __post_init__(self):
        for channel, gains in (("1", self.gains1), ("2", self.gains2)):
            if not gains.is_hurwitz(1):
                raise ParameterError(f"iPI gains of channel {channel} are not stable")
        EstimatorConfig(self.span, self.alpha1, 1)
        EstimatorConfig(self.span, self.alpha2, 1)

    @property
    def gains1(self) -> IntelligentGains:
        return IntelligentGains(KP=self.kp1, KI=self.ki1)

    @property
    def gains2(self) -> IntelligentGains:
        return IntelligentGains(KP=self.kp2, KI=self.ki2)


@dataclass(frozen=True)
class MfcNaturalConfig:
    """iP on Vx and iPD on lateral deviation ([mfc_natural] config section)."""
    alpha1: float = DEFAULT_ALPHA_TORQUE
    kp1: float = 2.0
    alpha2: float = DEFAULT_ALPHA_DEVIATION
    kp2: float = 9.0
    kd2: float = 6.0
    span: float = DEFAULT_NATURAL_SPAN
    initial_torque: float = 0.0
    initial_steer: float = 0.0

    def __post_init__(self):
        if not IntelligentGains(KP=self.kp1).is_hurwitz(1):
            raise ParameterError(f"iP gain kp1={self.kp1} must be > 0")
        if not IntelligentGains(KP=self.kp2, KD=self.kd2).is_hurwitz(2):
            raise ParameterError("iPD gains kp2/kd2 are not stable")
        EstimatorConfig(self.span, self.alpha1, 1)
        EstimatorConfig(self.span, self.alpha2, 2)


class MfcFlatController:
    """Model-free control of the flat outputs by two SISO iPIs.

    Only m, Iz and Lf are known to this controller; they are needed to form
    y2 from measured Vy and yaw rate.
    """

    name = "mfc-flat"
    telemetry_columns = ("F1_est", "F2_est", "u1", "u2", "e1", "e2")

    def __init__(
        self,
        config: MfcFlatConfig,
        model: FlatOutputModel,
        limits: ActuatorLimits,
        period: float,
        guidance: PathGuidance | None = None,
    ):
        self.config = config
        self.model = model
        self.limits = limits
        self.period = period
        self.guidance = guidance
        self.longitudinal = UltraLocalModel(
            EstimatorConfig(config.span, config.alpha1, 1), period
        )
        self.lateral = UltraLocalModel(
            EstimatorConfig(config.span, config.alpha2, 1), period
        )
        self._int_e1 = ClampedIntegrator()
        self._int_e2 = ClampedIntegrator()
        self._last = ControlInput(config.initial_torque, config.initial_steer)
        self.saturated = False
        self.telemetry: tuple[float, ...] = (np.nan,) * 6

    def update(self, meas: Measurement, ref: ReferenceSample) -> ControlInput:
        cfg = self.config
        y1 = meas.vx
        y2 = self.model.y2(meas.vy, meas.yaw_rate)
        F1 = self.longitudinal.observe(y1, self._last.T_w, meas.t)
        F2 = self.lateral.observe(y2, self._last.delta, meas.t)

        ref1 = ref.speed
        ref2 = ref.flat_lateral
        if self.guidance is not None:
            ref2 = replace(ref2, yd=self.guidance.y2_command(ref2.yd, meas))
        e1 = y1 - ref1.yd
        e2 = y2 - ref2.yd

        if F1 is None or F2 is None:
            command = ControlInput(cfg.initial_torque, cfg.initial_steer)
            applied, torque_sat, steer_sat = self.limits.apply(command)
            self._finish(applied, torque_sat, steer_sat, np.nan, np.nan, e1, e2)
            return applied

        int1 = self._int_e1.candidate(e1, self.period)
        int2 = self._int_e2.candidate(e2, self.period)
        command = ControlInput(
            T_w=ipi_control(F1, ref1.yd_dot, e1, int1, cfg.kp1, cfg.ki1, cfg.alpha1),
            delta=ipi_control(F2, ref2.yd_dot, e2, int2, cfg.kp2, cfg.ki2, cfg.alpha2),
        )
        applied, torque_sat, steer_sat = self.limits.apply(command)
        self._int_e1.commit(int1, torque_sat)
        self._int_e2.commit(int2, steer_sat)
        self._finish(applied, torque_sat, steer_sat, F1, F2, e1, e2)
        return applied

    def _finish(self, applied, torque_sat, steer_sat, F1, F2, e1, e2) -> None:
        self._last = applied
        self.saturated = torque_sat or steer_sat
        self.telemetry = (F1, F2, applied.T_w, applied.delta, e1, e2)


class MfcNaturalController:
    """iP on speed, iPD on lateral deviation; uses no vehicle parameter."""

    name = "mfc-natural"
    telemetry_columns = ("F1_est", "F2_est", "u1", "u2", "e1", "e2")

    def __init__(self, config: MfcNaturalConfig, limits: ActuatorLimits, period: float):
        self.config = config
        self.limits = limits
        self.period = period
        self.longitudinal = UltraLocalModel(
            EstimatorConfig(config.span, config.alpha1, 1), period
        )
        self.lateral = UltraLocalModel(
            EstimatorConfig(config.span, config.alpha2, 2), period
        )
        self._deviation_rate = Differentiator(config.span, period)
        self._last = ControlInput(config.initial_torque, config.initial_steer)
        self.saturated = False
        self.telemetry: tuple[float, ...] = (np.nan,) * 6

    def update(self, meas: Measurement, ref: ReferenceSample) -> ControlInput:
        cfg = self.config
        y1 = meas.vx
        y2 = meas.lateral_deviation
        F1 = self.longitudinal.observe(y1, self._last.T_w, meas.t)
        F2 = self.lateral.observe(y2, self._last.delta, meas.t)
        y2_rate = self._deviation_rate.push(y2, meas.t)
        ref1 = ref.speed
        e1 = y1 - ref1.yd
        e2 = y2 - ON_PATH.yd

        if F1 is None or F2 is None or y2_rate is None:
            command = ControlInput(cfg.initial_torque, cfg.initial_steer)
            F1 = F2 = np.nan
        else:
            command = ControlInput(
                T_w=ip_control(F1, ref1.yd_dot, e1, cfg.kp1, cfg.alpha1),
                delta=ipd_control(
                    F2, ON_PATH.yd_ddot, e2, y2_rate - ON_PATH.yd_dot,
                    cfg.kp2, cfg.kd2, cfg.alpha2,
                ),
            )
        applied, torque_sat, steer_sat = self.limits.apply(command)
        self._last = applied
        self.saturated = torque_sat or steer_sat
        self.telemetry = (F1, F2, applied.T_w, applied.delta, e1, e2)
        return applied
