"""Safety cage around the SOC estimator.

A simple high-integrity monitor that can inhibit the estimator's output and
substitute a trustworthy fallback.  Four detectors cover the classic sensor
failure modes:

  OutOfRange    raw voltage or temperature outside the physical range,
                checked on every raw sample (latency: one sample)
  StuckInRange  estimate frozen within a valid band while the battery is
                under load (a flat estimate at rest is legitimate)
  Oscillation   estimate swinging back and forth well above noise level
  Offset        estimate disagreeing with an independent coulomb-counting
                reference by more than a tolerance

The monitor never looks inside the estimator: it sees raw sensor samples,
emitted SOC estimates, and its own coulomb reference, nothing else.  Stuck
and oscillation windows advance per estimate *event*, not per raw sample;
the emitted estimate is a sample-and-hold signal, so judging flatness at
sample rate would condemn every healthy run.

Arbitration emits the AI estimate when all detectors pass, otherwise the
coulomb fallback (or the previously emitted value when no fallback exists).
An inhibited AI value is never exposed.
"""

from __future__ import annotations

import csv
import enum
from collections import deque
from dataclasses import dataclass

import numpy as np

from .battery import BatteryConfig, CoulombCounter, SensorSample
from .lstm import Prediction

VERDICT_CSV_HEADER = ["step", "status", "detected", "soc_ai", "soc_out", "source"]


class FailureMode(enum.Enum):
    OUT_OF_RANGE = "OutOfRange"
    OFFSET = "Offset"
    STUCK_IN_RANGE = "StuckInRange"
    OSCILLATION = "Oscillation"


class Status(enum.Enum):
    PASS = "Pass"
    INHIBIT = "Inhibit"


class Source(enum.Enum):
    AI_ESTIMATOR = "AiEstimator"
    COULOMB_FALLBACK = "CoulombFallback"
    HOLD_LAST = "HoldLast"


@dataclass(frozen=True)
class MonitorConfig:
    voltage_range_V: tuple[float, float] = (2.5, 4.3)
    temperature_range_C: tuple[float, float] = (-20.0, 60.0)
    soc_rate_limit_per_s: float = 1e-3  # max plausible |dSOC/dt|
    stuck_window: int = 50  # estimate events
    stuck_epsilon: float = 1e-4
    osc_window: int = 16  # estimate events
    osc_signchange_threshold: int = 8
    correlation_tolerance: float = 0.05
    activity_floor_A: float = 0.05  # below this the battery counts as resting

    def __post_init__(self) -> None:
        for name in ("voltage_range_V", "temperature_range_C"):
            lo, hi = getattr(self, name)
            if not lo < hi:
                raise ValueError(f"{name} is degenerate: ({lo}, {hi})")
        if self.soc_rate_limit_per_s <= 0:
            raise ValueError("soc_rate_limit_per_s must be positive")
        if self.stuck_window < 2:
            raise ValueError("stuck_window must be >= 2")
        if self.stuck_epsilon <= 0:
            raise ValueError("stuck_epsilon must be positive")
        if self.osc_window < 4:
            raise ValueError("osc_window must be >= 4")
        if self.osc_signchange_threshold < 1:
            raise ValueError("osc_signchange_threshold must be >= 1")
        if self.correlation_tolerance <= 0:
            raise ValueError("correlation_tolerance must be positive")
        if self.activity_floor_A < 0:
            raise ValueError("activity_floor_A must be >= 0")


@dataclass(frozen=True)
class MonitorVerdict:
    step: int
    status: Status
    detected: frozenset[FailureMode]
    soc_ai: float
    soc_out: float
    source: Source

    def __post_init__(self) -> None:
        if (self.status is Status.INHIBIT) != bool(self.detected):
            raise ValueError("status must be Inhibit exactly when detections exist")
        if not 0.0 <= self.soc_out <= 1.0:
            raise ValueError(f"soc_out {self.soc_out} outside [0, 1]")


def _in_closed_range(value: float, bounds: tuple[float, float]) -> bool:
    # boundary values pass; a non-finite value never does
    return bounds[0] <= value <= bounds[1]


def check_range(sample: SensorSample, config: MonitorConfig) -> FailureMode | None:
    """OutOfRange iff raw voltage or temperature leaves its closed interval."""
    if not _in_closed_range(sample.voltage_V, config.voltage_range_V):
        return FailureMode.OUT_OF_RANGE
    if not _in_closed_range(sample.temperature_C, config.temperature_range_C):
        return FailureMode.OUT_OF_RANGE
    return None


def check_stuck(values, currents, config: MonitorConfig) -> FailureMode | None:
    """StuckInRange iff the estimate window is flat while the battery works.

    `values` are the last stuck_window SOC estimates; `currents` are current
    magnitudes representative of the same span (per sample or per estimate
    event).  A flat estimate with mean |I| at or below the activity floor is
    legitimate rest, not a defect.
    """
    values = np.asarray(values, dtype=np.float64)
    if len(values) < config.stuck_window:
        raise ValueError(
            f"window too short: {len(values)} < stuck_window {config.stuck_window}"
        )
    activity = float(np.mean(np.abs(np.asarray(currents, dtype=np.float64))))
    if activity <= config.activity_floor_A:
        return None
    if float(np.max(values) - np.min(values)) < config.stuck_epsilon:
        return FailureMode.STUCK_IN_RANGE
    return None


def check_oscillation(values, config: MonitorConfig) -> FailureMode | None:
    """Oscillation iff first differences change sign often enough and the
    peak-to-peak amplitude clears the noise guard."""
    values = np.asarray(values, dtype=np.float64)
    if len(values) < config.osc_window:
        raise ValueError(
            f"window too short: {len(values)} < osc_window {config.osc_window}"
        )
    if float(np.max(values) - np.min(values)) <= config.stuck_epsilon:
        return None
    signs = np.sign(np.diff(values))
    signs = signs[signs != 0.0]
    changes = int(np.sum(signs[1:] != signs[:-1]))
    if changes >= config.osc_signchange_threshold:
        return FailureMode.OSCILLATION
    return None


def check_rationality(
    soc_est: float, soc_coulomb_reference: float, config: MonitorConfig
) -> FailureMode | None:
    """Offset iff the estimate strays from the coulomb reference by more than
    the tolerance.  A non-finite estimate is maximally offset by definition;
    NaN must not slip through a comparison."""
    if not np.isfinite(soc_est):
        return FailureMode.OFFSET
    if abs(soc_est - soc_coulomb_reference) > config.correlation_tolerance:
        return FailureMode.OFFSET
    return None


def arbitrate(
    step: int,
    prediction: Prediction,
    detections,
    config: MonitorConfig,
    fallback_soc: float | None,
    held_soc: float | None = None,
) -> MonitorVerdict:
    """Pass the AI estimate through, or inhibit and substitute.

    Fallback priority: coulomb reference, then the previously emitted value.
    With neither available an inhibited verdict reports SOC 0, the
    conservative assumption against overcharge.  An inhibited verdict never
    carries the AI value (unless fallback and AI coincide numerically).
    """
    detections = frozenset(detections)
    soc_ai = prediction.soc_est
    if not detections:
        return MonitorVerdict(
            step, Status.PASS, detections, soc_ai, soc_ai, Source.AI_ESTIMATOR
        )
    if fallback_soc is not None:
        out, source = float(np.clip(fallback_soc, 0.0, 1.0)), Source.COULOMB_FALLBACK
    elif held_soc is not None:
        out, source = float(np.clip(held_soc, 0.0, 1.0)), Source.HOLD_LAST
    else:
        out, source = 0.0, Source.HOLD_LAST
    return MonitorVerdict(step, Status.INHIBIT, detections, soc_ai, out, source)


class SafetyMonitor:
    """Sequential safety cage for one battery stream.

    Feed every raw sample through `observe_sample` (in step order) and every
    emitted estimate through `observe_estimate`; the monitor keeps its own
    coulomb-counting reference, detection windows, and hold-last memory.
    One instance per stream; instances are independent.
    """

    def __init__(
        self,
        config: MonitorConfig,
        battery_config: BatteryConfig,
        initial_soc: float = 1.0,
    ) -> None:
        self.config = config
        self.reference = CoulombCounter(initial_soc, battery_config)
        self.verdicts: list[MonitorVerdict] = []
        self.first_detection: dict[FailureMode, int] = {}
        self._est_window: deque[float] = deque(maxlen=config.stuck_window)
        self._activity_window: deque[float] = deque(maxlen=config.stuck_window)
        self._osc_window: deque[float] = deque(maxlen=config.osc_window)
        self._span_abs_current = 0.0
        self._span_samples = 0
        self._range_pending = False
        self._held: float | None = None

    def observe_sample(self, step: int, sample: SensorSample) -> None:
        """Ingest one raw sensor sample (called once per step, in order)."""
        if check_range(sample, self.config) is not None:
            self._range_pending = True
            self.first_detection.setdefault(FailureMode.OUT_OF_RANGE, step)
        if np.isfinite(sample.current_A):
            self.reference.update(sample.current_A)
            self._span_abs_current += abs(sample.current_A)
        self._span_samples += 1

    def observe_estimate(self, step: int, prediction: Prediction) -> MonitorVerdict:
        """Ingest one emitted SOC estimate and arbitrate."""
        cfg = self.config
        est = prediction.soc_est
        activity = (
            self._span_abs_current / self._span_samples if self._span_samples else 0.0
        )
        self._span_abs_current = 0.0
        self._span_samples = 0
        self._est_window.append(est)
        self._activity_window.append(activity)
        self._osc_window.append(est)

        detections = set()
        if self._range_pending:
            detections.add(FailureMode.OUT_OF_RANGE)
            self._range_pending = False
        if len(self._est_window) == cfg.stuck_window:
            hit = check_stuck(self._est_window, self._activity_window, cfg)
            if hit is not None:
                detections.add(hit)
        if len(self._osc_window) == cfg.osc_window:
            hit = check_oscillation(self._osc_window, cfg)
            if hit is not None:
                detections.add(hit)
        hit = check_rationality(est, self.reference.soc, cfg)
        if hit is not None:
            detections.add(hit)

        for mode in detections:
            self.first_detection.setdefault(mode, step)
        verdict = arbitrate(
            step, prediction, detections, cfg, self.reference.soc, self._held
        )
        self._held = verdict.soc_out
        self.verdicts.append(verdict)
        return verdict

    @property
    def detected_any(self) -> bool:
        return bool(self.first_detection)

    def inhibited_fraction(self) -> float:
        if not self.verdicts:
            return 0.0
        n = sum(1 for v in self.verdicts if v.status is Status.INHIBIT)
        return n / len(self.verdicts)

    def save_verdicts_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(VERDICT_CSV_HEADER)
            for v in self.verdicts:
                detected = "+".join(sorted(m.value for m in v.detected))
                writer.writerow(
                    [
                        v.step,
                        v.status.value,
                        detected,
                        repr(float(v.soc_ai)),
                        repr(float(v.soc_out)),
                        v.source.value,
                    ]
                )
