"""Normalization and windowing that turn traces into estimator input frames.

Raw (V, I, T) samples are mapped per channel to [0, 1] with fitted min/max
bounds, clamped; all arithmetic is 64-bit IEEE 754 because faults are
injected into the normalized bit patterns.  Windows are non-overlapping by
default: one N-step frame block per prediction, ending at steps N, 2N, ...
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .battery import DischargeTrace, SensorSample
from .faults import INPUT_CHANNELS, Channel


class DegenerateChannelError(ValueError):
    """A channel's fitted min and max coincide."""


class TraceTooShortError(ValueError):
    """Trace shorter than one window."""


@dataclass(frozen=True)
class NormalizationBounds:
    """Per-channel (V, I, T) physical-unit min/max used for scaling."""

    minimum: np.ndarray
    maximum: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "minimum", np.asarray(self.minimum, dtype=np.float64))
        object.__setattr__(self, "maximum", np.asarray(self.maximum, dtype=np.float64))
        if self.minimum.shape != (INPUT_CHANNELS,) or self.maximum.shape != (INPUT_CHANNELS,):
            raise ValueError("bounds must have one (min, max) pair per channel")
        for channel in Channel:
            lo = self.minimum[channel.value]
            hi = self.maximum[channel.value]
            if not np.isfinite(lo) or not np.isfinite(hi):
                raise ValueError(f"non-finite bounds for {channel.name}")
            if hi <= lo:
                raise DegenerateChannelError(
                    f"channel {channel.name} has degenerate bounds [{lo}, {hi}]"
                )

    def channel_range(self, channel: Channel) -> tuple[float, float]:
        return float(self.minimum[channel.value]), float(self.maximum[channel.value])


@dataclass(frozen=True)
class InputWindow:
    """N x 3 block of normalized frames feeding one prediction.

    ``end_step`` is the number of source samples consumed: the window covers
    trace samples [end_step - N, end_step) and its prediction corresponds to
    soc_truth[end_step - 1].
    """

    frames: np.ndarray
    end_step: int


def _raw_channels(trace: DischargeTrace) -> np.ndarray:
    return np.column_stack([trace.voltage_V, trace.current_A, trace.temperature_C])


def fit_bounds(traces) -> NormalizationBounds:
    """Element-wise min/max of (V, I, T) over every sample of every trace."""
    traces = list(traces)
    if not traces:
        raise ValueError("no traces to fit bounds on")
    stacked = np.vstack([_raw_channels(t) for t in traces])
    return NormalizationBounds(stacked.min(axis=0), stacked.max(axis=0))


def normalize(sample: SensorSample, bounds: NormalizationBounds) -> np.ndarray:
    """One raw sample to a clamped [0, 1]^3 vector."""
    raw = np.array([sample.voltage_V, sample.current_A, sample.temperature_C])
    return np.clip((raw - bounds.minimum) / (bounds.maximum - bounds.minimum), 0.0, 1.0)


def normalize_trace(trace: DischargeTrace, bounds: NormalizationBounds) -> np.ndarray:
    """Whole trace to an (n, 3) array of normalized frames."""
    raw = _raw_channels(trace)
    return np.clip((raw - bounds.minimum) / (bounds.maximum - bounds.minimum), 0.0, 1.0)


def denormalize(values, bounds: NormalizationBounds) -> np.ndarray:
    """Inverse scaling of normalized vectors or frame arrays back to raw units."""
    values = np.asarray(values, dtype=np.float64)
    return values * (bounds.maximum - bounds.minimum) + bounds.minimum


def windows_from_frames(frames: np.ndarray, window_length: int, stride: int | None = None) -> list[InputWindow]:
    """Cut a frame series into windows ending at ``window_length``, then every
    ``stride`` steps (default: non-overlapping, stride = window length).

    The trailing remainder shorter than a stride is dropped.  A stride below
    the window length gives overlapping windows, which is only meant for
    training-data augmentation; inference follows the one-prediction-every-
    Nth-step schedule.
    """
    if window_length < 1:
        raise ValueError("window_length must be >= 1")
    stride = window_length if stride is None else stride
    if stride < 1:
        raise ValueError("stride must be >= 1")
    n = len(frames)
    if n < window_length:
        raise TraceTooShortError(
            f"trace of {n} steps is shorter than one {window_length}-step window"
        )
    return [
        InputWindow(frames=frames[end - window_length : end], end_step=end)
        for end in range(window_length, n + 1, stride)
    ]


def make_windows(
    trace: DischargeTrace,
    bounds: NormalizationBounds,
    window_length: int,
    stride: int | None = None,
) -> list[InputWindow]:
    """Normalize a trace and cut it into windows; the default stride gives the
    non-overlapping prediction schedule, a smaller one is for training only."""
    return windows_from_frames(normalize_trace(trace, bounds), window_length, stride)


def window_targets(trace: DischargeTrace, windows) -> np.ndarray:
    """Ground-truth SOC at each window's final sample."""
    return np.array([trace.soc_truth[w.end_step - 1] for w in windows])
