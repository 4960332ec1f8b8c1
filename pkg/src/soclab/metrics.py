"""Deviation metrics between a baseline run and a faulted run.

Two levels of comparison, both root-mean-squared:

  rmse_pred  over paired clamped SOC estimates (what the system emits),
  rmse_data  over the corrupted vs original normalized values of the one
             channel the fault touched (the others are identical by
             construction).

Per-prediction absolute deviations are kept as (soc_truth, |delta|) pairs so
impact can be plotted against the true charge level across the cycle.

All comparisons are baseline-model-output vs faulted-model-output; distance
from ground truth is a separate concern reported elsewhere.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .battery import DischargeTrace
from .faults import CorruptedSeries, FaultSpec
from .lstm import Prediction


class ScheduleMismatchError(ValueError):
    """The two runs did not predict at the same steps."""


@dataclass(frozen=True)
class DeviationReport:
    fault: FaultSpec
    rmse_pred: float
    rmse_data: float
    abs_dev: tuple[tuple[float, float], ...]  # (soc_truth at end_step, |delta|)
    max_abs_dev: float
    n_predictions: int


def rmse(a, b) -> float:
    """sqrt(mean((a - b)^2)) over two equal-length non-empty sequences."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    if a.size == 0:
        raise ValueError("rmse of empty sequences is undefined")
    return float(np.sqrt(np.mean((a - b) ** 2)))


def compare_runs(
    baseline: list[Prediction],
    faulty: list[Prediction],
    trace: DischargeTrace,
    corruption: CorruptedSeries,
) -> DeviationReport:
    """Pair two prediction runs over the same window schedule into a report.

    Both runs must come from the same trace and schedule; deviations are
    keyed by the ground-truth SOC at each prediction's end step.
    """
    if len(baseline) != len(faulty) or any(
        p.end_step != q.end_step for p, q in zip(baseline, faulty)
    ):
        raise ScheduleMismatchError(
            f"prediction schedules differ: {[p.end_step for p in baseline]} "
            f"vs {[q.end_step for q in faulty]}"
        )
    if not baseline:
        raise ScheduleMismatchError("no predictions to compare")

    base_est = np.array([p.soc_est for p in baseline])
    fault_est = np.array([q.soc_est for q in faulty])
    truth = np.array([trace.soc_truth[p.end_step - 1] for p in baseline])

    # a non-finite estimate counts as infinitely deviant, never NaN
    with np.errstate(invalid="ignore"):
        deltas = np.abs(fault_est - base_est)
    deltas[~np.isfinite(deltas)] = np.inf
    rmse_pred = rmse(base_est, fault_est) if np.all(np.isfinite(deltas)) else np.inf

    ch = corruption.fault.channel.value
    col_orig = corruption.original_frames[:, ch]
    col_fault = corruption.corrupted_frames[:, ch]
    if np.all(np.isfinite(col_fault)):
        with np.errstate(over="ignore"):
            rmse_data = rmse(col_orig, col_fault)  # may still overflow to inf
    else:
        rmse_data = float("inf")

    return DeviationReport(
        fault=corruption.fault,
        rmse_pred=float(rmse_pred),
        rmse_data=float(rmse_data),
        abs_dev=tuple((float(t), float(d)) for t, d in zip(truth, deltas)),
        max_abs_dev=float(np.max(deltas)),
        n_predictions=len(baseline),
    )
