"""End-to-end experiment orchestration.

A campaign takes one trained model and one discharge trace, runs baseline
inference on the clean normalized frames, then fans out over a list of fault
specs: corrupt the frames, re-infer, compare against baseline, and (when a
monitor config is given) replay the safety cage over the raw trace and the
faulted estimate stream.  Every spec yields exactly one result row in sweep
order; an experiment that blows up becomes a flagged row, never a dropped
one.

Faults are applied to the normalized frames the estimator consumes.  The
monitor watches the raw sensor trace, which stays clean — its view of a
faulted run differs only through the estimates it arbitrates, so detections
come from the estimate-side checks.

Everything is deterministic given the inputs; parallel fan-out cannot change
results because experiments are independent and results are gathered in
spec order.
"""

from __future__ import annotations

import csv
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .battery import BatteryConfig, DischargeTrace, synthesize_cycle
from .dataset import make_windows, fit_bounds, normalize_trace, window_targets, windows_from_frames
from .faults import FaultSpec, bit_region, corrupt_series
from .lstm import (
    LstmModel,
    Prediction,
    TrainConfig,
    init_model,
    predict_windows,
    train,
)
from .metrics import DeviationReport, compare_runs, rmse
from .monitor import MonitorConfig, SafetyMonitor

CAMPAIGN_CSV_HEADER = [
    "fault",
    "channel",
    "bit",
    "mode",
    "region",
    "rmse_pred",
    "rmse_data",
    "max_abs_dev",
    "n_predictions",
    "monitor_detected",
    "first_detect_step",
    "inhibited_fraction",
    "exception",
]
ABSDEV_CSV_HEADER = ["fault", "channel", "bit", "mode", "soc_truth", "abs_dev"]


class EmptyCampaignError(ValueError):
    """No fault specs to run or no results to report."""


@dataclass(frozen=True)
class MonitorSummary:
    detected: bool
    first_detect_step: int | None
    modes: tuple[str, ...]  # sorted failure-mode names
    inhibited_fraction: float


@dataclass(frozen=True)
class ExperimentResult:
    report: DeviationReport
    monitor: MonitorSummary | None
    exception: bool
    error: str | None = None


@dataclass(frozen=True)
class BaselineResult:
    predictions: list[Prediction]
    targets: np.ndarray  # ground-truth SOC at each prediction's end step
    rmse_vs_truth: float


@dataclass
class CampaignResult:
    specs: list[FaultSpec]
    results: list[ExperimentResult]  # one per spec, same order
    baseline: BaselineResult
    trace: DischargeTrace


# ── default dataset and model ─────────────────────────────────────────────


def build_default_dataset(
    battery_config: BatteryConfig | None = None, seed: int = 42, n_train: int = 6
) -> tuple[list[DischargeTrace], DischargeTrace]:
    """Synthesize the default cycles: n_train for training plus one held-out
    evaluation cycle, each from an independent child of the seed."""
    cfg = battery_config or BatteryConfig()
    children = np.random.SeedSequence(seed).spawn(n_train + 1)
    cycles = [synthesize_cycle(cfg, np.random.default_rng(s)) for s in children]
    return cycles[:-1], cycles[-1]


def train_default_model(
    battery_config: BatteryConfig | None = None,
    seed: int = 42,
    hidden_size: int = 16,
    window_length: int = 300,
    train_stride: int = 50,
    train_config: TrainConfig | None = None,
) -> tuple[LstmModel, list[float], float]:
    """Whole default training pipeline: synthesize cycles, fit bounds, window
    with an overlapping training stride, fit, score on the held-out cycle.

    Returns (model, per-epoch loss history, holdout RMSE vs ground truth).
    """
    train_cycles, holdout = build_default_dataset(battery_config, seed)
    bounds = fit_bounds(train_cycles)
    windows, targets = [], []
    for cycle in train_cycles:
        w = make_windows(cycle, bounds, window_length, stride=train_stride)
        windows.extend(w)
        targets.extend(window_targets(cycle, w))
    model = init_model(hidden_size, window_length, bounds, seed=seed)
    model, history = train(
        model, windows, targets, train_config or TrainConfig(seed=seed)
    )

    hold_windows = make_windows(holdout, bounds, window_length)
    hold_targets = window_targets(holdout, hold_windows)
    est = [p.soc_est for p in predict_windows(model, hold_windows)]
    return model, history, rmse(est, hold_targets)


# ── monitored replay ──────────────────────────────────────────────────────


def run_monitored(
    trace: DischargeTrace,
    predictions: list[Prediction],
    monitor_config: MonitorConfig,
    initial_soc: float = 1.0,
) -> SafetyMonitor:
    """Replay a finished run through a fresh safety cage: every raw sample in
    order, with each estimate arbitrated right after its window's last sample."""
    monitor = SafetyMonitor(monitor_config, trace.config, initial_soc)
    by_end = {p.end_step: p for p in predictions}
    for step, sample in enumerate(trace.samples):
        monitor.observe_sample(step, sample)
        pred = by_end.get(step + 1)
        if pred is not None:
            monitor.observe_estimate(step + 1, pred)
    return monitor


def _summarize(monitor: SafetyMonitor) -> MonitorSummary:
    first = min(monitor.first_detection.values()) if monitor.first_detection else None
    return MonitorSummary(
        detected=monitor.detected_any,
        first_detect_step=first,
        modes=tuple(sorted(m.value for m in monitor.first_detection)),
        inhibited_fraction=monitor.inhibited_fraction(),
    )


# ── baseline and experiments ──────────────────────────────────────────────


def run_baseline(model: LstmModel, trace: DischargeTrace) -> BaselineResult:
    """Clean-trace inference plus an error-vs-ground-truth summary."""
    frames = normalize_trace(trace, model.bounds)
    windows = windows_from_frames(frames, model.window_length)
    predictions = predict_windows(model, windows)
    targets = window_targets(trace, windows)
    est = [p.soc_est for p in predictions]
    return BaselineResult(predictions, targets, rmse(est, targets))


def _failed_result(spec: FaultSpec, exc: Exception) -> ExperimentResult:
    report = DeviationReport(
        fault=spec,
        rmse_pred=float("inf"),
        rmse_data=float("inf"),
        abs_dev=(),
        max_abs_dev=float("inf"),
        n_predictions=0,
    )
    return ExperimentResult(
        report, None, exception=True, error=f"{type(exc).__name__}: {exc}"
    )


def run_experiment(
    model: LstmModel,
    trace: DischargeTrace,
    frames: np.ndarray,
    baseline_predictions: list[Prediction],
    spec: FaultSpec,
    monitor_config: MonitorConfig | None = None,
    initial_soc: float = 1.0,
) -> ExperimentResult:
    """One fault: corrupt the normalized frames, re-infer, compare, monitor.

    Any exception is captured as a flagged result so a sweep never loses rows.
    """
    try:
        corruption = corrupt_series(frames, spec)
        windows = windows_from_frames(corruption.corrupted_frames, model.window_length)
        predictions = predict_windows(model, windows)
        report = compare_runs(baseline_predictions, predictions, trace, corruption)
        summary = None
        if monitor_config is not None:
            summary = _summarize(
                run_monitored(trace, predictions, monitor_config, initial_soc)
            )
        overflowed = not all(
            np.isfinite(v) for v in (report.rmse_pred, report.rmse_data, report.max_abs_dev)
        )
        return ExperimentResult(report, summary, exception=overflowed)
    except Exception as exc:  # a lost experiment must still produce its row
        return _failed_result(spec, exc)


_WORKER: dict = {}


def _init_worker(model, trace, frames, baseline_predictions, monitor_config, initial_soc):
    _WORKER.update(
        model=model,
        trace=trace,
        frames=frames,
        baseline_predictions=baseline_predictions,
        monitor_config=monitor_config,
        initial_soc=initial_soc,
    )


def _run_in_worker(spec: FaultSpec) -> ExperimentResult:
    w = _WORKER
    return run_experiment(
        w["model"],
        w["trace"],
        w["frames"],
        w["baseline_predictions"],
        spec,
        w["monitor_config"],
        w["initial_soc"],
    )


def run_campaign(
    model: LstmModel,
    trace: DischargeTrace,
    specs: list[FaultSpec],
    monitor_config: MonitorConfig | None = None,
    jobs: int = 1,
    initial_soc: float = 1.0,
) -> CampaignResult:
    """Baseline once, then one experiment per spec, results in spec order."""
    specs = list(specs)
    if not specs:
        raise EmptyCampaignError("no fault specs to run")
    baseline = run_baseline(model, trace)
    frames = normalize_trace(trace, model.bounds)

    if jobs <= 1:
        results = [
            run_experiment(
                model, trace, frames, baseline.predictions, spec, monitor_config, initial_soc
            )
            for spec in specs
        ]
    else:
        init_args = (model, trace, frames, baseline.predictions, monitor_config, initial_soc)
        with ProcessPoolExecutor(
            max_workers=jobs, initializer=_init_worker, initargs=init_args
        ) as pool:
            chunk = max(1, len(specs) // (4 * jobs))
            results = list(pool.map(_run_in_worker, specs, chunksize=chunk))
    return CampaignResult(specs, results, baseline, trace)


# ── reports ───────────────────────────────────────────────────────────────


def _fmt(value: float) -> str:
    # shortest round-trip decimal; infinities become the plain string inf
    return repr(float(value))


def _campaign_rows(result: CampaignResult) -> list[dict]:
    rows = []
    for res in result.results:
        rep = res.report
        spec = rep.fault
        mon = res.monitor
        rows.append(
            {
                "fault": spec.token(),
                "channel": spec.channel.letter,
                "bit": spec.bit_index,
                "mode": spec.mode.value,
                "region": bit_region(spec.bit_index),
                "rmse_pred": rep.rmse_pred,
                "rmse_data": rep.rmse_data,
                "max_abs_dev": rep.max_abs_dev,
                "n_predictions": rep.n_predictions,
                "monitor_detected": None if mon is None else mon.detected,
                "first_detect_step": None if mon is None else mon.first_detect_step,
                "inhibited_fraction": None if mon is None else mon.inhibited_fraction,
                "exception": res.exception,
            }
        )
    return rows


def _absdev_rows(result: CampaignResult) -> list[dict]:
    rows = []
    for res in result.results:
        rep = res.report
        spec = rep.fault
        for soc_truth, dev in rep.abs_dev:
            rows.append(
                {
                    "fault": spec.token(),
                    "channel": spec.channel.letter,
                    "bit": spec.bit_index,
                    "mode": spec.mode.value,
                    "soc_truth": soc_truth,
                    "abs_dev": dev,
                }
            )
    return rows


def emit_reports(
    result: CampaignResult, outdir, render_plots: bool = True
) -> dict[str, Path]:
    """Write campaign.csv, absdev.csv, and the three SVG figures.

    The CSVs are byte-deterministic for identical results; figures are
    rendered from the same row data the CSVs carry.
    """
    if not result.results:
        raise EmptyCampaignError("no results to report")
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    rows = _campaign_rows(result)
    absdev = _absdev_rows(result)

    paths = {"campaign": outdir / "campaign.csv", "absdev": outdir / "absdev.csv"}
    with open(paths["campaign"], "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CAMPAIGN_CSV_HEADER)
        for r in rows:
            writer.writerow(
                [
                    r["fault"],
                    r["channel"],
                    r["bit"],
                    r["mode"],
                    r["region"],
                    _fmt(r["rmse_pred"]),
                    _fmt(r["rmse_data"]),
                    _fmt(r["max_abs_dev"]),
                    r["n_predictions"],
                    _yn(r["monitor_detected"]),
                    "" if r["first_detect_step"] is None else r["first_detect_step"],
                    "" if r["inhibited_fraction"] is None else _fmt(r["inhibited_fraction"]),
                    _yn(r["exception"]),
                ]
            )
    with open(paths["absdev"], "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(ABSDEV_CSV_HEADER)
        for r in absdev:
            writer.writerow(
                [
                    r["fault"],
                    r["channel"],
                    r["bit"],
                    r["mode"],
                    _fmt(r["soc_truth"]),
                    _fmt(r["abs_dev"]),
                ]
            )

    if render_plots:
        from .plots import render_all

        paths.update(render_all(rows, absdev, outdir))
    return paths


def _yn(flag: bool | None) -> str:
    if flag is None:
        return ""
    return "yes" if flag else "no"


def load_campaign_csv(path) -> list[dict]:
    """Read campaign.csv back into typed rows (inverse of emit_reports)."""
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != CAMPAIGN_CSV_HEADER:
            raise ValueError(f"unexpected campaign CSV header: {reader.fieldnames}")
        for raw in reader:
            rows.append(
                {
                    "fault": raw["fault"],
                    "channel": raw["channel"],
                    "bit": int(raw["bit"]),
                    "mode": raw["mode"],
                    "region": raw["region"],
                    "rmse_pred": float(raw["rmse_pred"]),
                    "rmse_data": float(raw["rmse_data"]),
                    "max_abs_dev": float(raw["max_abs_dev"]),
                    "n_predictions": int(raw["n_predictions"]),
                    "monitor_detected": _parse_yn(raw["monitor_detected"]),
                    "first_detect_step": (
                        None if raw["first_detect_step"] == "" else int(raw["first_detect_step"])
                    ),
                    "inhibited_fraction": (
                        None if raw["inhibited_fraction"] == "" else float(raw["inhibited_fraction"])
                    ),
                    "exception": _parse_yn(raw["exception"]) or False,
                }
            )
    return rows


def load_absdev_csv(path) -> list[dict]:
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ABSDEV_CSV_HEADER:
            raise ValueError(f"unexpected absdev CSV header: {reader.fieldnames}")
        for raw in reader:
            rows.append(
                {
                    "fault": raw["fault"],
                    "channel": raw["channel"],
                    "bit": int(raw["bit"]),
                    "mode": raw["mode"],
                    "soc_truth": float(raw["soc_truth"]),
                    "abs_dev": float(raw["abs_dev"]),
                }
            )
    return rows


def _parse_yn(token: str) -> bool | None:
    if token == "":
        return None
    if token == "yes":
        return True
    if token == "no":
        return False
    raise ValueError(f"expected yes/no/empty, got {token!r}")
