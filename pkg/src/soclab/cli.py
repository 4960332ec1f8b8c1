"""Command line front end.

Subcommands:

  simulate   synthesize the default evaluation cycle and write it as CSV
  train      train the default model and write the model file
  baseline   clean-trace inference, error vs ground truth, optional monitor
  campaign   the full fault sweep with CSV tables and SVG figures
  report     re-render the figures from an existing campaign.csv/absdev.csv

Every flag mirrors a key in the optional JSON config file (--config); a
flag given on the command line wins over the file.  Structured settings
(battery model, training hyperparameters, monitor thresholds) live in the
config file under "battery", "train", and "monitor_config".

Exit codes: 0 success, 1 usage error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from .battery import BatteryConfig, OcvCurve, load_trace_csv, save_trace_csv
from .campaign import (
    build_default_dataset,
    emit_reports,
    load_absdev_csv,
    load_campaign_csv,
    run_baseline,
    run_campaign,
    run_monitored,
    train_default_model,
)
from .faults import Channel, FaultMode, FaultSpec
from .lstm import TrainConfig, load_model, save_model
from .monitor import MonitorConfig

BASELINE_CSV_HEADER = ["end_step", "t_s", "soc_truth", "soc_est", "abs_err"]


class UsageError(ValueError):
    """Command line is incomplete or inconsistent (exit code 1)."""


class _Parser(argparse.ArgumentParser):
    """argparse flavor whose usage errors exit 1 instead of 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


# ── flag/config value parsing ─────────────────────────────────────────────


def parse_channels(text: str) -> list[Channel]:
    channels = [Channel.from_letter(item) for item in text.split(",") if item.strip()]
    if not channels:
        raise ValueError("no channels given")
    seen = []
    for ch in channels:
        if ch not in seen:
            seen.append(ch)
    return seen


def parse_bits(text: str) -> list[int]:
    """Bit selections like '11', '3..64', or '3..12,40..64'."""
    bits: set[int] = set()
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        lo, sep, hi = item.partition("..")
        try:
            first = int(lo)
            last = int(hi) if sep else first
        except ValueError:
            raise ValueError(f"bad bit selection {item!r}") from None
        if not 1 <= first <= last <= 64:
            raise ValueError(f"bit selection {item!r} outside 1..64")
        bits.update(range(first, last + 1))
    if not bits:
        raise ValueError("no bits given")
    return sorted(bits)


def parse_modes(text: str) -> list[FaultMode]:
    modes = [FaultMode.from_token(item) for item in text.split(",") if item.strip()]
    if not modes:
        raise ValueError("no fault modes given")
    seen = []
    for mode in modes:
        if mode not in seen:
            seen.append(mode)
    return seen


def parse_on_off(text: str) -> bool:
    key = text.strip().lower()
    if key not in ("on", "off"):
        raise ValueError(f"expected on or off, got {text!r}")
    return key == "on"


_CONFIG_KEYS = {
    "trace",
    "model",
    "channels",
    "bits",
    "modes",
    "monitor",
    "seed",
    "out",
    "jobs",
    "initial_soc",
    "hidden_size",
    "window_length",
    "stride",
    "battery",
    "train",
    "monitor_config",
}


def load_config(path: str | None) -> dict:
    if path is None:
        return {}
    with open(path) as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict):
        raise ValueError("config file must hold a JSON object")
    unknown = sorted(set(doc) - _CONFIG_KEYS)
    if unknown:
        raise ValueError(f"unknown config keys: {', '.join(unknown)}")
    return doc


def battery_from_config(cfg: dict) -> BatteryConfig:
    section = dict(cfg.get("battery") or {})
    points = section.pop("ocv_points", None)
    if points is not None:
        section["ocv_curve"] = OcvCurve(tuple((float(s), float(v)) for s, v in points))
    return BatteryConfig(**section)


def train_config_from(cfg: dict, seed: int) -> TrainConfig:
    section = dict(cfg.get("train") or {})
    section.setdefault("seed", seed)
    return TrainConfig(**section)


def monitor_config_from(cfg: dict) -> MonitorConfig:
    section = dict(cfg.get("monitor_config") or {})
    for key in ("voltage_range_V", "temperature_range_C"):
        if key in section:
            section[key] = tuple(section[key])
    return MonitorConfig(**section)


def _pick(flag_value, cfg: dict, key: str, default, convert=None):
    """Precedence: explicit flag, then config file, then default."""
    if flag_value is not None:
        return flag_value
    if key in cfg:
        value = cfg[key]
        return convert(value) if convert is not None else value
    return default


# ── shared loading helpers ────────────────────────────────────────────────


def _resolve_trace(args, cfg: dict, battery: BatteryConfig, seed: int):
    path = _pick(args.trace, cfg, "trace", None)
    if path is not None:
        return load_trace_csv(path, battery)
    _, holdout = build_default_dataset(battery, seed)
    return holdout


def _write_baseline_csv(path, trace, baseline) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(BASELINE_CSV_HEADER)
        for pred, truth in zip(baseline.predictions, baseline.targets):
            writer.writerow(
                [
                    pred.end_step,
                    repr(float(trace.t_s[pred.end_step - 1])),
                    repr(float(truth)),
                    repr(float(pred.soc_est)),
                    repr(abs(float(pred.soc_est) - float(truth))),
                ]
            )


# ── subcommands ───────────────────────────────────────────────────────────


def _cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    seed = _pick(args.seed, cfg, "seed", 42, int)
    battery = battery_from_config(cfg)
    out = Path(_pick(args.out, cfg, "out", "trace.csv"))
    _, holdout = build_default_dataset(battery, seed)
    save_trace_csv(holdout, out)
    hours = holdout.t_s[-1] / 3600.0
    print(f"wrote {out} ({len(holdout)} samples, {hours:.2f} h discharge)")
    return 0


def _cmd_train(args) -> int:
    cfg = load_config(args.config)
    seed = _pick(args.seed, cfg, "seed", 42, int)
    battery = battery_from_config(cfg)
    model, history, holdout_rmse = train_default_model(
        battery_config=battery,
        seed=seed,
        hidden_size=int(_pick(None, cfg, "hidden_size", 16)),
        window_length=int(_pick(None, cfg, "window_length", 300)),
        train_stride=int(_pick(None, cfg, "stride", 50)),
        train_config=train_config_from(cfg, seed),
    )
    out = Path(_pick(args.out, cfg, "out", "model.json"))
    save_model(model, out)
    print(
        f"wrote {out} (final training MSE {history[-1]:.3g}, "
        f"held-out RMSE {holdout_rmse:.5f})"
    )
    return 0


def _cmd_baseline(args) -> int:
    cfg = load_config(args.config)
    seed = _pick(args.seed, cfg, "seed", 42, int)
    battery = battery_from_config(cfg)
    model = load_model(_pick(args.model, cfg, "model", None) or _missing("--model"))
    trace = _resolve_trace(args, cfg, battery, seed)
    monitor_on = _pick(args.monitor, cfg, "monitor", True, parse_on_off)
    initial_soc = float(_pick(None, cfg, "initial_soc", 1.0))

    baseline = run_baseline(model, trace)
    outdir = Path(_pick(args.out, cfg, "out", "reports"))
    outdir.mkdir(parents=True, exist_ok=True)
    _write_baseline_csv(outdir / "baseline.csv", trace, baseline)
    print(
        f"{len(baseline.predictions)} predictions, "
        f"RMSE vs ground truth {baseline.rmse_vs_truth:.5f}"
    )
    print(f"wrote {outdir / 'baseline.csv'}")
    if monitor_on:
        monitor = run_monitored(
            trace, baseline.predictions, monitor_config_from(cfg), initial_soc
        )
        monitor.save_verdicts_csv(outdir / "verdicts.csv")
        n_detected = len(monitor.first_detection)
        print(
            f"monitor: {n_detected} failure modes flagged, "
            f"inhibited fraction {monitor.inhibited_fraction():.3f}"
        )
        print(f"wrote {outdir / 'verdicts.csv'}")
    return 0


def _cmd_campaign(args) -> int:
    cfg = load_config(args.config)
    seed = _pick(args.seed, cfg, "seed", 42, int)
    battery = battery_from_config(cfg)
    model = load_model(_pick(args.model, cfg, "model", None) or _missing("--model"))
    trace = _resolve_trace(args, cfg, battery, seed)
    channels = _pick(args.channels, cfg, "channels", parse_channels("V,I,T"), parse_channels)
    bits = _pick(args.bits, cfg, "bits", parse_bits("3..64"), parse_bits)
    modes = _pick(args.modes, cfg, "modes", parse_modes("sa0,sa1"), parse_modes)
    monitor_on = _pick(args.monitor, cfg, "monitor", True, parse_on_off)
    jobs = int(_pick(args.jobs, cfg, "jobs", 1))
    initial_soc = float(_pick(None, cfg, "initial_soc", 1.0))
    outdir = Path(_pick(args.out, cfg, "out", "reports"))

    specs = [
        FaultSpec(ch, bit, mode) for ch in channels for bit in bits for mode in modes
    ]
    result = run_campaign(
        model,
        trace,
        specs,
        monitor_config=monitor_config_from(cfg) if monitor_on else None,
        jobs=jobs,
        initial_soc=initial_soc,
    )
    paths = emit_reports(result, outdir)

    n_exc = sum(1 for r in result.results if r.exception)
    n_det = sum(1 for r in result.results if r.monitor and r.monitor.detected)
    print(
        f"{len(result.results)} experiments "
        f"(baseline RMSE vs truth {result.baseline.rmse_vs_truth:.5f}, "
        f"{n_det} detected by monitor, {n_exc} flagged)"
    )
    for name in sorted(paths):
        print(f"wrote {paths[name]}")
    return 0


def _cmd_report(args) -> int:
    cfg = load_config(args.config)
    outdir = Path(_pick(args.out, cfg, "out", "reports"))
    rows = load_campaign_csv(outdir / "campaign.csv")
    absdev = load_absdev_csv(outdir / "absdev.csv")
    from .plots import render_all

    paths = render_all(rows, absdev, outdir)
    for name in sorted(paths):
        print(f"wrote {paths[name]}")
    return 0


def _missing(flag: str):
    raise UsageError(f"{flag} is required (flag or config key)")


# ── parser assembly ───────────────────────────────────────────────────────


def build_parser() -> _Parser:
    parser = _Parser(prog="soclab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p: _Parser) -> None:
        p.add_argument("--config", help="JSON config file mirroring the flags")
        p.add_argument("--seed", type=int, help="campaign seed (default 42)")
        p.add_argument("--out", help="output file or directory")

    p = sub.add_parser("simulate", help="write the default evaluation cycle as CSV")
    common(p)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("train", help="train the default model, write the model file")
    common(p)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("baseline", help="clean-trace inference and error summary")
    common(p)
    p.add_argument("--model", help="model file from `soclab train`")
    p.add_argument("--trace", help="trace CSV (default: synthesize from seed)")
    p.add_argument("--monitor", type=parse_on_off, help="on|off (default on)")
    p.set_defaults(func=_cmd_baseline)

    p = sub.add_parser("campaign", help="run the fault sweep and emit reports")
    common(p)
    p.add_argument("--model", help="model file from `soclab train`")
    p.add_argument("--trace", help="trace CSV (default: synthesize from seed)")
    p.add_argument("--channels", type=parse_channels, help="e.g. V,I,T")
    p.add_argument("--bits", type=parse_bits, help="e.g. 3..64 or 11 or 3..12,40..64")
    p.add_argument("--modes", type=parse_modes, help="e.g. sa0,sa1 or sa0,sa1,flip")
    p.add_argument("--monitor", type=parse_on_off, help="on|off (default on)")
    p.add_argument("--jobs", type=int, help="parallel experiment workers")
    p.set_defaults(func=_cmd_campaign)

    p = sub.add_parser("report", help="re-render figures from campaign CSV output")
    common(p)
    p.set_defaults(func=_cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"soclab: error: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"soclab: error: {exc}", file=sys.stderr)
        return 2


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
