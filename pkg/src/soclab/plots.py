"""Campaign report figures, rendered to standalone SVG files.

Three views of a sweep:

  rmse_by_bit.svg       prediction-level RMSE per stuck bit, one panel per
                        fault mode, colored by bit region
  data_rmse_by_bit.svg  the same layout for data-level RMSE
  absdev_heatmap.svg    mean absolute prediction deviation per (bit, true
                        SOC percent) cell, one panel per mode and channel

All functions consume the plain row dicts the campaign module emits and
reads back, so figures can be re-rendered from the CSVs alone.  Zero and
non-finite values cannot sit on a log axis; such rows are dropped and the
dropped count annotated, with the CSV remaining the complete record.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
from matplotlib.colors import LogNorm
from matplotlib.lines import Line2D

_CHANNEL_MARKERS = {"V": "o", "I": "s", "T": "^"}
_REGION_COLORS = {"sign": "tab:purple", "exponent": "tab:red", "significand": "tab:blue"}
_SVG_METADATA = {"Date": None}  # keep output independent of render time


def _scatter_by_bit(rows: list[dict], path: Path, value_key: str, ylabel: str, title: str) -> None:
    modes = sorted({r["mode"] for r in rows})
    fig, axes = plt.subplots(
        1, len(modes), figsize=(5.6 * len(modes), 4.4), sharey=True, squeeze=False
    )
    for ax, mode in zip(axes[0], modes):
        sub = [r for r in rows if r["mode"] == mode and not r["exception"]]
        dropped = 0
        for r in sub:
            v = r[value_key]
            if not np.isfinite(v) or v <= 0:
                dropped += 1
                continue
            ax.scatter(
                r["bit"],
                v,
                marker=_CHANNEL_MARKERS.get(r["channel"], "x"),
                color=_REGION_COLORS.get(r["region"], "gray"),
                s=22,
                alpha=0.75,
                linewidths=0,
            )
        ax.axvline(12.5, color="gray", linestyle=":", linewidth=1)
        ax.set_yscale("log")
        ax.set_xlabel("bit index (1 = sign, 2-12 exponent, 13-64 significand)")
        ax.set_title(f"{mode}  ({dropped} zero or non-finite rows omitted)", fontsize=10)
        ax.grid(True, which="both", alpha=0.25)
    axes[0][0].set_ylabel(ylabel)
    handles = [
        Line2D([], [], marker=m, linestyle="", color="black", label=f"channel {ch}")
        for ch, m in _CHANNEL_MARKERS.items()
    ] + [
        Line2D([], [], marker="o", linestyle="", color=c, label=region)
        for region, c in _REGION_COLORS.items()
        if region != "sign"
    ]
    axes[0][-1].legend(handles=handles, fontsize=8, loc="upper right")
    fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata=_SVG_METADATA)
    plt.close(fig)


def render_rmse_by_bit(rows: list[dict], path) -> Path:
    path = Path(path)
    _scatter_by_bit(
        rows,
        path,
        "rmse_pred",
        "RMSE of SOC predictions vs baseline",
        "Prediction deviation by stuck bit",
    )
    return path


def render_data_rmse_by_bit(rows: list[dict], path) -> Path:
    path = Path(path)
    _scatter_by_bit(
        rows,
        path,
        "rmse_data",
        "RMSE of corrupted vs original normalized data",
        "Data deviation by stuck bit",
    )
    return path


def render_absdev_heatmap(absdev_rows: list[dict], path, bin_count: int = 100) -> Path:
    """Mean |prediction delta| per (bit, true-SOC-percent) cell."""
    path = Path(path)
    modes = sorted({r["mode"] for r in absdev_rows})
    channels = [c for c in "VIT" if any(r["channel"] == c for r in absdev_rows)]
    bits = sorted({r["bit"] for r in absdev_rows})
    lo, hi = bits[0], bits[-1]

    fig, axes = plt.subplots(
        len(modes),
        len(channels),
        figsize=(4.3 * len(channels), 3.2 * len(modes)),
        squeeze=False,
    )
    grids = {}
    positives = []
    for mode in modes:
        for ch in channels:
            total = np.zeros((hi - lo + 1, bin_count))
            count = np.zeros((hi - lo + 1, bin_count))
            for r in absdev_rows:
                if r["mode"] != mode or r["channel"] != ch:
                    continue
                col = min(int(r["soc_truth"] * bin_count), bin_count - 1)
                if np.isfinite(r["abs_dev"]):
                    total[r["bit"] - lo, col] += r["abs_dev"]
                    count[r["bit"] - lo, col] += 1
            with np.errstate(invalid="ignore"):
                mean = np.where(count > 0, total / np.maximum(count, 1), np.nan)
            mean[mean <= 0] = np.nan  # identity cells have no place on a log scale
            grids[mode, ch] = mean
            if np.any(np.isfinite(mean)):
                positives.append((np.nanmin(mean), np.nanmax(mean)))

    if positives:
        vmax = max(p[1] for p in positives)
        vmin = max(min(p[0] for p in positives), vmax * 1e-12)
        norm = LogNorm(vmin=vmin, vmax=vmax)
    else:
        norm = None

    image = None
    for i, mode in enumerate(modes):
        for j, ch in enumerate(channels):
            ax = axes[i][j]
            masked = np.ma.masked_invalid(grids[mode, ch])
            image = ax.imshow(
                masked,
                aspect="auto",
                origin="upper",
                extent=(0, 100, hi + 0.5, lo - 0.5),
                cmap="viridis",
                norm=norm,
                interpolation="nearest",
            )
            ax.set_title(f"{mode} on channel {ch}", fontsize=10)
            if i == len(modes) - 1:
                ax.set_xlabel("true SOC (%)")
            if j == 0:
                ax.set_ylabel("bit index")
    if image is not None and norm is not None:
        fig.colorbar(
            image, ax=[ax for row in axes for ax in row], label="mean |SOC deviation|"
        )
    fig.suptitle("Prediction deviation across the discharge cycle")
    fig.savefig(path, format="svg", metadata=_SVG_METADATA)
    plt.close(fig)
    return path


def render_all(rows: list[dict], absdev_rows: list[dict], outdir) -> dict[str, Path]:
    outdir = Path(outdir)
    return {
        "rmse_by_bit": render_rmse_by_bit(rows, outdir / "rmse_by_bit.svg"),
        "data_rmse_by_bit": render_data_rmse_by_bit(rows, outdir / "data_rmse_by_bit.svg"),
        "absdev_heatmap": render_absdev_heatmap(absdev_rows, outdir / "absdev_heatmap.svg"),
    }
