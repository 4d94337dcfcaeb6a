"""Render report figures to files next to the CSV outputs.

Everything draws through the Agg backend so the CLI works headless, and
savefig metadata is pinned so repeated runs produce byte-identical PNGs.
"""

from __future__ import annotations

from typing import Optional

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .commute import CommuteReport, DensityGrid
from .core import SLOTS_PER_WEEK
from .events import EnrichedEvalReport
from .predictor import EvalReport

_DAYS = ("Mon", "Tue", "Wed", "Thu", "Fri", "Sat", "Sun")
_SAVE_OPTS = {"dpi": 110, "metadata": {"Software": "cdrmob"}}


def per_slot_figure(report: EvalReport, path: str, title: str = "Predictability by time slot") -> None:
    """Accuracy and coverage across the 168 weekly slots."""
    slots = np.arange(SLOTS_PER_WEEK)
    totals = report.per_slot[:, 0].astype(float)
    predicted = report.per_slot[:, 1].astype(float)
    correct = report.per_slot[:, 2].astype(float)
    with np.errstate(invalid="ignore", divide="ignore"):
        accuracy = np.where(predicted > 0, correct / predicted, np.nan)
        coverage = np.where(totals > 0, predicted / totals, np.nan)

    fig, ax = plt.subplots(figsize=(10, 4))
    ax.plot(slots, accuracy, lw=1.2, color="tab:green", label="accuracy")
    ax.plot(slots, coverage, lw=1.0, color="tab:gray", alpha=0.7, label="coverage")
    for d in range(1, 7):
        ax.axvline(d * 24, color="0.85", lw=0.8, zorder=0)
    ax.set_xticks([d * 24 + 12 for d in range(7)])
    ax.set_xticklabels(_DAYS)
    ax.set_xlim(0, SLOTS_PER_WEEK - 1)
    ax.set_ylim(0, 1)
    ax.set_ylabel("fraction")
    ax.set_title(title)
    ax.legend(loc="lower right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_OPTS)
    plt.close(fig)


def grid_figure(grid: DensityGrid, path: str, title: Optional[str] = None) -> None:
    """Call-density heatmap: red is busy, blue quiet, matching map conventions."""
    fig, ax = plt.subplots(figsize=(6, 6))
    shown = np.log1p(grid.cells.astype(float))  # compress heavy-tailed counts
    ax.imshow(
        shown,
        origin="lower",
        extent=(grid.bbox.min_lon, grid.bbox.max_lon, grid.bbox.min_lat, grid.bbox.max_lat),
        cmap="coolwarm",
        aspect="auto",
    )
    ax.set_xlabel("longitude")
    ax.set_ylabel("latitude")
    ax.set_title(title if title is not None else f"calls ({grid.time_filter})")
    fig.tight_layout()
    fig.savefig(path, **_SAVE_OPTS)
    plt.close(fig)


def commute_figure(report: CommuteReport, path: str) -> None:
    """Histogram of commute radii in 1 km bins."""
    fig, ax = plt.subplots(figsize=(7, 4))
    if report.histogram_km:
        bins = sorted(report.histogram_km)
        counts = [report.histogram_km[b] for b in bins]
        ax.bar(bins, counts, width=0.9, align="edge", color="tab:blue")
    mean = report.mean_radius_km
    if mean is not None:
        ax.axvline(mean, color="tab:red", lw=1.2, label=f"mean {mean:.1f} km")
        ax.legend(fontsize=8)
    ax.set_xlabel("commute radius (km)")
    ax.set_ylabel("users")
    ax.set_title(f"Commute radius ({report.users_qualified} qualified users)")
    fig.tight_layout()
    fig.savefig(path, **_SAVE_OPTS)
    plt.close(fig)


def enriched_figure(report: EnrichedEvalReport, path: str) -> None:
    """Baseline vs enriched accuracy and coverage on match-window events."""
    labels = ("accuracy", "coverage")
    base = [report.baseline.accuracy or 0.0, report.baseline.coverage or 0.0]
    enr = [report.enriched.accuracy or 0.0, report.enriched.coverage or 0.0]

    x = np.arange(len(labels))
    width = 0.35
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.bar(x - width / 2, base, width, label="baseline", color="tab:gray")
    ax.bar(x + width / 2, enr, width, label="enriched", color="tab:red")
    ax.set_xticks(x)
    ax.set_xticklabels(labels)
    ax.set_ylim(0, 1.05)
    ax.set_title(f"Match-window events, {report.baseline.total_events} total")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_OPTS)
    plt.close(fig)
