"""Figures written next to reports."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .metrics import PLANE_NAMES, StatsReport  # noqa: E402

# keeps PNG bytes stable across runs
_META = {"Software": None}


def _save(fig, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=110, metadata=_META)
    plt.close(fig)
    return path


def utilization_grid(rep: StatsReport, plane: int) -> np.ndarray:
    """Busiest outgoing mesh link of each router, as a fraction of the window."""
    w, h = rep.cols * rep.chips[0], rep.rows * rep.chips[1]
    counts = np.asarray(rep.link_counts[plane], dtype=float)
    return counts.max(axis=1).reshape(h, w) / max(rep.window, 1)


def link_heatmap(rep: StatsReport, path, plane: int = 1) -> Path:
    grid = utilization_grid(rep, plane)
    fig, ax = plt.subplots(figsize=(5.2, 4.4))
    im = ax.imshow(grid, vmin=0.0, vmax=1.0, cmap="viridis", origin="upper")
    ax.set_title(f"{PLANE_NAMES[plane]} link utilization ({rep.pattern}, rate {rep.rate:g})")
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    fig.colorbar(im, ax=ax, label="busiest output, packets/cycle")
    fig.tight_layout()
    return _save(fig, path)


def load_curves(reports: Sequence[StatsReport], path, plane: int = 1) -> Path:
    rates = [r.rate for r in reports]
    lat = [r.latency_mean[plane] if r.latency_mean[plane] is not None else np.nan for r in reports]
    thr = [r.throughput[plane] for r in reports]
    fig, (a1, a2) = plt.subplots(1, 2, figsize=(9, 3.6))
    a1.plot(rates, lat, marker="o")
    a1.set_xlabel("offered load (packets/node/cycle)")
    a1.set_ylabel("mean latency (cycles)")
    a1.set_yscale("log")
    a2.plot(rates, thr, marker="o", color="tab:orange")
    a2.set_xlabel("offered load (packets/node/cycle)")
    a2.set_ylabel("delivered payload (bytes/cycle)")
    fig.suptitle(f"{PLANE_NAMES[plane]}, {reports[0].pattern}" if reports else "")
    fig.tight_layout()
    return _save(fig, path)


def reorder_bars(rows: Sequence[dict], path) -> Path:
    names = [r["pair"] for r in rows]
    rev = [r["reversed"] for r in rows]
    colors = ["tab:green" if r["deterministic"] else "tab:red" for r in rows]
    fig, ax = plt.subplots(figsize=(8, 3.6))
    ax.barh(names[::-1], rev[::-1], color=colors[::-1])
    ax.set_xlabel("trials with the second effect first")
    ax.set_title("transfer-pair reorders (green: ordered pairs)")
    fig.tight_layout()
    return _save(fig, path)
