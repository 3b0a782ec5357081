"""Figure rendering for exported fronts and training logs.

Every plot function takes already-loaded data and writes a PNG next to the
delimited tables the CLI emits; nothing here recomputes metrics.
"""

from __future__ import annotations

import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .moo import PolicyPoint

_MARKERS = ["o", "s", "^", "D", "v", "P", "X", "*"]


def plot_fronts(fronts: dict[str, list[PolicyPoint]], out_path: str | Path,
                title: str = "Approximate Pareto fronts") -> Path:
    """Scatter each labeled front in raw cost units."""
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(6.0, 4.5))
    for k, (label, points) in enumerate(sorted(fronts.items())):
        xs = [p.objectives[0] for p in points]
        ys = [p.objectives[1] for p in points]
        ax.scatter(xs, ys, label=label, marker=_MARKERS[k % len(_MARKERS)], alpha=0.85)
    ax.set_xlabel("QC idle time (min/QC)")
    ax.set_ylabel("Empty travel distance (m/task)")
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return out_path


def plot_training_log(log_path: str | Path, out_path: str | Path) -> Path:
    """Objective trajectories over training iterations."""
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    iters, idle, dist = [], [], []
    with Path(log_path).open("r", encoding="utf-8") as fh:
        for line in fh:
            rec = json.loads(line)
            if "iter" not in rec:
                continue
            iters.append(rec["iter"])
            idle.append(rec["mean_objectives"][0])
            dist.append(rec["mean_objectives"][1])
    fig, axes = plt.subplots(2, 1, figsize=(6.0, 5.0), sharex=True)
    axes[0].plot(iters, idle)
    axes[0].set_ylabel("mean idle (s)")
    axes[1].plot(iters, dist)
    axes[1].set_ylabel("mean empty (m)")
    axes[1].set_xlabel("iteration")
    for ax in axes:
        ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return out_path
