"""Batch figure rendering for the report path.

Figures are written next to the delimited outputs; nothing here is
interactive.  Kept off the simulation hot path on purpose.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def save_ensemble_figures(ensemble, out_dir: Path, label: str = "scenario") -> list[Path]:
    """Mean head count of resource 1 and mean social cost, each with 1-std bands."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    fig, ax = plt.subplots(figsize=(7, 4))
    ax.errorbar(
        ensemble.t,
        ensemble.mean_counts[:, 0],
        yerr=ensemble.std_counts[:, 0],
        errorevery=max(1, len(ensemble.t) // 25),
        capsize=2,
        lw=1.2,
        color="tab:blue",
    )
    ax.set_xlabel("t")
    ax.set_ylabel("agents on resource 1")
    ax.set_title(f"{label}: state evolution ({ensemble.paths} paths)")
    fig.tight_layout()
    path = out_dir / "ensemble_state.png"
    fig.savefig(path, dpi=150)
    plt.close(fig)
    written.append(path)

    fig, ax = plt.subplots(figsize=(7, 4))
    ax.errorbar(
        ensemble.t,
        ensemble.mean_cost,
        yerr=ensemble.std_cost,
        errorevery=max(1, len(ensemble.t) // 25),
        capsize=2,
        lw=1.2,
        color="tab:red",
    )
    ax.set_xlabel("t")
    ax.set_ylabel("social cost")
    ax.set_title(f"{label}: social cost ({ensemble.paths} paths)")
    fig.tight_layout()
    path = out_dir / "ensemble_cost.png"
    fig.savefig(path, dpi=150)
    plt.close(fig)
    written.append(path)
    return written


def save_matrix_heatmap(matrix, path: Path, label: str = "transition matrix") -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(5.5, 5))
    im = ax.imshow(matrix.p, cmap="viridis", interpolation="nearest")
    ax.set_xlabel("next population index")
    ax.set_ylabel("current population index")
    ax.set_title(label)
    fig.colorbar(im, ax=ax, shrink=0.85)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def save_cost_curves(costs, path: Path, resolution: float = 0.001) -> Path:
    """The two cost functions and the induced social-cost curve with its optimum."""
    from .engine import grid_optimum

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    xs = np.linspace(0.0, 1.0, max(2, round(1.0 / resolution) + 1))
    fig, (left, right) = plt.subplots(1, 2, figsize=(10, 4))
    left.plot(xs, costs[0](xs), "--", label="resource 1")
    left.plot(xs, costs[1](xs), "-", label="resource 2")
    left.set_xlabel("load fraction x")
    left.set_ylabel("cost")
    left.legend()
    left.set_title("cost functions")

    social = xs * costs[0](xs) + (1.0 - xs) * costs[1](1.0 - xs)
    best_x, best_val = grid_optimum(list(costs), resolution)
    right.plot(xs, social, color="tab:red")
    right.axvline(best_x, ls="--", color="gray")
    right.annotate(
        f"optimum {best_val:.3f} at {best_x:.3f}",
        xy=(best_x, best_val),
        xytext=(0.35, 0.9),
        textcoords="axes fraction",
    )
    right.set_xlabel("fraction of agents on resource 1")
    right.set_ylabel("social cost")
    right.set_title("social cost")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
