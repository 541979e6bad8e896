"""Figure rendering for run reports.

Every CSV the tool exports has a figure twin: training curves for the
metrics log, a parallel-coordinates view of the archive, the ablation
comparison, and heat-map images of individual terrains. All renderers
write image files and never open interactive windows.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .archive import Archive
from .descriptors import PenaltyScaling, ratio_descriptors
from .evaluation import PENALTY_CHANNELS
from .terrain import Heightmap

RATIO_LABELS = {
    "cassie": list(PENALTY_CHANNELS),
    "anymal": list(PENALTY_CHANNELS) + ["collision_count"],
}


def plot_metrics(metrics_rows, path) -> Path:
    """Three-panel training curves: QD score, archive size, mean fitness."""
    iterations = [r.iteration for r in metrics_rows]
    fig, axes = plt.subplots(1, 3, figsize=(12, 3.2))
    panels = (
        ("QD score", [r.qd_score for r in metrics_rows]),
        ("archive size", [r.archive_size for r in metrics_rows]),
        ("mean fitness", [r.mean_fitness for r in metrics_rows]),
    )
    for ax, (label, series) in zip(axes, panels):
        ax.plot(iterations, series, lw=1.5)
        ax.set_xlabel("iteration")
        ax.set_ylabel(label)
        ax.grid(alpha=0.3)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def plot_parallel_coordinates(archive: Archive, scaling: PenaltyScaling,
                              mode: str, path) -> Path:
    """One polyline per elite across the ratio-descriptor axes."""
    labels = RATIO_LABELS[mode]
    elites = archive.elites()
    fig, ax = plt.subplots(figsize=(9, 4))
    if elites:
        ratios = np.array([ratio_descriptors(e.report, scaling, mode) for e in elites])
        fitness = np.array([e.fitness.value for e in elites])
        span = fitness.max() - fitness.min()
        norm = (fitness - fitness.min()) / (span if span > 0 else 1.0)
        cmap = plt.get_cmap("viridis")
        xs = np.arange(len(labels))
        for row, c in zip(ratios, norm):
            ax.plot(xs, row, color=cmap(c), alpha=0.4, lw=0.8)
        mappable = plt.cm.ScalarMappable(
            cmap=cmap, norm=plt.Normalize(fitness.min(), fitness.max()))
        fig.colorbar(mappable, ax=ax, label="fitness")
    ax.set_xticks(range(len(labels)))
    ax.set_xticklabels(labels, rotation=20)
    ax.set_ylim(0.0, 1.0)
    ax.set_ylabel("ratio descriptor")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def plot_ablation(rows, path) -> Path:
    """Mean re-evaluated STD per snapshot for the alpha=1 and alpha=0 runs."""
    iterations = [r.iteration for r in rows]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(iterations, [r.mean_std_alpha1 for r in rows],
            marker="o", label="with STD penalty")
    ax.plot(iterations, [r.mean_std_alpha0 for r in rows],
            marker="s", label="without STD penalty")
    ax.set_xlabel("iteration")
    ax.set_ylabel("mean total STD")
    ax.grid(alpha=0.3)
    ax.legend()
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def plot_heightmap(heightmap: Heightmap, path, title: str | None = None) -> Path:
    """Top-down heat map of one terrain, meters on both axes."""
    fig, ax = plt.subplots(figsize=(8, 4.4))
    image = ax.imshow(
        heightmap.heights.T, origin="lower", cmap="terrain",
        extent=(0.0, heightmap.length_m, 0.0, heightmap.width_m),
        aspect="equal", vmin=-2.0, vmax=2.0)
    fig.colorbar(image, ax=ax, label="height (m)", shrink=0.8)
    ax.set_xlabel("x (m)")
    ax.set_ylabel("y (m)")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
