"""Figure rendering for the CLI report paths.

Every report command can drop a PNG next to its CSV/JSON output. Uses
the Agg backend so rendering works headless.
"""

from __future__ import annotations

from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .evaluation import EvalReport
from .shift import NeighborSet, ShiftScore, Trajectory

DPI = 150


def shift_figure(scores: Sequence[ShiftScore], path, top_m: int = 25) -> None:
    """Horizontal bars of the largest cosine distances between two periods."""
    top = list(scores[:top_m])[::-1]
    fig, ax = plt.subplots(figsize=(8, max(2.5, 0.3 * len(top) + 1.2)))
    ax.barh([s.word for s in top], [s.distance for s in top], color="#3b6ea5")
    if top:
        ax.set_title(f"Largest shifts: {top[0].period_a} vs {top[0].period_b}")
    ax.set_xlabel("cosine distance")
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)


def neighbors_figure(neighbor_set: NeighborSet, path) -> None:
    """Similarity bars for the ranked neighbor list of one target."""
    entries = list(neighbor_set.entries)[::-1]
    fig, ax = plt.subplots(figsize=(8, max(2.5, 0.28 * len(entries) + 1.2)))
    ax.barh([e.word for e in entries], [e.similarity for e in entries], color="#4a8f5d")
    ax.set_title(f"Nearest words to {neighbor_set.target!r}")
    ax.set_xlabel("cosine similarity")
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)


def trajectory_figure(
    trajectories: Sequence[Trajectory], period_order: Sequence[str], path
) -> None:
    """One line per seed word: similarity to the target across periods."""
    fig, ax = plt.subplots(figsize=(9, 5.5))
    x_index = {label: i for i, label in enumerate(period_order)}
    for traj in trajectories:
        xs = [x_index[p.period] for p in traj.points if p.period in x_index]
        ys = [p.similarity for p in traj.points if p.period in x_index]
        ax.plot(xs, ys, marker="o", label=traj.seed)
    ax.set_xticks(range(len(period_order)))
    ax.set_xticklabels(period_order, rotation=30, ha="right")
    if trajectories:
        ax.set_title(f"Relative shift of {trajectories[0].target!r} against seed words")
    ax.set_ylabel("cosine similarity")
    ax.legend(fontsize=8, ncol=2)
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)


def eval_figure(report: EvalReport, path) -> None:
    """Scatter of gold shift index against model cosine distance."""
    gold = [g for _, g, _ in report.pairs]
    dist = [d for _, _, d in report.pairs]
    fig, ax = plt.subplots(figsize=(7, 5.5))
    ax.scatter(gold, dist, s=18, alpha=0.75, color="#a5483b")
    ax.set_xlabel("gold shift index")
    ax.set_ylabel("cosine distance")
    ax.set_title(f"r = {report.pearson_r:.3f}, p = {report.p_value:.2g} ({report.method})")
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)
