"""Static figures: skeleton stick figures with temporal shadows, curves.

Figures are written as vector graphics (svg) or whatever the output
suffix requests; rendering uses the non-interactive Agg backend so these
run headless.
"""
from __future__ import annotations

from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .data import N_JOINTS

# joint connectivity of the 25-joint skeleton (zero-based indices)
BONES = (
    (0, 1), (1, 20), (20, 2), (2, 3),
    (20, 4), (4, 5), (5, 6), (6, 7), (7, 21), (7, 22),
    (20, 8), (8, 9), (9, 10), (10, 11), (11, 23), (11, 24),
    (0, 12), (12, 13), (13, 14), (14, 15),
    (0, 16), (16, 17), (17, 18), (18, 19),
)


def plot_skeleton_sequence(frames, out_path, n_shadows: int = 8,
                           title: str = None):
    """Layered front-view (x, y) stick figures; older frames fade out."""
    frames = np.asarray(frames)
    if frames.ndim == 2:  # (T, 75) -> (T, 25, 3)
        frames = frames.reshape(frames.shape[0], N_JOINTS, 3)
    t = frames.shape[0]
    picks = np.unique(np.linspace(0, t - 1, min(n_shadows, t)).astype(int))

    fig, ax = plt.subplots(figsize=(4, 5))
    cmap = plt.get_cmap("viridis")
    for rank, idx in enumerate(picks):
        alpha = 0.25 + 0.75 * rank / max(len(picks) - 1, 1)
        color = cmap(rank / max(len(picks) - 1, 1))
        pts = frames[idx]
        for a, b in BONES:
            ax.plot([pts[a, 0], pts[b, 0]], [pts[a, 1], pts[b, 1]],
                    color=color, alpha=alpha, linewidth=1.2)
        ax.scatter(pts[:, 0], pts[:, 1], s=4, color=color, alpha=alpha)
    ax.set_aspect("equal")
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    ax.set_title(title or f"{t} frames, {len(picks)} shadows")
    fig.tight_layout()
    fig.savefig(out_path)
    plt.close(fig)
    return Path(out_path)


def plot_curves(runs, out_path):
    """Wasserstein estimate vs step and vs wall-clock, runs overlaid.

    `runs` is a list of (label, rows) with rows carrying step,
    wall_clock_s and critic_wasserstein attributes (metrics CSV rows).
    """
    fig, (ax_step, ax_time) = plt.subplots(1, 2, figsize=(10, 4))
    for label, rows in runs:
        steps = [r.step for r in rows]
        wall = [r.wall_clock_s for r in rows]
        w = [r.critic_wasserstein for r in rows]
        ax_step.plot(steps, w, label=label)
        ax_time.plot(wall, w, label=label)
    ax_step.set_xlabel("step")
    ax_step.set_ylabel("Wasserstein estimate")
    ax_time.set_xlabel("wall clock (s)")
    ax_time.set_ylabel("Wasserstein estimate")
    for ax in (ax_step, ax_time):
        ax.legend()
        ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_path)
    plt.close(fig)
    return Path(out_path)


def plot_confusion_matrix(matrix, out_path, title: str = None):
    """Heatmap of a ConfusionMatrix (row-normalized where rows are nonempty)."""
    counts = matrix.counts.astype(np.float64)
    row = counts.sum(axis=1, keepdims=True)
    norm = np.divide(counts, row, out=np.zeros_like(counts), where=row > 0)
    fig, ax = plt.subplots(figsize=(5, 4.5))
    im = ax.imshow(norm, cmap="viridis", vmin=0.0, vmax=1.0)
    ax.set_xlabel("predicted class")
    ax.set_ylabel("true class")
    if title:
        ax.set_title(title)
    fig.colorbar(im, ax=ax, fraction=0.046)
    fig.tight_layout()
    fig.savefig(out_path)
    plt.close(fig)
    return Path(out_path)
