"""Static SVG figures for the experiment reports.

Figures are derived artifacts: every command that draws one also writes the
underlying CSV. SVG metadata dates are stripped so outputs are reproducible
byte-for-byte under a fixed seed.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = [
    "save_figure",
    "sweep_figure",
    "eval_shares_figure",
    "counterfactual_figure",
    "trace_figure",
    "training_curves_figure",
]


def save_figure(fig, path) -> None:
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def sweep_figure(points, path, refreshed=None) -> None:
    """Win and lie percentages against the lie-dimension mask weight."""
    fig, ax = plt.subplots(figsize=(7, 4.5))
    weights = [p.weight for p in points]
    ax.plot(weights, [p.win_pct for p in points], "o-", color="tab:blue", label="win %")
    ax.plot(weights, [p.lie_pct for p in points], "s-", color="tab:orange", label="lie actions %")
    if refreshed:
        rw = [p.weight for p in refreshed]
        ax.plot(rw, [p.win_pct for p in refreshed], "o--", color="tab:green",
                label="win % (refreshed priorities)")
        ax.plot(rw, [p.lie_pct for p in refreshed], "s--", color="tab:red",
                label="lie actions % (refreshed priorities)")
    ax.set_xlabel("lie dimension mask weight")
    ax.set_ylabel("percent")
    ax.set_ylim(bottom=0)
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    save_figure(fig, path)


def eval_shares_figure(labels, shares, path) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    x = np.arange(len(labels))
    ax.bar(x, shares, color="tab:blue")
    ax.set_xticks(x, labels)
    ax.set_ylabel("collected reward share (%)")
    ax.grid(True, axis="y", alpha=0.3)
    fig.tight_layout()
    save_figure(fig, path)


def counterfactual_figure(histograms: dict, path) -> None:
    """Grouped bars: action counts by type, honest vs lying, one row per mask."""
    mask_ids = list(histograms)
    types = sorted({key[0] for h in histograms.values() for key in h})
    fig, axes = plt.subplots(
        len(mask_ids), 1, figsize=(8, 2.6 * len(mask_ids)), sharex=True, squeeze=False
    )
    x = np.arange(len(types))
    width = 0.38
    for ax_row, mask_id in zip(axes[:, 0], mask_ids):
        honest = [histograms[mask_id].get((t, False), 0) for t in types]
        lies = [histograms[mask_id].get((t, True), 0) for t in types]
        ax_row.bar(x - width / 2, honest, width, label="honest", color="tab:blue")
        ax_row.bar(x + width / 2, lies, width, label="lie", color="tab:red")
        ax_row.set_ylabel(mask_id, rotation=0, ha="right", va="center")
        ax_row.grid(True, axis="y", alpha=0.3)
    axes[0, 0].legend()
    axes[-1, 0].set_xticks(x, types, rotation=30, ha="right")
    fig.tight_layout()
    save_figure(fig, path)


def trace_figure(trace, path, target: float | None = None) -> None:
    fig, ax = plt.subplots(figsize=(6.5, 4))
    steps = [t[0] for t in trace]
    dist = [t[1] for t in trace]
    ax.plot(steps, dist, "-", color="tab:blue")
    if target is not None:
        ax.axhline(target, color="tab:red", linestyle="--", label=f"target {target:g}")
        ax.legend()
    ax.set_xlabel("training steps")
    ax.set_ylabel("sup-norm distance to oracle")
    ax.set_yscale("log")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    save_figure(fig, path)


def training_curves_figure(rows, labels, path, window: int = 200) -> None:
    """Smoothed per-episode reward components and win rate for the champion."""
    champion = [r for r in rows if r[0] == "champion"]
    if not champion:
        champion = rows
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(7.5, 6), sharex=True)
    episodes = np.arange(len(champion))
    rewards = np.stack([r[1] for r in champion])
    wins = np.array([1.0 if r[2] else 0.0 for r in champion])
    w = min(window, max(1, len(champion) // 10))
    kernel = np.ones(w) / w
    for k, label in enumerate(labels):
        smooth = np.convolve(rewards[:, k], kernel, mode="valid")
        ax1.plot(episodes[: smooth.size], smooth, label=label)
    ax1.set_ylabel(f"reward per episode (window {w})")
    ax1.grid(True, alpha=0.3)
    ax1.legend()
    smooth_w = np.convolve(wins, kernel, mode="valid")
    ax2.plot(episodes[: smooth_w.size], smooth_w, color="tab:blue")
    ax2.set_ylabel("win rate")
    ax2.set_xlabel("champion episode")
    ax2.grid(True, alpha=0.3)
    fig.tight_layout()
    save_figure(fig, path)
