"""Figures written next to the CSV outputs."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 150,
}


def figsize(scale=1.0, ratio=None):
    width = 6.0 * scale
    ratio = ratio or (np.sqrt(5.0) - 1.0) / 2.0
    return width, width * ratio


def save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, bbox_inches="tight")
    plt.close(fig)
    return path


def plot_run(logs, path, title=None) -> Path:
    """Per-episode return with its 100-episode moving average."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=figsize())
        ep = [l.episode for l in logs]
        ax.plot(ep, [l.ret for l in logs], color="0.75", lw=0.6, label="return")
        ax.plot(ep, [l.avg100 for l in logs], color="C0", lw=1.5, label="100-episode average")
        ax.set_xlabel("episode")
        ax.set_ylabel("return")
        if title:
            ax.set_title(title)
        ax.legend(frameon=False)
        return save(fig, path)


def plot_curves(curves: dict, path, title=None) -> Path:
    """Mean and one standard deviation of the moving average across seeds.

    ``curves`` maps a label to a list of per-seed log lists; shorter runs
    (stopped early) are padded with their last value.
    """
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=figsize())
        for i, (label, runs) in enumerate(curves.items()):
            length = max(len(r) for r in runs)
            mat = np.array([[l.avg100 for l in r] + [r[-1].avg100] * (length - len(r)) for r in runs])
            x = np.arange(1, length + 1)
            mean, std = mat.mean(axis=0), mat.std(axis=0)
            ax.plot(x, mean, color=f"C{i}", lw=1.5, label=label)
            ax.fill_between(x, mean - std, mean + std, color=f"C{i}", alpha=0.2, lw=0)
        ax.set_xlabel("episode")
        ax.set_ylabel("100-episode average return")
        if title:
            ax.set_title(title)
        ax.legend(frameon=False)
        return save(fig, path)


def plot_toy_heatmaps(results, path) -> Path:
    """Trial-averaged action mass over iterations, one panel per policy."""
    results = list(results)
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, len(results), figsize=figsize(1.2, 0.35 * len(results)),
                                 squeeze=False)
        for ax, res in zip(axes[0], results):
            C = res.heatmap.shape[1]
            im = ax.imshow(res.heatmap.T, aspect="auto", origin="lower", cmap="viridis",
                           extent=(0, res.heatmap.shape[0], -1 - 1 / (C - 1), 1 + 1 / (C - 1)))
            ax.set_xlabel("iteration")
            ax.set_ylabel("action")
            ax.set_title(f"{res.config.policy} (m={res.config.m:g})")
            fig.colorbar(im, ax=ax, fraction=0.05)
        return save(fig, path)
