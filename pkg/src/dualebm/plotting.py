"""Vector-graphic plots of metrics files (no display needed)."""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .metrics import read_metrics  # noqa: E402

_PANELS = (("kl", "KL"), ("sm", "score mismatch"), ("tv_norm", "mean weight"))


def _positive(y):
    y = np.asarray(y, dtype=float)
    return np.where(y > 0, y, np.nan)


def plot_metrics(paths, out_path, labels=None, title=None):
    """KL, score mismatch and mean weight against time and rescaled time.

    ``paths`` is one metrics file or a list of them, overlaid with ``labels``.
    """
    if isinstance(paths, (str, os.PathLike)):
        paths = [paths]
    labels = labels or [os.path.basename(os.path.dirname(os.path.abspath(p))) for p in paths]
    runs = [read_metrics(p) for p in paths]
    fig, axes = plt.subplots(2, 3, figsize=(11, 6), constrained_layout=True)
    for row, xkey in enumerate(("time", "rescaled_time")):
        for col, (key, name) in enumerate(_PANELS):
            ax = axes[row, col]
            for run, label in zip(runs, labels):
                if key not in run or not np.any(np.isfinite(run[key])):
                    continue
                y = run[key] if key == "tv_norm" else _positive(run[key])
                ax.plot(run[xkey], y, lw=1.2, label=label)
            if key != "tv_norm":
                ax.set_yscale("log")
            ax.set_xlabel(xkey.replace("_", " "))
            ax.set_ylabel(name)
    if len(runs) > 1:
        axes[0, 0].legend(fontsize=8)
    if title:
        fig.suptitle(title)
    fig.savefig(out_path, format="svg")
    plt.close(fig)
    return out_path


def plot_density(grid, curves, out_path, labels=None):
    """Overlay of densities on [0, 1) (torus runs)."""
    fig, ax = plt.subplots(figsize=(6, 3.5), constrained_layout=True)
    for k, y in enumerate(curves):
        ax.plot(grid, y, lw=1.2, label=None if labels is None else labels[k])
    ax.set_xlabel("x")
    ax.set_ylabel("density")
    if labels:
        ax.legend(fontsize=8)
    fig.savefig(out_path, format="svg")
    plt.close(fig)
    return out_path
