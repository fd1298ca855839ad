"""Figure rendering for the CLI report path.

Every function consumes the same row tables the CSV files are written from
and saves a PNG next to them. Nothing here feeds back into the algorithms.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def save_learning_curve(records, path):
    """Mean return and subset size against iteration."""
    iterations = [r.iteration for r in records]
    fig, (ax1, ax2) = plt.subplots(
        2, 1, figsize=(6.4, 5.6), sharex=True,
        gridspec_kw={"height_ratios": [3, 1]})
    ax1.plot(iterations, [r.mean_return for r in records], lw=1.5)
    ax1.set_ylabel("mean return")
    ax1.grid(alpha=0.3)
    ax2.step(iterations, [r.subset_size for r in records], where="mid",
             color="tab:orange")
    ax2.set_ylabel("subset size")
    ax2.set_xlabel("iteration")
    ax2.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_grid_figure(rows, axis_names, path):
    """Line plot for a 1-D grid; paired heat maps (mean, p10) for 2-D."""
    if len(axis_names) == 1:
        x = [row[axis_names[0]] for row in rows]
        fig, ax = plt.subplots(figsize=(6.4, 4.2))
        ax.plot(x, [row["mean_return"] for row in rows], "o-", label="mean")
        ax.plot(x, [row["p10_return"] for row in rows], "s--",
                label="10th percentile")
        ax.set_xlabel(axis_names[0])
        ax.set_ylabel("return")
        ax.legend()
        ax.grid(alpha=0.3)
    else:
        xs = sorted({row[axis_names[0]] for row in rows})
        ys = sorted({row[axis_names[1]] for row in rows})
        mean = np.full((len(ys), len(xs)), np.nan)
        p10 = np.full((len(ys), len(xs)), np.nan)
        for row in rows:
            i = ys.index(row[axis_names[1]])
            j = xs.index(row[axis_names[0]])
            mean[i, j] = row["mean_return"]
            p10[i, j] = row["p10_return"]
        fig, axes = plt.subplots(1, 2, figsize=(10.5, 4.2))
        for ax, grid_vals, title in ((axes[0], mean, "mean return"),
                                     (axes[1], p10, "10th percentile")):
            im = ax.pcolormesh(xs, ys, grid_vals, shading="nearest")
            ax.set_xlabel(axis_names[0])
            ax.set_ylabel(axis_names[1])
            ax.set_title(title)
            fig.colorbar(im, ax=ax)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_adaptation_figure(sources, target_returns, path, true_params=None):
    """Per-dimension mu with a +/-2 sigma band across rounds, plus the
    per-round target return curve."""
    names = sources[0].names
    n = len(names)
    fig, axes = plt.subplots(1, n + 1, figsize=(3.4 * (n + 1), 3.4))
    rounds = np.arange(len(sources))
    for i, name in enumerate(names):
        mu = np.array([s.mu[i] for s in sources])
        sd = np.array([s.sigma[i] for s in sources])
        ax = axes[i]
        ax.plot(rounds, mu, "o-", ms=3)
        ax.fill_between(rounds, mu - 2 * sd, mu + 2 * sd, alpha=0.25)
        if true_params is not None and name in true_params:
            ax.axhline(true_params[name], color="tab:red", ls=":", lw=1.2)
        ax.set_title(name)
        ax.set_xlabel("round")
        ax.grid(alpha=0.3)
    ax = axes[-1]
    ax.plot(np.arange(1, len(target_returns) + 1), target_returns, "o-",
            color="tab:green", ms=3)
    ax.set_title("target return")
    ax.set_xlabel("round")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_sweep_figure(rows, path):
    """Mean with a p10-p90 band for each epsilon setting."""
    labels = [str(row["epsilon"]) for row in rows]
    x = np.arange(len(rows))
    mean = np.array([row["mean"] for row in rows])
    p10 = np.array([row["p10"] for row in rows])
    p90 = np.array([row["p90"] for row in rows])
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    ax.errorbar(x, mean, yerr=[mean - p10, p90 - mean], fmt="o", capsize=4)
    ax.set_xticks(x)
    ax.set_xticklabels(labels)
    ax.set_xlabel("epsilon")
    ax.set_ylabel("return (mean, p10-p90)")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
