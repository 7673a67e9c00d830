"""Figure rendering for report artifacts.

Every function writes one PNG next to the delimited output it illustrates.
The Agg backend keeps rendering headless and deterministic.
"""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def save_training_curve(path, curve):
    """Train and validation MAE per epoch on a log scale."""
    epochs = [row["epoch"] for row in curve]
    fig, ax = plt.subplots(figsize=(6.0, 3.6))
    ax.plot(epochs, [row["train_mae"] for row in curve], label="train MAE")
    ax.plot(epochs, [row["val_mae"] for row in curve], label="validation MAE")
    ax.set_xlabel("epoch")
    ax.set_ylabel("mean absolute error")
    ax.set_yscale("log")
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_bound_trace(path, lower_bounds, upper_bounds):
    """Lower and upper bound sandwich of the exact loop per iteration."""
    its = np.arange(1, len(lower_bounds) + 1)
    fig, ax = plt.subplots(figsize=(6.0, 3.6))
    ax.step(its, lower_bounds, where="post", label="lower bound")
    ax.step(its, upper_bounds, where="post", label="upper bound")
    ax.set_xlabel("iteration")
    ax.set_ylabel("objective bound")
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_re_boxplot(path, rows):
    """Relative-error distribution per method from report rows."""
    methods = sorted({r["method"] for r in rows})
    data = []
    for method in methods:
        vals = [
            r["re_pct"]
            for r in rows
            if r["method"] == method and np.isfinite(r["re_pct"])
        ]
        data.append(vals if vals else [0.0])
    fig, ax = plt.subplots(figsize=(6.0, 3.6))
    ax.boxplot(data, tick_labels=methods, showmeans=True)
    ax.set_ylabel("relative error (%)")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
