"""Figure rendering for run outputs.

Every CSV the CLI emits gets a companion figure here; the experiment code
itself stays plotting-free. Uses the Agg backend so runs work headless.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .experiments import MetricsRecord


def plot_training_curves(records: list[MetricsRecord], path: str | Path) -> Path:
    """Train/validation MSE per epoch for one run."""
    path = Path(path)
    epochs = [r.epoch for r in records]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(epochs, [r.train_mse for r in records], marker="o", label="train")
    ax.plot(epochs, [r.val_mse for r in records], marker="s", label="validation")
    ax.set_xlabel("epoch")
    ax.set_ylabel("MSE")
    ax.set_title(records[0].experiment if records else "training")
    ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_summary_bars(records: list[MetricsRecord], path: str | Path, title: str) -> Path:
    """Grouped train/validation bars, one group per grid point or seed."""
    path = Path(path)
    labels = [r.point for r in records]
    x = range(len(records))
    width = 0.38
    fig, ax = plt.subplots(figsize=(max(5, 1.6 * len(records)), 4))
    ax.bar([i - width / 2 for i in x], [r.train_mse for r in records], width, label="train")
    ax.bar([i + width / 2 for i in x], [r.val_mse for r in records], width, label="validation")
    ax.set_xticks(list(x))
    ax.set_xticklabels(labels)
    ax.set_ylabel("MSE")
    ax.set_title(title)
    ax.legend()
    ax.grid(True, axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
