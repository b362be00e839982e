"""Figure rendering for the CLI report paths.

Figures are a convenience layered on top of the canonical delimited
outputs; every number they show exists in a data file next to them, and
the --no-figures flag suppresses them entirely.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def training_curves(metrics: list, path: str) -> None:
    """Loss means and accuracies per epoch, two stacked panels."""
    epochs = [m.epoch for m in metrics]
    fig, (ax_loss, ax_acc) = plt.subplots(2, 1, figsize=(7, 7), sharex=True)
    for key, label in (("clc", "classification"),
                       ("dis", "adversarial"),
                       ("im", "info-max"),
                       ("mcc", "class confusion"),
                       ("mmd", "MMD"),
                       ("plmmd", "weighted MMD"),
                       ("composite", "composite")):
        values = [getattr(m, key) for m in metrics]
        if any(v != 0.0 for v in values) or key == "composite":
            ax_loss.plot(epochs, values, label=label, linewidth=1.2)
    ax_loss.set_ylabel("loss (epoch mean)")
    ax_loss.legend(fontsize=8, ncol=2)
    ax_loss.grid(True, alpha=0.3)

    ax_acc.plot(epochs, [m.source_accuracy for m in metrics],
                label="source", linewidth=1.5)
    if all(m.target_accuracy is not None for m in metrics):
        ax_acc.plot(epochs, [m.target_accuracy for m in metrics],
                    label="target", linewidth=1.5)
    ax_acc.set_xlabel("epoch")
    ax_acc.set_ylabel("accuracy")
    ax_acc.set_ylim(0.0, 1.05)
    ax_acc.legend(fontsize=8)
    ax_acc.grid(True, alpha=0.3)

    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def embedding_scatter(coords: np.ndarray, labels: np.ndarray | None,
                      path: str) -> None:
    """2-D embedding scatter, colored by class when labels exist."""
    fig, ax = plt.subplots(figsize=(6, 5))
    if labels is None:
        ax.scatter(coords[:, 0], coords[:, 1], s=8, alpha=0.7)
    else:
        for c in np.unique(labels):
            pts = coords[labels == c]
            ax.scatter(pts[:, 0], pts[:, 1], s=8, alpha=0.7,
                       label=f"class {c}")
        ax.legend(fontsize=8)
    ax.set_xlabel("component 1")
    ax.set_ylabel("component 2")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
