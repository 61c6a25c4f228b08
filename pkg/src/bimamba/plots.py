"""Matplotlib figures for run reports (rendered straight to files)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .stages import STAGE_NAMES

__all__ = [
    "save_confusion",
    "save_loss_curves",
    "save_roc",
    "save_accuracy_vs_ratio",
]


def _finish(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_confusion(cm, path, class_names=STAGE_NAMES) -> None:
    cm = np.asarray(cm, dtype=np.float64)
    k = cm.shape[0]
    names = class_names[:k] if len(class_names) >= k else [str(i) for i in range(k)]
    fig, ax = plt.subplots(figsize=(4.2, 3.8))
    im = ax.imshow(cm, cmap="Blues")
    ax.set_xticks(range(k), names)
    ax.set_yticks(range(k), names)
    ax.set_xlabel("predicted")
    ax.set_ylabel("true")
    thresh = cm.max() / 2 if cm.max() > 0 else 0.5
    for i in range(k):
        for j in range(k):
            ax.text(
                j, i, f"{int(cm[i, j])}",
                ha="center", va="center",
                color="white" if cm[i, j] > thresh else "black",
                fontsize=8,
            )
    fig.colorbar(im, ax=ax, shrink=0.85)
    _finish(fig, path)


def save_loss_curves(fold_histories, path) -> None:
    """fold_histories: list of per-epoch dicts per fold (train/val loss)."""
    fig, ax = plt.subplots(figsize=(5.2, 3.6))
    for i, history in enumerate(fold_histories):
        xs = [e["epoch"] for e in history]
        ax.plot(xs, [e["train_loss"] for e in history], label=f"fold {i} train", alpha=0.8)
        ax.plot(xs, [e["val_loss"] for e in history], "--", label=f"fold {i} val", alpha=0.8)
    ax.set_xlabel("epoch")
    ax.set_ylabel("cross-entropy")
    if len(fold_histories) <= 4:
        ax.legend(fontsize=7)
    _finish(fig, path)


def save_roc(curves, path) -> None:
    """curves: list of (label, points, auc)."""
    fig, ax = plt.subplots(figsize=(4.2, 4.0))
    ax.plot([0, 1], [0, 1], color="#999999", linestyle=":", linewidth=1)
    for label, points, auc in curves:
        xs = [p[0] for p in points]
        ys = [p[1] for p in points]
        ax.plot(xs, ys, label=f"{label} (AUC {auc:.3f})")
    ax.set_xlabel("false positive rate")
    ax.set_ylabel("true positive rate")
    ax.legend(fontsize=8, loc="lower right")
    _finish(fig, path)


def save_accuracy_vs_ratio(ratios, accuracies, path) -> None:
    fig, ax = plt.subplots(figsize=(4.6, 3.4))
    ax.plot(ratios, accuracies, marker="o")
    ax.set_xlabel("train fraction")
    ax.set_ylabel("test accuracy")
    ax.set_ylim(0.0, 1.02)
    _finish(fig, path)
