"""Figure rendering for report directories.

Every CLI report path drops a PNG next to its CSV/JSON output: training
curves, confusion heatmaps, sweep curves and latency histograms. All figures
render off-screen (Agg) straight to files.
"""

from __future__ import annotations

from pathlib import Path
from typing import Optional, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def save_history_figure(history: Sequence, path: str | Path) -> None:
    """Loss curves and validation accuracy per epoch, LR changes marked."""
    epochs = [r.epoch for r in history]
    fig, (ax_loss, ax_acc) = plt.subplots(1, 2, figsize=(10, 4))
    ax_loss.plot(epochs, [r.train_loss for r in history], label="train loss")
    ax_loss.plot(epochs, [r.val_loss for r in history], label="val loss")
    ax_loss.set_xlabel("epoch")
    ax_loss.set_ylabel("loss")
    ax_loss.legend()
    ax_loss.grid(alpha=0.3)

    ax_acc.plot(epochs, [r.val_accuracy for r in history], color="tab:green")
    ax_acc.set_xlabel("epoch")
    ax_acc.set_ylabel("val accuracy")
    ax_acc.set_ylim(0, 1.02)
    ax_acc.grid(alpha=0.3)
    lrs = [r.lr for r in history]
    for i in range(1, len(lrs)):
        if lrs[i] != lrs[i - 1]:
            ax_acc.axvline(epochs[i], color="gray", linestyle=":", alpha=0.6)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_confusion_figure(
    cm: np.ndarray, labels: Sequence[str], path: str | Path,
    title: Optional[str] = None,
) -> None:
    cm = np.asarray(cm)
    k = cm.shape[0]
    fig, ax = plt.subplots(figsize=(max(4, 0.5 * k + 2),) * 2)
    im = ax.imshow(cm, cmap="viridis")
    ax.set_xticks(range(k), labels, rotation=45 if k > 6 else 0, ha="right" if k > 6 else "center")
    ax.set_yticks(range(k), labels)
    ax.set_xlabel("predicted")
    ax.set_ylabel("true")
    if title:
        ax.set_title(title)
    if k <= 12:
        peak = cm.max() if cm.max() > 0 else 1
        for i in range(k):
            for j in range(k):
                ax.text(j, i, str(int(cm[i, j])), ha="center", va="center",
                        color="white" if cm[i, j] < 0.6 * peak else "black", fontsize=8)
    fig.colorbar(im, ax=ax, shrink=0.8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_sweep_figure(rows: Sequence[dict], path: str | Path) -> None:
    """Accuracy and relaxed accuracy vs train+val fraction (mean over seeds)."""
    fractions = sorted({row["train_val_pct"] for row in rows}, reverse=True)
    acc = [np.mean([r["accuracy"] for r in rows if r["train_val_pct"] == f]) for f in fractions]
    rel = [np.mean([r["relaxed_accuracy"] for r in rows if r["train_val_pct"] == f])
           for f in fractions]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(fractions, acc, "o-", label="accuracy")
    ax.plot(fractions, rel, "s--", label="relaxed accuracy")
    ax.set_xlabel("train+val share of trials (%)")
    ax.set_ylabel("test accuracy")
    ax.set_ylim(0, 1.02)
    ax.invert_xaxis()
    ax.legend()
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_latency_figure(latencies: dict, path: str | Path) -> None:
    """Histogram of hold-onset detection latency; missed trials annotated."""
    detected = [v for v in latencies.values() if v is not None]
    missed = sum(1 for v in latencies.values() if v is None)
    fig, ax = plt.subplots(figsize=(6, 4))
    if detected:
        ax.hist(detected, bins=range(0, max(detected) + 2), color="tab:blue",
                edgecolor="black", alpha=0.8)
    ax.set_xlabel("detection latency (bins after hold onset)")
    ax.set_ylabel("trials")
    ax.set_title(f"{len(detected)} detected, {missed} missed")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
