"""Evaluation metrics: confusion matrices, accuracy, macro-F1, relaxed accuracy.

Confusion matrices are integer (K, K) arrays with true classes on rows and
predictions on columns, ordered like the class map (shape-major, size-minor).
Relaxed accuracy additionally credits predictions one class index away from
the truth when both classes share a shape group, i.e. same object shape at the
neighbouring size.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import DataError
from .pipeline import ClassMap


def confusion(pred: Sequence[int], true: Sequence[int], n_classes: int) -> np.ndarray:
    """Count (true, predicted) pairs into a (K, K) matrix; rows are truth."""
    pred = np.asarray(pred, dtype=np.int64)
    true = np.asarray(true, dtype=np.int64)
    if pred.shape != true.shape:
        raise DataError(f"length mismatch: {pred.shape} vs {true.shape}")
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    if pred.size == 0:
        return cm
    if pred.min() < 0 or pred.max() >= n_classes or true.min() < 0 or true.max() >= n_classes:
        raise DataError(f"label out of range [0, {n_classes})")
    np.add.at(cm, (true, pred), 1)
    return cm


def accuracy(cm: np.ndarray) -> float:
    cm = np.asarray(cm)
    total = cm.sum()
    if total <= 0:
        raise DataError("empty confusion matrix")
    return float(np.trace(cm) / total)


def per_class_prf(cm: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(precision, recall, f1) per class; zero denominators give zeros."""
    cm = np.asarray(cm, dtype=np.float64)
    diag = np.diag(cm)
    col = cm.sum(axis=0)
    row = cm.sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        precision = np.where(col > 0, diag / col, 0.0)
        recall = np.where(row > 0, diag / row, 0.0)
        denom = precision + recall
        f1 = np.where(denom > 0, 2.0 * precision * recall / denom, 0.0)
    return precision, recall, f1


def macro_f1(cm: np.ndarray) -> float:
    """Unweighted mean of per-class F1; zero-support classes count as 0."""
    cm = np.asarray(cm)
    if cm.sum() <= 0:
        raise DataError("empty confusion matrix")
    support = cm.sum(axis=1)
    if np.any(support == 0):
        warnings.warn(
            f"{int(np.sum(support == 0))} class(es) have zero support; their F1 counts as 0",
            stacklevel=2,
        )
    _, _, f1 = per_class_prf(cm)
    return float(f1.mean())


def relaxed_accuracy(cm: np.ndarray, class_map: ClassMap) -> float:
    """Accuracy counting one-size-off predictions within a shape group as hits."""
    if class_map is None:
        raise DataError("relaxed accuracy needs the class map for shape groups")
    cm = np.asarray(cm)
    k = cm.shape[0]
    if k != class_map.n_classes:
        raise DataError(
            f"confusion matrix has {k} classes, class map has {class_map.n_classes}"
        )
    total = cm.sum()
    if total <= 0:
        raise DataError("empty confusion matrix")
    hits = int(np.trace(cm))
    for t in range(k):
        for p in (t - 1, t + 1):
            if 0 <= p < k and class_map.shape_group_of(t) == class_map.shape_group_of(p):
                hits += int(cm[t, p])
    return float(hits / total)


def phase_rates(cm_binary: np.ndarray) -> tuple[float, float]:
    """(false_grasp_rate, false_rest_rate) from a 2x2 matrix with rest = class 0.

    False grasp is the unwanted-movement rate; false rest is unresponsiveness.
    Both are fractions of all decision steps.
    """
    cm = np.asarray(cm_binary)
    if cm.shape != (2, 2):
        raise DataError(f"phase_rates needs a 2x2 matrix, got {cm.shape}")
    total = cm.sum()
    if total <= 0:
        raise DataError("empty confusion matrix")
    return float(cm[0, 1] / total), float(cm[1, 0] / total)


@dataclass(frozen=True)
class MetricsReport:
    accuracy: float
    macro_f1: float
    relaxed_accuracy: Optional[float]
    per_class: list[dict]
    false_grasp_rate: Optional[float] = None
    false_rest_rate: Optional[float] = None

    def to_json_dict(self) -> dict:
        out = {
            "accuracy": self.accuracy,
            "macro_f1": self.macro_f1,
            "per_class": self.per_class,
        }
        if self.relaxed_accuracy is not None:
            out["relaxed_accuracy"] = self.relaxed_accuracy
        if self.false_grasp_rate is not None:
            out["false_grasp_rate"] = self.false_grasp_rate
            out["false_rest_rate"] = self.false_rest_rate
        return out


def build_report(
    cm: np.ndarray,
    class_map: Optional[ClassMap] = None,
    labels: Optional[Sequence[str]] = None,
) -> MetricsReport:
    """Full metric bundle for one confusion matrix.

    Pass the class map for classification tasks (enables relaxed accuracy);
    2x2 matrices additionally get the rest/grasp error-rate decomposition.
    """
    cm = np.asarray(cm)
    precision, recall, f1 = per_class_prf(cm)
    support = cm.sum(axis=1)
    names = list(labels) if labels is not None else [str(i) for i in range(cm.shape[0])]
    per_class = [
        {
            "label": names[i],
            "precision": float(precision[i]),
            "recall": float(recall[i]),
            "f1": float(f1[i]),
            "support": int(support[i]),
        }
        for i in range(cm.shape[0])
    ]
    relaxed = relaxed_accuracy(cm, class_map) if class_map is not None else None
    fg, fr = phase_rates(cm) if cm.shape == (2, 2) else (None, None)
    return MetricsReport(
        accuracy=accuracy(cm),
        macro_f1=macro_f1(cm),
        relaxed_accuracy=relaxed,
        per_class=per_class,
        false_grasp_rate=fg,
        false_rest_rate=fr,
    )


def write_confusion_csv(cm: np.ndarray, labels: Sequence[str], path: str | Path) -> None:
    """K+1 rows / columns: header row and column carry the class labels."""
    cm = np.asarray(cm)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["true\\pred", *labels])
        for i, label in enumerate(labels):
            writer.writerow([label, *[int(v) for v in cm[i]]])


def write_confusion_pgm(cm: np.ndarray, path: str | Path) -> None:
    """Plain-text PGM heatmap, max-count normalised, for quick inspection."""
    cm = np.asarray(cm, dtype=np.float64)
    peak = cm.max()
    gray = np.zeros_like(cm, dtype=np.int64) if peak <= 0 else np.rint(
        cm / peak * 255
    ).astype(np.int64)
    k = cm.shape[0]
    lines = [f"P2\n{k} {k}\n255\n"]
    for row in gray:
        lines.append(" ".join(str(int(v)) for v in row) + "\n")
    Path(path).write_text("".join(lines), encoding="utf-8")


def write_metrics_json(report: MetricsReport, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report.to_json_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
