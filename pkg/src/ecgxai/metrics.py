"""Classification metrics: confusion matrices and macro one-vs-rest scores.

Each class is scored against the rest (TP, FN, FP, TN read off the
confusion matrix), then the per-class accuracies, F1s, sensitivities, and
specificities are averaged without support weighting. Degenerate ratios
(empty denominators) count as 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def confusion_matrix(y_true: np.ndarray, y_pred: np.ndarray, n_classes: int) -> np.ndarray:
    """Rows are true classes, columns predicted."""
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.shape != y_pred.shape:
        raise ValueError(f"label shapes differ: {y_true.shape} vs {y_pred.shape}")
    if len(y_true) == 0:
        raise ValueError("empty label set")
    if y_true.min() < 0 or y_true.max() >= n_classes or y_pred.min() < 0 or y_pred.max() >= n_classes:
        raise ValueError(f"labels out of range for {n_classes} classes")
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (y_true, y_pred), 1)
    return cm


def _safe_div(num: float, den: float) -> float:
    return num / den if den > 0 else 0.0


@dataclass(frozen=True)
class ClassMetrics:
    accuracy: float
    f1: float
    sensitivity: float
    specificity: float
    precision: float


def per_class_metrics(cm: np.ndarray) -> list[ClassMetrics]:
    cm = np.asarray(cm, dtype=np.float64)
    n = cm.shape[0]
    total = cm.sum()
    out = []
    for c in range(n):
        tp = cm[c, c]
        fn = cm[c, :].sum() - tp
        fp = cm[:, c].sum() - tp
        tn = total - tp - fn - fp
        sens = _safe_div(tp, tp + fn)
        prec = _safe_div(tp, tp + fp)
        out.append(ClassMetrics(
            accuracy=_safe_div(tp + tn, total),
            f1=_safe_div(2 * tp, 2 * tp + fp + fn),
            sensitivity=sens,
            specificity=_safe_div(tn, tn + fp),
            precision=prec,
        ))
    return out


@dataclass(frozen=True)
class EvalReport:
    """Aggregate scores for one evaluation pass."""

    confusion: np.ndarray
    accuracy: float
    macro_f1: float
    macro_sensitivity: float
    macro_specificity: float
    per_class: tuple[ClassMetrics, ...] = field(repr=False)

    @property
    def n_records(self) -> int:
        return int(self.confusion.sum())


def evaluate_predictions(y_true: np.ndarray, y_pred: np.ndarray, n_classes: int) -> EvalReport:
    cm = confusion_matrix(y_true, y_pred, n_classes)
    return report_from_confusion(cm)


def report_from_confusion(cm: np.ndarray) -> EvalReport:
    per_class = per_class_metrics(cm)
    cm = np.asarray(cm)
    return EvalReport(
        confusion=cm,
        accuracy=_safe_div(float(np.trace(cm)), float(cm.sum())),
        macro_f1=float(np.mean([m.f1 for m in per_class])),
        macro_sensitivity=float(np.mean([m.sensitivity for m in per_class])),
        macro_specificity=float(np.mean([m.specificity for m in per_class])),
        per_class=tuple(per_class),
    )
