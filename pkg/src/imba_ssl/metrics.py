"""Imbalance-aware evaluation: per-class recall, UAR, G-mean, one-vs-rest ROC/AUC."""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import MetricUndefinedError, ShapeError


@dataclass
class ConfusionMatrix:
    """counts[t][p] = number of samples of true class t predicted as p."""

    counts: np.ndarray

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.counts.ndim != 2 or self.counts.shape[0] != self.counts.shape[1]:
            raise ShapeError(f"confusion matrix must be square, got {self.counts.shape}")

    @property
    def n_classes(self) -> int:
        return self.counts.shape[0]

    def total(self) -> int:
        return int(self.counts.sum())


@dataclass
class MetricsReport:
    per_class_recall: list[float]
    uar: float
    g_mean: float
    per_class_auc: list[float | None]
    avg_auc: float

    def to_dict(self) -> dict:
        return {
            "per_class_recall": self.per_class_recall,
            "uar": self.uar,
            "g_mean": self.g_mean,
            "per_class_auc": self.per_class_auc,
            "avg_auc": self.avg_auc,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsReport":
        return cls(
            per_class_recall=list(d["per_class_recall"]),
            uar=float(d["uar"]),
            g_mean=float(d["g_mean"]),
            per_class_auc=[None if a is None else float(a) for a in d["per_class_auc"]],
            avg_auc=float(d["avg_auc"]),
        )


def confusion_matrix(preds, labels, n_classes: int) -> ConfusionMatrix:
    preds = np.asarray(preds, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if preds.shape != labels.shape or preds.ndim != 1:
        raise ShapeError(f"preds {preds.shape} and labels {labels.shape} must be equal-length vectors")
    if preds.size and (preds.max() >= n_classes or labels.max() >= n_classes
                       or preds.min() < 0 or labels.min() < 0):
        raise ShapeError("class indices out of range")
    counts = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(counts, (labels, preds), 1)
    return ConfusionMatrix(counts)


def per_class_recall(cm: ConfusionMatrix) -> np.ndarray:
    """Diagonal over row sums; a class with no true samples gets recall 0 (warned)."""
    counts = cm.counts
    supports = counts.sum(axis=1)
    recalls = np.zeros(cm.n_classes, dtype=np.float64)
    for c in range(cm.n_classes):
        if supports[c] == 0:
            warnings.warn(f"class {c} has no true samples; recall set to 0", stacklevel=2)
        else:
            recalls[c] = counts[c, c] / supports[c]
    return recalls


def uar(cm: ConfusionMatrix) -> float:
    """Unweighted average recall: plain mean of per-class recalls."""
    return float(per_class_recall(cm).mean())


def g_mean(cm: ConfusionMatrix) -> float:
    """Geometric mean of per-class recalls; exactly 0 if any class is never recovered."""
    recalls = per_class_recall(cm)
    if np.any(recalls == 0.0):
        return 0.0
    return float(np.exp(np.log(recalls).mean()))


def roc_curve(scores, positives) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Threshold-swept ROC points (thresholds, fpr, tpr).

    Thresholds are the distinct scores in descending order; ties move along a
    diagonal segment. The leading point is (inf, 0, 0) and the curve ends at
    (1, 1).
    """
    scores = np.asarray(scores, dtype=np.float64)
    positives = np.asarray(positives, dtype=bool)
    if scores.shape != positives.shape or scores.ndim != 1:
        raise ShapeError("scores and positives must be equal-length vectors")
    n_pos = int(positives.sum())
    n_neg = positives.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise MetricUndefinedError("ROC needs at least one positive and one negative sample")
    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    sorted_pos = positives[order]
    thresholds = [np.inf]
    tpr = [0.0]
    fpr = [0.0]
    tp = fp = 0
    i = 0
    n = scores.size
    while i < n:
        j = i
        while j < n and sorted_scores[j] == sorted_scores[i]:
            tp += int(sorted_pos[j])
            fp += int(not sorted_pos[j])
            j += 1
        thresholds.append(sorted_scores[i])
        tpr.append(tp / n_pos)
        fpr.append(fp / n_neg)
        i = j
    return np.asarray(thresholds), np.asarray(fpr), np.asarray(tpr)


def roc_auc(scores, positives) -> float:
    """Area under the ROC curve by trapezoidal integration.

    Equals P(score_pos > score_neg) + 0.5 P(tie) over all positive/negative
    pairs; the diagonal tie segments make the two formulations agree exactly.
    """
    _, fpr, tpr = roc_curve(scores, positives)
    return float(np.trapezoid(tpr, fpr))


def evaluate(model, dataset) -> MetricsReport:
    """Score a labeled dataset: argmax predictions for recall metrics, one-vs-rest
    class probabilities for per-class AUC (macro-averaged over defined classes)."""
    if dataset.labels is None:
        raise ShapeError("evaluate requires a labeled dataset")
    probs = model.forward_numpy(dataset.features)
    preds = np.argmax(probs, axis=1)
    n_classes = dataset.n_classes
    cm = confusion_matrix(preds, dataset.labels, n_classes)
    recalls = per_class_recall(cm)
    aucs: list[float | None] = []
    for c in range(n_classes):
        try:
            aucs.append(roc_auc(probs[:, c], dataset.labels == c))
        except MetricUndefinedError as err:
            warnings.warn(f"AUC undefined for class {c}: {err}", stacklevel=2)
            aucs.append(None)
    defined = [a for a in aucs if a is not None]
    avg_auc = float(np.mean(defined)) if defined else 0.0
    return MetricsReport(
        per_class_recall=[float(r) for r in recalls],
        uar=float(recalls.mean()),
        g_mean=g_mean(cm),
        per_class_auc=aucs,
        avg_auc=avg_auc,
    )


def write_roc_csv(model, dataset, path) -> None:
    """Export one-vs-rest ROC points for every class: class,threshold,fpr,tpr."""
    probs = model.forward_numpy(dataset.features)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["class", "threshold", "fpr", "tpr"])
        for c in range(dataset.n_classes):
            try:
                thresholds, fpr, tpr = roc_curve(probs[:, c], dataset.labels == c)
            except MetricUndefinedError:
                continue
            for t, f, r in zip(thresholds, fpr, tpr):
                writer.writerow([c, repr(float(t)), repr(float(f)), repr(float(r))])


def write_report_json(report: MetricsReport, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps(report.to_dict(), sort_keys=True, indent=2) + "\n")
