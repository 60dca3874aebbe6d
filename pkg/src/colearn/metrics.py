"""Evaluation metrics and the co-learning outcome taxonomy."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import CLASSIFICATION, Task


@dataclass
class MetricSet:
    accuracy: float
    f1: float
    mae: float | None = None
    confusion: np.ndarray | None = None  # rows = true class, cols = predicted


@dataclass
class CoLearningOutcome:
    """Label for a multimodal-vs-unimodal comparison on unimodal test data.

    ``margin`` is the multimodal arm's primary-metric advantage: accuracy
    percentage points for classification, MAE reduction for regression.
    Within ``tie_tolerance`` of zero the arms count as performing the same.
    """

    label: str  # "PCL" | "NCL" | "NeCL"
    margin: float
    tie_tolerance: float


def confusion_matrix(targets: np.ndarray, predictions: np.ndarray, num_classes: int) -> np.ndarray:
    counts = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(counts, (targets, predictions), 1)
    return counts


def macro_f1(confusion: np.ndarray) -> float:
    """Unweighted mean of per-class F1; classes with no support on either
    side contribute 0."""
    tp = np.diag(confusion).astype(np.float64)
    predicted = confusion.sum(axis=0).astype(np.float64)
    actual = confusion.sum(axis=1).astype(np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        precision = np.where(predicted > 0, tp / predicted, 0.0)
        recall = np.where(actual > 0, tp / actual, 0.0)
        denom = precision + recall
        f1 = np.where(denom > 0, 2.0 * precision * recall / denom, 0.0)
    return float(f1.mean())


def compute_metrics(predictions, targets, task: Task) -> MetricSet:
    predictions = np.asarray(predictions)
    targets = np.asarray(targets)
    if predictions.shape != targets.shape:
        raise ValueError(f"predictions {predictions.shape} and targets {targets.shape} differ in length")
    if predictions.size == 0:
        raise ValueError("empty input")

    if task.kind == CLASSIFICATION:
        k = task.num_classes
        pred = predictions.astype(np.int64)
        true = targets.astype(np.int64)
        if pred.min() < 0 or pred.max() >= k or true.min() < 0 or true.max() >= k:
            raise ValueError(f"class index outside [0, {k})")
        confusion = confusion_matrix(true, pred, k)
        accuracy = float(np.trace(confusion)) / float(confusion.sum())
        return MetricSet(accuracy=accuracy, f1=macro_f1(confusion), mae=None, confusion=confusion)

    # Regression: MAE plus sign-binarized accuracy/F1 (>= 0 counts as the
    # positive class), the usual sentiment convention.
    mae = float(np.abs(predictions - targets).mean())
    pred_sign = (predictions >= 0).astype(np.int64)
    true_sign = (targets >= 0).astype(np.int64)
    confusion = confusion_matrix(true_sign, pred_sign, 2)
    accuracy = float(np.trace(confusion)) / float(confusion.sum())
    return MetricSet(accuracy=accuracy, f1=macro_f1(confusion), mae=mae, confusion=confusion)


def classify_outcome(multi: MetricSet, uni: MetricSet, tie_tolerance: float | None = None) -> CoLearningOutcome:
    """Compare arms on the primary metric; positive margins favor the
    multimodal arm. Defaults: 1.0 accuracy point, or 0.005 MAE."""
    regression = multi.mae is not None and uni.mae is not None
    if regression:
        tol = 0.005 if tie_tolerance is None else tie_tolerance
        margin = uni.mae - multi.mae  # lower MAE is better
    else:
        tol = 1.0 if tie_tolerance is None else tie_tolerance
        margin = (multi.accuracy - uni.accuracy) * 100.0
    if margin > tol:
        label = "PCL"
    elif margin < -tol:
        label = "NCL"
    else:
        label = "NeCL"
    return CoLearningOutcome(label=label, margin=margin, tie_tolerance=tol)


def prediction_collapse_index(confusion: np.ndarray) -> float:
    """Share of predictions landing in the single most-predicted class;
    1.0 means the model only ever outputs one class."""
    confusion = np.asarray(confusion)
    total = confusion.sum()
    if total <= 0:
        raise ValueError("empty confusion matrix")
    return float(confusion.sum(axis=0).max()) / float(total)
