"""Metric computations, checked against hand values and sklearn."""

import numpy as np
import pytest

from colearn.data import Task
from colearn.metrics import (
    MetricSet,
    classify_outcome,
    compute_metrics,
    macro_f1,
    prediction_collapse_index,
)

CLS4 = Task("classification", 4)


class TestComputeMetrics:
    def test_perfect_predictions(self):
        y = np.array([0, 1, 2, 3, 1, 2])
        m = compute_metrics(y, y, CLS4)
        assert m.accuracy == 1.0 and m.f1 == 1.0
        assert np.array_equal(np.diag(m.confusion), np.bincount(y, minlength=4))
        assert m.confusion.sum() == len(y)

    def test_constant_predictor_on_balanced_four_classes(self):
        # One class gets F1 = 2*(0.25*1)/(1.25) = 0.4, the rest 0 -> macro 0.1.
        targets = np.array([0, 1, 2, 3] * 25)
        preds = np.zeros(100, dtype=int)
        m = compute_metrics(preds, targets, CLS4)
        assert m.accuracy == 0.25
        assert abs(m.f1 - 0.1) < 1e-12

    def test_confusion_rows_are_true_class_counts(self):
        targets = np.array([0, 0, 1, 2])
        preds = np.array([1, 0, 1, 0])
        m = compute_metrics(preds, targets, Task("classification", 3))
        assert np.array_equal(m.confusion.sum(axis=1), [2, 1, 1])
        assert m.accuracy == np.trace(m.confusion) / m.confusion.sum()

    def test_macro_f1_matches_sklearn(self):
        pytest.importorskip("sklearn")
        from sklearn.metrics import f1_score

        rng = np.random.default_rng(0)
        for _ in range(25):
            targets = rng.integers(0, 4, size=50)
            preds = rng.integers(0, 4, size=50)
            ours = compute_metrics(preds, targets, CLS4).f1
            theirs = f1_score(targets, preds, average="macro", labels=range(4), zero_division=0)
            assert abs(ours - theirs) < 1e-12

    def test_absent_class_contributes_zero(self):
        targets = np.array([0, 0, 1, 1])  # classes 2 and 3 absent everywhere
        preds = np.array([0, 0, 1, 1])
        m = compute_metrics(preds, targets, CLS4)
        assert abs(m.f1 - 0.5) < 1e-12  # two perfect classes, two zeros, averaged over 4

    def test_regression_mae_zero_on_equal(self):
        y = np.array([0.5, -1.0, 2.0])
        m = compute_metrics(y, y.copy(), Task("regression"))
        assert m.mae == 0.0 and m.accuracy == 1.0

    def test_regression_sign_binarization(self):
        preds = np.array([0.3, -0.2, 1.5, -0.7])
        targets = np.array([1.0, 2.0, -0.5, -2.0])
        m = compute_metrics(preds, targets, Task("regression"))
        assert m.accuracy == 0.5  # signs agree on first and last
        assert m.confusion.shape == (2, 2)
        assert abs(m.mae - np.abs(preds - targets).mean()) < 1e-12

    def test_length_mismatch_and_empty(self):
        with pytest.raises(ValueError):
            compute_metrics(np.array([0]), np.array([0, 1]), CLS4)
        with pytest.raises(ValueError):
            compute_metrics(np.array([]), np.array([]), CLS4)


class TestClassifyOutcome:
    def cls_metrics(self, accuracy):
        return MetricSet(accuracy=accuracy, f1=accuracy)

    def test_two_point_gain_labels_pcl(self):
        outcome = classify_outcome(self.cls_metrics(0.47), self.cls_metrics(0.45))
        assert outcome.label == "PCL" and abs(outcome.margin - 2.0) < 1e-9

    def test_large_deficit_labels_ncl(self):
        outcome = classify_outcome(self.cls_metrics(0.27), self.cls_metrics(0.45))
        assert outcome.label == "NCL" and abs(outcome.margin + 18.0) < 1e-9

    def test_equal_metrics_are_neutral(self):
        assert classify_outcome(self.cls_metrics(0.4), self.cls_metrics(0.4)).label == "NeCL"

    def test_margin_within_tolerance_is_neutral(self):
        assert classify_outcome(self.cls_metrics(0.405), self.cls_metrics(0.40)).label == "NeCL"

    def test_invariant_under_constant_shift(self):
        for shift in (0.0, 0.1, 0.3):
            outcome = classify_outcome(self.cls_metrics(0.30 + shift), self.cls_metrics(0.27 + shift))
            assert outcome.label == "PCL"
            assert abs(outcome.margin - 3.0) < 1e-9

    def test_regression_uses_mae_lower_is_better(self):
        multi = MetricSet(accuracy=0.7, f1=0.7, mae=1.058)
        uni = MetricSet(accuracy=0.7, f1=0.7, mae=1.074)
        outcome = classify_outcome(multi, uni)
        assert outcome.label == "PCL" and abs(outcome.margin - 0.016) < 1e-12

    def test_regression_tie_band(self):
        multi = MetricSet(accuracy=0.7, f1=0.7, mae=1.001)
        uni = MetricSet(accuracy=0.7, f1=0.7, mae=1.000)
        assert classify_outcome(multi, uni).label == "NeCL"


class TestCollapseIndex:
    def test_balanced_diagonal_is_one_over_k(self):
        confusion = np.eye(4, dtype=int) * 10
        assert prediction_collapse_index(confusion) == 0.25

    def test_single_predicted_column_is_total_collapse(self):
        confusion = np.zeros((4, 4), dtype=int)
        confusion[:, 2] = [5, 7, 3, 5]
        assert prediction_collapse_index(confusion) == 1.0

    def test_empty_confusion_rejected(self):
        with pytest.raises(ValueError):
            prediction_collapse_index(np.zeros((3, 3), dtype=int))
