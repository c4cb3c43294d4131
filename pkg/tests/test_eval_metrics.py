import json

import numpy as np
import pytest

from components.dvs_events import Label
from components.eval_metrics import (
    ConfusionCounts,
    MetricsError,
    RocCurve,
    auc,
    confusion,
    merge_counts,
    roc_from_scores,
    write_roc_csv,
    write_summary_json,
)


def _concordance(scores, labels):
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    greater = (pos[:, None] > neg[None, :]).sum()
    ties = (pos[:, None] == neg[None, :]).sum()
    return (greater + 0.5 * ties) / (len(pos) * len(neg))


def test_auc_of_a_small_example():
    curve = roc_from_scores([0.9, 0.8, 0.7, 0.6], [1, 0, 1, 0])
    assert curve.auc == pytest.approx(0.75)
    assert curve.points.tolist() == [
        [0.0, 0.0],
        [0.0, 0.5],
        [0.5, 0.5],
        [0.5, 1.0],
        [1.0, 1.0],
    ]
    assert np.isinf(curve.thresholds[0])
    assert curve.thresholds[1:].tolist() == [0.9, 0.8, 0.7, 0.6]


def test_perfect_and_inverted_separation():
    assert roc_from_scores([3, 2, 1, 0], [1, 1, 0, 0]).auc == 1.0
    assert roc_from_scores([3, 2, 1, 0], [0, 0, 1, 1]).auc == 0.0


def test_tied_scores_cross_together():
    curve = roc_from_scores([1, 1, 1, 1], [1, 0, 1, 0])
    assert curve.points.tolist() == [[0.0, 0.0], [1.0, 1.0]]
    assert curve.auc == 0.5


def test_auc_equals_concordance():
    rng = np.random.default_rng(0)
    for _ in range(100):
        labels = rng.integers(0, 2, size=1000)
        if labels.min() == labels.max():
            continue
        scores = rng.integers(-20, 20, size=1000).astype(np.float64)
        curve = roc_from_scores(scores, labels)
        assert abs(curve.auc - _concordance(scores, labels)) <= 1e-12
        assert abs(roc_from_scores(-scores, labels).auc - (1.0 - curve.auc)) <= 1e-12
        assert np.all(np.diff(curve.fpr) >= 0)
        assert np.all(np.diff(curve.tpr) >= 0)


def test_roc_rejects_bad_inputs():
    with pytest.raises(MetricsError):
        roc_from_scores([1, 2], [1, 1])
    with pytest.raises(MetricsError):
        roc_from_scores([1, 2, 3], [1, 0])
    with pytest.raises(MetricsError):
        roc_from_scores([1, 2], [1, Label.UNLABELED])


def test_confusion_counts():
    counts = confusion([True, True, False, False, True], [1, 0, 0, 1, 1])
    assert counts == ConfusionCounts(tp=2, fp=1, tn=1, fn=1)
    assert counts.tpr == pytest.approx(2 / 3)
    assert counts.fpr == 0.5
    assert counts.accuracy == 0.6
    assert counts.total == 5


def test_confusion_accepts_label_predictions():
    predictions = np.array([Label.SIGNAL, Label.NOISE, Label.SIGNAL])
    assert confusion(predictions, [1, 1, 0]) == ConfusionCounts(tp=1, fp=1, tn=0, fn=1)


def test_confusion_errors_and_empty_classes():
    with pytest.raises(MetricsError):
        confusion([True], [1, 0])
    with pytest.raises(MetricsError):
        confusion([True], [Label.UNLABELED])
    only_noise = confusion([False, True], [0, 0])
    assert only_noise.tpr == 0.0
    assert only_noise.fpr == 0.5


def test_merge_counts():
    shards = [ConfusionCounts(1, 2, 3, 4), ConfusionCounts(10, 20, 30, 40)]
    assert merge_counts(shards) == ConfusionCounts(11, 22, 33, 44)
    assert merge_counts([]) == ConfusionCounts()


def test_from_points_sorts_and_anchors():
    curve = RocCurve.from_points([(0.5, 0.8), (0.1, 0.4)], thresholds=[1000, 10])
    assert curve.points.tolist() == [[0.0, 0.0], [0.1, 0.4], [0.5, 0.8], [1.0, 1.0]]
    assert curve.thresholds[1:3].tolist() == [10, 1000]
    assert np.isnan(curve.thresholds[0])
    assert auc(curve) == pytest.approx(0.02 + 0.24 + 0.45)


def test_curve_validation():
    with pytest.raises(MetricsError):
        RocCurve(np.array([[0.0, 0.0], [1.0, 1.5]]), np.array([1.0, 0.0]))
    with pytest.raises(MetricsError):
        RocCurve(np.array([[0.0, 0.0]]), np.array([1.0, 0.0]))


def test_write_roc_csv(tmp_path):
    curve = roc_from_scores([2, 1], [1, 0])
    path = tmp_path / "roc.csv"
    write_roc_csv(curve, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "threshold,fpr,tpr"
    assert lines[1:] == ["inf,0.0,0.0", "2.0,0.0,1.0", "1.0,1.0,1.0"]


def test_write_summary_json(tmp_path):
    path = tmp_path / "summary.json"
    write_summary_json(path, 0.875, ConfusionCounts(3, 1, 2, 1), filter="stcf")
    summary = json.loads(path.read_text())
    assert summary["auc"] == 0.875
    assert summary["counts"] == {"tp": 3, "fp": 1, "tn": 2, "fn": 1}
    assert summary["tpr"] == 0.75
    assert summary["filter"] == "stcf"
