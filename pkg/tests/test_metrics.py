"""Ranking metrics: AUC, accuracy, and the evaluation report."""

import numpy as np
import pytest

from facekin.errors import SingleClassError
from facekin.metrics import build_report, compute_accuracy, compute_auc

from _oracles import pairwise_auc


def test_auc_pinned_values():
    scores = [0.1, 0.4, 0.35, 0.8]
    labels = [0, 0, 1, 1]
    # pairs: (0.35 vs 0.1) win, (0.35 vs 0.4) loss, (0.8 vs both) wins -> 3/4
    assert compute_auc(scores, labels) == pytest.approx(0.75, abs=1e-15)


def test_auc_perfect_separation():
    scores = [0.0, 0.1, 0.2, 0.9, 0.95, 1.0]
    labels = [0, 0, 0, 1, 1, 1]
    assert compute_auc(scores, labels) == pytest.approx(1.0, abs=1e-15)
    assert compute_auc(scores, [1 - l for l in labels]) == pytest.approx(
        0.0, abs=1e-15
    )


def test_auc_all_scores_equal_is_half():
    scores = np.full(10, 0.5)
    labels = np.array([0, 1] * 5)
    assert compute_auc(scores, labels) == pytest.approx(0.5, abs=1e-15)


def test_auc_matches_pairwise_oracle_with_ties():
    rng = np.random.default_rng(0)
    for trial in range(20):
        n = int(rng.integers(4, 40))
        # quantize to force frequent ties
        scores = np.round(rng.random(n), 1)
        labels = rng.integers(0, 2, size=n)
        if labels.min() == labels.max():
            labels[0] = 1 - labels[0]
        assert compute_auc(scores, labels) == pytest.approx(
            pairwise_auc(scores, labels), abs=1e-12
        )


def test_auc_invariant_to_monotone_transform():
    rng = np.random.default_rng(1)
    scores = rng.random(30)
    labels = rng.integers(0, 2, size=30)
    labels[0], labels[1] = 0, 1
    base = compute_auc(scores, labels)
    assert compute_auc(10.0 * scores - 3.0, labels) == pytest.approx(base, abs=1e-12)
    assert compute_auc(np.exp(scores), labels) == pytest.approx(base, abs=1e-12)


def test_auc_label_flip_complements():
    rng = np.random.default_rng(2)
    scores = rng.random(25)
    labels = rng.integers(0, 2, size=25)
    labels[0], labels[1] = 0, 1
    a = compute_auc(scores, labels)
    b = compute_auc(scores, 1 - labels)
    assert a + b == pytest.approx(1.0, abs=1e-12)


def test_auc_single_class_raises():
    with pytest.raises(SingleClassError):
        compute_auc([0.1, 0.2], [1, 1])
    with pytest.raises(SingleClassError):
        compute_auc([0.1, 0.2], [0, 0])


def test_auc_input_validation():
    with pytest.raises(ValueError):
        compute_auc([0.1, 0.2], [0, 1, 1])
    with pytest.raises(ValueError):
        compute_auc([0.1, np.nan], [0, 1])
    with pytest.raises(ValueError):
        compute_auc([0.1, 0.2], [0, 2])


def test_accuracy_values():
    assert compute_accuracy([0, 1, 1, 0], [0, 1, 0, 0]) == pytest.approx(0.75)
    assert compute_accuracy([1, 1], [1, 1]) == 1.0
    assert compute_accuracy([1, 1], [0, 0]) == 0.0
    with pytest.raises(ValueError):
        compute_accuracy([], [])
    with pytest.raises(ValueError):
        compute_accuracy([0, 1], [0])


def test_build_report_counts_and_rows():
    report = build_report(
        clip_ids=["a0", "a1", "b0"],
        clip_labels=[0, 0, 1],
        clip_p_fake=[0.1, 0.2, 0.9],
        video_ids=["a", "b"],
        video_labels=[0, 1],
        video_p_fake=[0.15, 0.9],
    )
    assert report.accuracy == 1.0
    assert report.auc == 1.0
    assert report.clip_accuracy == 1.0
    assert report.clip_auc == 1.0
    assert (report.n_real, report.n_fake) == (1, 1)
    assert (report.n_clips_real, report.n_clips_fake) == (2, 1)
    levels = [r.level for r in report.rows]
    assert levels == ["video", "video", "clip", "clip", "clip"]
    video_row = report.rows[1]
    assert video_row.unit_id == "b"
    assert video_row.predicted == 1


def test_build_report_threshold_is_strict():
    # p_fake exactly 0.5 counts as real
    report = build_report(
        clip_ids=["a0", "b0"],
        clip_labels=[0, 1],
        clip_p_fake=[0.5, 0.6],
        video_ids=["a", "b"],
        video_labels=[0, 1],
        video_p_fake=[0.5, 0.6],
    )
    assert report.rows[0].predicted == 0
    assert report.accuracy == 1.0
