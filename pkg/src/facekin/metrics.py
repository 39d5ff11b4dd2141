"""Ranking and accuracy metrics plus the evaluation report container."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import SingleClassError


def compute_auc(scores, labels) -> float:
    """Area under the ROC curve of `scores` against binary `labels`.

    Computed from midranks, which equals the Mann-Whitney statistic: the
    probability that a random positive outranks a random negative, with ties
    counting one half. Raises SingleClassError when only one class is
    present.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValueError("scores and labels must be equal-length 1-d arrays")
    if not np.all(np.isfinite(scores)):
        raise ValueError("scores contain non-finite values")
    n_pos = int(np.sum(labels == 1))
    n_neg = int(np.sum(labels == 0))
    if n_pos + n_neg != labels.size:
        raise ValueError("labels must be 0 or 1")
    if n_pos == 0 or n_neg == 0:
        raise SingleClassError("AUC needs both classes present")

    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(scores.size, dtype=np.float64)
    sorted_scores = scores[order]
    i = 0
    while i < scores.size:
        j = i
        while j + 1 < scores.size and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        # Midrank of the tie group spanning sorted positions i..j (1-based).
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    rank_sum = float(np.sum(ranks[labels == 1]))
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def compute_accuracy(predicted, labels) -> float:
    """Fraction of exact matches between predicted and true labels."""
    predicted = np.asarray(predicted)
    labels = np.asarray(labels)
    if predicted.shape != labels.shape:
        raise ValueError(
            f"length mismatch: {predicted.shape} predictions vs {labels.shape} labels"
        )
    if predicted.size == 0:
        raise ValueError("cannot compute accuracy of zero predictions")
    return float(np.mean(predicted == labels))


@dataclass
class ReportRow:
    """One scored unit (a clip or a whole video)."""

    level: str          # "clip" | "video"
    unit_id: str
    label: int
    p_fake: float
    predicted: int


@dataclass
class MetricsReport:
    """Evaluation summary. Headline accuracy/auc are video level."""

    accuracy: float
    auc: float
    clip_accuracy: float
    clip_auc: float
    n_real: int          # videos
    n_fake: int
    n_clips_real: int
    n_clips_fake: int
    rows: list[ReportRow] = field(default_factory=list)


def build_report(
    clip_ids, clip_labels, clip_p_fake, video_ids, video_labels, video_p_fake
) -> MetricsReport:
    """Assemble a MetricsReport from per-clip and per-video scores."""
    clip_labels = np.asarray(clip_labels)
    clip_p = np.asarray(clip_p_fake, dtype=np.float64)
    video_labels = np.asarray(video_labels)
    video_p = np.asarray(video_p_fake, dtype=np.float64)
    clip_pred = (clip_p > 0.5).astype(int)
    video_pred = (video_p > 0.5).astype(int)
    rows = [
        ReportRow("video", str(i), int(l), float(p), int(pr))
        for i, l, p, pr in zip(video_ids, video_labels, video_p, video_pred)
    ] + [
        ReportRow("clip", str(i), int(l), float(p), int(pr))
        for i, l, p, pr in zip(clip_ids, clip_labels, clip_p, clip_pred)
    ]
    return MetricsReport(
        accuracy=compute_accuracy(video_pred, video_labels),
        auc=compute_auc(video_p, video_labels),
        clip_accuracy=compute_accuracy(clip_pred, clip_labels),
        clip_auc=compute_auc(clip_p, clip_labels),
        n_real=int(np.sum(video_labels == 0)),
        n_fake=int(np.sum(video_labels == 1)),
        n_clips_real=int(np.sum(clip_labels == 0)),
        n_clips_fake=int(np.sum(clip_labels == 1)),
        rows=rows,
    )
