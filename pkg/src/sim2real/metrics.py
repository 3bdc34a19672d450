"""Segmentation and binary-prediction scoring: IoU tables, AUROC, log loss."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, ShapeError

PROB_EPS = 1e-7


@dataclass
class ConfusionMatrix:
    """Square count matrix; rows are ground truth, columns are prediction."""

    counts: np.ndarray

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.counts.ndim != 2 or self.counts.shape[0] != self.counts.shape[1]:
            raise ShapeError(f"confusion matrix must be square, got {self.counts.shape}")
        if (self.counts < 0).any():
            raise ContractError("confusion matrix counts must be nonnegative")

    @property
    def n_classes(self) -> int:
        return self.counts.shape[0]

    @staticmethod
    def from_masks(truth: np.ndarray, pred: np.ndarray, n_classes: int) -> "ConfusionMatrix":
        truth = np.asarray(truth).ravel()
        pred = np.asarray(pred).ravel()
        if truth.shape != pred.shape:
            raise ShapeError("truth and prediction must have the same number of pixels")
        counts = np.bincount(
            truth * n_classes + pred, minlength=n_classes * n_classes
        ).reshape(n_classes, n_classes)
        return ConfusionMatrix(counts)

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        return ConfusionMatrix(self.counts + other.counts)


@dataclass
class MiouResult:
    per_class: dict  # class index -> IoU on the 0..100 scale; scored classes only
    class_average: float
    global_average: float


def miou(cm: ConfusionMatrix) -> MiouResult:
    """Per-class IoU (x100), unweighted class average, and the ground-truth
    frequency weighted global average.

    Classes absent from both ground truth and prediction are excluded from
    everything; a class present on either side scores TP/(TP+FP+FN).
    """
    counts = cm.counts
    total = counts.sum()
    if total == 0:
        raise ContractError("confusion matrix is all zero; nothing was scored")
    tp = np.diag(counts).astype(np.float64)
    gt = counts.sum(axis=1).astype(np.float64)  # TP + FN
    pr = counts.sum(axis=0).astype(np.float64)  # TP + FP
    union = gt + pr - tp
    scored = union > 0
    iou = np.zeros(cm.n_classes)
    iou[scored] = 100.0 * tp[scored] / union[scored]
    per_class = {int(c): float(iou[c]) for c in np.flatnonzero(scored)}
    class_average = float(iou[scored].mean())
    weights = gt / gt.sum()
    global_average = float((weights * iou).sum())
    return MiouResult(per_class, class_average, global_average)


@dataclass
class ScoredLabels:
    """Parallel probability/label arrays, flattened over frames x primitives."""

    scores: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64).ravel()
        self.labels = np.asarray(self.labels).ravel()
        if self.scores.shape != self.labels.shape:
            raise ShapeError("scores and labels must have equal length")
        if not np.all((self.labels == 0) | (self.labels == 1)):
            raise ContractError("labels must be binary")


def auroc(scored: ScoredLabels) -> float:
    """P(score_pos > score_neg) + 0.5 P(tie), via midranks (exact)."""
    labels = scored.labels.astype(bool)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ContractError("auroc needs at least one positive and one negative")
    ranks = _midranks(scored.scores)
    u = ranks[labels].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def _midranks(scores: np.ndarray) -> np.ndarray:
    """1-based ranks; tied scores share the mean of their rank range."""
    order = np.argsort(scores, kind="stable")
    ranks = np.empty(scores.size, dtype=np.float64)
    sorted_scores = scores[order]
    i = 0
    while i < scores.size:
        j = i
        while j + 1 < scores.size and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def auroc_pair_counting(scored: ScoredLabels) -> float:
    """O(n^2) oracle: count positive-over-negative pairs directly."""
    pos = scored.scores[scored.labels.astype(bool)]
    neg = scored.scores[~scored.labels.astype(bool)]
    if pos.size == 0 or neg.size == 0:
        raise ContractError("auroc needs at least one positive and one negative")
    gt = (pos[:, None] > neg[None, :]).sum()
    eq = (pos[:, None] == neg[None, :]).sum()
    return float((gt + 0.5 * eq) / (pos.size * neg.size))


def log_loss(scored: ScoredLabels, eps: float = PROB_EPS) -> float:
    """Mean negative log likelihood with probabilities clamped to [eps, 1-eps]."""
    if scored.scores.size == 0:
        raise ContractError("log_loss needs at least one entry")
    p = np.clip(scored.scores, eps, 1.0 - eps)
    y = scored.labels
    return float(-(y * np.log(p) + (1 - y) * np.log1p(-p)).mean())


def report_rows_to_text(rows: list[dict]) -> str:
    """Aligned text table from a list of uniform dicts."""
    if not rows:
        return ""
    cols = list(rows[0].keys())
    cells = [[_fmt(r[c]) for c in cols] for r in rows]
    widths = [max(len(c), max(len(cr[i]) for cr in cells)) for i, c in enumerate(cols)]
    lines = ["  ".join(c.ljust(w) for c, w in zip(cols, widths))]
    lines.append("  ".join("-" * w for w in widths))
    for cr in cells:
        lines.append("  ".join(v.ljust(w) for v, w in zip(cr, widths)))
    return "\n".join(lines) + "\n"


def report_rows_to_jsonl(rows: list[dict]) -> str:
    return "".join(json.dumps(r, sort_keys=True) + "\n" for r in rows)


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.4f}"
    return str(v)
