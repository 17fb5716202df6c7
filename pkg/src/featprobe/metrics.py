"""Reference classification metrics: accuracy, precision, recall, F1, AUC.

All functions are pure and operate on a ``PredictionBatch``. Conventions:

* division by zero in precision/recall/F1 yields 0 and is flagged, never
  hidden;
* AUC uses the rank (Mann-Whitney) form with midrank tie handling;
* macro averages are unweighted; one-vs-rest AUC skips classes absent
  from the true labels (flagged) and averages over the rest.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

BINARY_POSITIVE = "binary_positive"
MACRO = "macro"
BINARY = "binary"
MACRO_OVR = "macro_ovr"


@dataclass(frozen=True)
class PredictionBatch:
    """True labels, predicted labels, and row-stochastic class scores."""

    true_labels: np.ndarray
    predicted_labels: np.ndarray
    scores: np.ndarray

    def __post_init__(self) -> None:
        t = np.asarray(self.true_labels, dtype=np.int64)
        p = np.asarray(self.predicted_labels, dtype=np.int64)
        s = np.asarray(self.scores, dtype=np.float64)
        if t.ndim != 1 or p.ndim != 1 or s.ndim != 2:
            raise ValueError("expected 1-D labels and a 2-D score matrix")
        if not (len(t) == len(p) == len(s)):
            raise ValueError("true labels, predictions, and scores must have equal length")
        if len(t) == 0:
            raise ValueError("empty batch")
        if s.shape[1] < 2:
            raise ValueError("scores need at least 2 class columns")
        if not np.all(np.isfinite(s)):
            raise ValueError("scores must be finite")
        if np.abs(s.sum(axis=1) - 1.0).max() > 1e-6:
            raise ValueError("score rows must sum to 1 within 1e-6")
        if np.any(s.argmax(axis=1) != p):
            raise ValueError("predicted_labels must equal argmax(scores)")
        if t.min() < 0 or t.max() >= s.shape[1]:
            raise ValueError("true label out of range of the score columns")
        object.__setattr__(self, "true_labels", t)
        object.__setattr__(self, "predicted_labels", p)
        object.__setattr__(self, "scores", s)

    @property
    def num_classes(self) -> int:
        return int(self.scores.shape[1])


@dataclass(frozen=True)
class PrfScores:
    precision: float
    recall: float
    f1: float
    # Human-readable notes for every per-class division-by-zero that was
    # coerced to 0; empty means all denominators were positive.
    zero_division_flags: tuple[str, ...] = ()


@dataclass(frozen=True)
class AucScores:
    value: float
    # Classes skipped under macro_ovr because they never occur in true labels.
    skipped_classes: tuple[int, ...] = ()


def accuracy(batch: PredictionBatch) -> float:
    """Fraction of samples whose predicted label equals the true label."""
    return float(np.mean(batch.true_labels == batch.predicted_labels))


def _prf_one_class(true_pos: int, pred_count: int, true_count: int, name: str):
    flags = []
    if pred_count > 0:
        precision = true_pos / pred_count
    else:
        precision = 0.0
        flags.append(f"precision[{name}]: no predicted positives, coerced to 0")
    if true_count > 0:
        recall = true_pos / true_count
    else:
        recall = 0.0
        flags.append(f"recall[{name}]: no true positives, coerced to 0")
    if precision + recall > 0:
        f1 = 2 * precision * recall / (precision + recall)
    else:
        f1 = 0.0
        flags.append(f"f1[{name}]: precision + recall is 0, coerced to 0")
    return precision, recall, f1, flags


def prf1(batch: PredictionBatch, averaging: str = MACRO) -> PrfScores:
    """Precision, recall, and F1.

    ``binary_positive`` treats class 1 as the positive class and requires a
    2-class batch; ``macro`` averages the per-class scores unweighted over
    all score columns.
    """
    t, p = batch.true_labels, batch.predicted_labels
    if averaging == BINARY_POSITIVE:
        if batch.num_classes != 2:
            raise ValueError("binary_positive averaging requires exactly 2 classes")
        tp = int(np.sum((t == 1) & (p == 1)))
        prec, rec, f1, flags = _prf_one_class(tp, int(np.sum(p == 1)), int(np.sum(t == 1)), "1")
        return PrfScores(prec, rec, f1, tuple(flags))
    if averaging == MACRO:
        precs, recs, f1s, all_flags = [], [], [], []
        for c in range(batch.num_classes):
            tp = int(np.sum((t == c) & (p == c)))
            prec, rec, f1, flags = _prf_one_class(tp, int(np.sum(p == c)), int(np.sum(t == c)), str(c))
            precs.append(prec)
            recs.append(rec)
            f1s.append(f1)
            all_flags.extend(flags)
        return PrfScores(
            float(np.mean(precs)), float(np.mean(recs)), float(np.mean(f1s)), tuple(all_flags)
        )
    raise ValueError(f"unknown averaging {averaging!r}")


def _binary_auc(labels: np.ndarray, scores: np.ndarray) -> float:
    """P(random positive outranks random negative), ties credited 0.5."""
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    if len(pos) == 0 or len(neg) == 0:
        raise ValueError("binary AUC needs both classes present")
    # Midrank form: rank-sum of positives over all samples.
    order = np.concatenate([pos, neg])
    ranks = _midranks(order)
    rank_sum = ranks[: len(pos)].sum()
    n_pos, n_neg = len(pos), len(neg)
    return float((rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def _midranks(x: np.ndarray) -> np.ndarray:
    """1-based ranks with ties assigned the mean of their rank range."""
    order = np.argsort(x, kind="stable")
    ranks = np.empty(len(x), dtype=np.float64)
    sorted_x = x[order]
    i = 0
    while i < len(x):
        j = i
        while j + 1 < len(x) and sorted_x[j + 1] == sorted_x[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def auc(batch: PredictionBatch, averaging: str = MACRO_OVR) -> AucScores:
    """Area under the ROC curve.

    ``binary`` ranks samples by the class-1 score column of a 2-class
    batch. ``macro_ovr`` averages one-vs-rest binary AUCs unweighted over
    classes; classes with no true samples are skipped and flagged.
    """
    t = batch.true_labels
    if averaging == BINARY:
        if batch.num_classes != 2:
            raise ValueError("binary averaging requires exactly 2 classes")
        if len(np.unique(t)) < 2:
            raise ValueError("binary AUC needs both classes in the true labels")
        return AucScores(_binary_auc((t == 1).astype(np.int64), batch.scores[:, 1]))
    if averaging == MACRO_OVR:
        if len(np.unique(t)) < 2:
            raise ValueError("AUC needs at least 2 classes in the true labels")
        values, skipped = [], []
        for c in range(batch.num_classes):
            present = np.any(t == c)
            if not present or np.all(t == c):
                skipped.append(c)
                continue
            values.append(_binary_auc((t == c).astype(np.int64), batch.scores[:, c]))
        return AucScores(float(np.mean(values)), tuple(skipped))
    raise ValueError(f"unknown averaging {averaging!r}")
