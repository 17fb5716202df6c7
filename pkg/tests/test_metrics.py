import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from featprobe.metrics import (
    BINARY,
    BINARY_POSITIVE,
    MACRO,
    MACRO_OVR,
    PredictionBatch,
    accuracy,
    auc,
    prf1,
)


def _batch(true, scores):
    scores = np.asarray(scores, dtype=float)
    return PredictionBatch(np.asarray(true), scores.argmax(axis=1), scores)


def _binary_batch(true, pos_scores):
    pos = np.asarray(pos_scores, dtype=float)
    return _batch(true, np.column_stack([1 - pos, pos]))


def brute_force_auc(labels, scores):
    """Oracle: enumerate every positive-negative pair; ties earn 0.5."""
    pos = [s for l, s in zip(labels, scores) if l == 1]
    neg = [s for l, s in zip(labels, scores) if l == 0]
    total = 0.0
    for p in pos:
        for n in neg:
            if p > n:
                total += 1.0
            elif p == n:
                total += 0.5
    return total / (len(pos) * len(neg))


def random_batch(rng, max_n=12, n_classes=None, ties=True):
    n_classes = n_classes or int(rng.integers(2, 5))
    while True:
        n = int(rng.integers(2, max_n + 1))
        true = rng.integers(0, n_classes, size=n)
        if len(np.unique(true)) >= 2:
            break
    raw = rng.random((n, n_classes))
    if ties and rng.random() < 0.3:
        # Quantize to force score ties; keep rows strictly positive.
        raw = np.round(raw, 1) + 0.1
    scores = raw / raw.sum(axis=1, keepdims=True)
    return _batch(true, scores)


# -- accuracy ------------------------------------------------------------


def test_accuracy_perfect():
    assert accuracy(_binary_batch([0, 1, 1], [0.1, 0.9, 0.8])) == 1.0


def test_accuracy_all_wrong():
    assert accuracy(_binary_batch([1, 0], [0.1, 0.9])) == 0.0


def test_accuracy_hand_count():
    b = _binary_batch([0, 0, 1, 1], [0.2, 0.8, 0.9, 0.7])
    assert accuracy(b) == 0.75


def test_empty_batch_rejected():
    with pytest.raises(ValueError, match="empty"):
        _batch([], np.zeros((0, 2)))


def test_inconsistent_argmax_rejected():
    with pytest.raises(ValueError, match="argmax"):
        PredictionBatch(np.array([0]), np.array([0]), np.array([[0.2, 0.8]]))


# -- precision / recall / F1 ---------------------------------------------


def test_prf1_perfect_binary():
    r = prf1(_binary_batch([0, 1, 1], [0.1, 0.9, 0.8]), BINARY_POSITIVE)
    assert (r.precision, r.recall, r.f1) == (1.0, 1.0, 1.0)
    assert r.zero_division_flags == ()


def test_prf1_no_predicted_positives_flagged():
    r = prf1(_binary_batch([1, 1, 0], [0.1, 0.2, 0.3]), BINARY_POSITIVE)
    assert (r.precision, r.recall, r.f1) == (0.0, 0.0, 0.0)
    assert any("precision" in f for f in r.zero_division_flags)


def test_prf1_hand_count():
    # true [1,1,1,0], pred [1,0,1,1]: tp=2, predicted positives=3, true positives=3
    r = prf1(_binary_batch([1, 1, 1, 0], [0.9, 0.1, 0.8, 0.7]), BINARY_POSITIVE)
    assert r.precision == pytest.approx(2 / 3)
    assert r.recall == pytest.approx(2 / 3)
    assert r.f1 == pytest.approx(2 / 3)


def test_prf1_binary_positive_requires_two_classes():
    b = _batch([0, 1, 2], np.eye(3))
    with pytest.raises(ValueError, match="binary_positive"):
        prf1(b, BINARY_POSITIVE)


def test_prf1_macro_matches_manual_average():
    b = _batch([0, 1, 2, 2], [[0.8, 0.1, 0.1], [0.1, 0.8, 0.1], [0.8, 0.1, 0.1], [0.1, 0.1, 0.8]])
    r = prf1(b, MACRO)
    # class 0: tp=1 pred=2 true=1 -> p=.5 r=1; class 1: perfect; class 2: tp=1 pred=1 true=2
    assert r.precision == pytest.approx((0.5 + 1.0 + 1.0) / 3)
    assert r.recall == pytest.approx((1.0 + 1.0 + 0.5) / 3)


# -- AUC -------------------------------------------------------------------


def test_auc_perfectly_ordered():
    assert auc(_binary_batch([0, 0, 1, 1], [0.1, 0.2, 0.8, 0.9]), BINARY).value == 1.0


def test_auc_all_ties_is_half():
    assert auc(_binary_batch([0, 1, 0, 1], [0.5, 0.5, 0.5, 0.5]), BINARY).value == 0.5


def test_auc_hand_enumerated_third():
    b = _binary_batch([1, 0, 1, 1], [0.9, 0.8, 0.7, 0.2])
    assert auc(b, BINARY).value == pytest.approx(1 / 3)


def test_auc_macro_ovr_skips_absent_class():
    scores = np.array([[0.6, 0.3, 0.1], [0.2, 0.7, 0.1], [0.5, 0.4, 0.1], [0.3, 0.6, 0.1]])
    b = _batch([0, 1, 1, 0], scores)
    r = auc(b, MACRO_OVR)
    assert r.skipped_classes == (2,)
    assert 0.0 <= r.value <= 1.0


@settings(max_examples=200, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_binary_auc_equals_brute_force(seed):
    rng = np.random.default_rng(seed)
    b = random_batch(rng, n_classes=2)
    got = auc(b, BINARY).value
    expected = brute_force_auc(list(b.true_labels), list(b.scores[:, 1]))
    assert got == pytest.approx(expected, abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_macro_ovr_auc_equals_brute_force(seed):
    rng = np.random.default_rng(seed)
    b = random_batch(rng)
    r = auc(b, MACRO_OVR)
    per_class = []
    for c in range(b.num_classes):
        bin_labels = (b.true_labels == c).astype(int)
        if len(np.unique(bin_labels)) < 2:
            assert c in r.skipped_classes
            continue
        per_class.append(brute_force_auc(list(bin_labels), list(b.scores[:, c])))
    assert r.value == pytest.approx(float(np.mean(per_class)), abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_auc_invariant_under_monotone_transform(seed):
    rng = np.random.default_rng(seed)
    # Scores on a coarse grid: exact ties stay ties and distinct values
    # stay well separated through the (float) warp.
    n = int(rng.integers(4, 12))
    true = np.r_[0, 1, rng.integers(0, 2, size=n - 2)]
    s1 = rng.integers(0, 101, size=n) / 100.0
    before = auc(_batch(true, np.column_stack([1 - s1, s1])), BINARY).value
    w = _sigmoid_warp(s1)
    after = auc(_batch(true, np.column_stack([1 - w, w])), BINARY).value
    assert after == before


def _sigmoid_warp(x):
    # Strictly monotone map of (0,1) into (0,1).
    return 1.0 / (1.0 + np.exp(-(4 * x - 1)))


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_macro_metrics_invariant_under_label_permutation(seed):
    rng = np.random.default_rng(seed)
    # Tie-free scores: argmax tie-breaking is not permutation-equivariant.
    b = random_batch(rng, n_classes=3, ties=False)
    perm = rng.permutation(3)
    inv = np.argsort(perm)
    permuted = _batch(perm[b.true_labels], b.scores[:, inv])
    assert accuracy(permuted) == pytest.approx(accuracy(b))
    r0, r1 = prf1(b, MACRO), prf1(permuted, MACRO)
    assert (r1.precision, r1.recall, r1.f1) == pytest.approx((r0.precision, r0.recall, r0.f1))


def test_binary_macro_ovr_matches_binary_auc():
    rng = np.random.default_rng(3)
    for _ in range(25):
        b = random_batch(rng, n_classes=2)
        assert auc(b, MACRO_OVR).value == pytest.approx(auc(b, BINARY).value, abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_all_metric_outputs_in_unit_interval(seed):
    rng = np.random.default_rng(seed)
    b = random_batch(rng)
    r = prf1(b, MACRO)
    a = auc(b, MACRO_OVR)
    for value in (accuracy(b), r.precision, r.recall, r.f1, a.value):
        assert 0.0 <= value <= 1.0
