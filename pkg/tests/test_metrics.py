import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ignnet.errors import ShapeError, UndefinedAUCError
from ignnet.metrics import auc_binary, auc_weighted, cosine, evaluation_auc, spearman_rho


def pair_count_auc(scores, labels):
    """O(n^2) oracle: fraction of (positive, negative) pairs ranked correctly."""
    pos = [s for s, l in zip(scores, labels) if l]
    neg = [s for s, l in zip(scores, labels) if not l]
    credit = 0.0
    for p, n in itertools.product(pos, neg):
        credit += 1.0 if p > n else 0.5 if p == n else 0.0
    return credit / (len(pos) * len(neg))


def rank_difference_rho(a, b):
    """Closed form for tie-free data."""
    n = len(a)
    ra = np.argsort(np.argsort(a))
    rb = np.argsort(np.argsort(b))
    d2 = float(((ra - rb) ** 2).sum())
    return 1.0 - 6.0 * d2 / (n * (n * n - 1))


def test_auc_examples():
    assert auc_binary([0.9, 0.8, 0.1], [1, 1, 0]) == 1.0
    assert auc_binary([0.5, 0.5], [1, 0]) == 0.5
    assert auc_binary([0.2, 0.6, 0.4, 0.8], [0, 1, 0, 1]) == 1.0
    assert auc_binary([0.2, 0.6, 0.7, 0.8], [0, 1, 0, 1]) == 0.75
    assert pair_count_auc([0.2, 0.6, 0.7, 0.8], [0, 1, 0, 1]) == 0.75


def test_auc_errors():
    with pytest.raises(UndefinedAUCError):
        auc_binary([0.1, 0.2], [1, 1])
    with pytest.raises(ShapeError):
        auc_binary([0.1, 0.2, 0.3], [1, 0])


def test_auc_matches_pair_counting_on_random_fixtures():
    rng = np.random.default_rng(7)
    for _ in range(1000):
        n = int(rng.integers(2, 40))
        labels = rng.integers(0, 2, size=n)
        labels[0], labels[1] = 0, 1
        # a small value pool forces plenty of ties
        scores = rng.integers(0, int(rng.integers(2, 8)), size=n) / 4.0
        assert auc_binary(scores, labels) == pair_count_auc(scores, labels)


# integer-valued inputs keep the transforms strictly increasing in floating point
@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(-1000, 1000), min_size=4, max_size=30), st.integers(0, 10_000))
def test_auc_invariant_under_increasing_transform(scores, seed):
    scores = np.array(scores, dtype=np.float64)
    labels = np.random.default_rng(seed).integers(0, 2, size=scores.size)
    labels[:2] = [0, 1]
    base = auc_binary(scores, labels)
    assert auc_binary(np.arctan(scores / 7.0) * 3 + 1, labels) == base
    assert base + auc_binary(scores, 1 - labels) == pytest.approx(1.0, abs=1e-15)


def test_weighted_auc():
    onehot = np.eye(3)[[0, 1, 2, 0, 1, 2]]
    assert auc_weighted(onehot, [0, 1, 2, 0, 1, 2]) == 1.0

    rng = np.random.default_rng(3)
    p = rng.random(20)
    labels = rng.integers(0, 2, 20)
    labels[:2] = [0, 1]
    assert auc_weighted(np.column_stack([1 - p, p]), labels) == pytest.approx(auc_binary(p, labels), abs=1e-15)

    scores = np.array([[0.7, 0.2, 0.1], [0.3, 0.4, 0.3], [0.2, 0.2, 0.6],
                       [0.5, 0.3, 0.2], [0.1, 0.8, 0.1], [0.4, 0.1, 0.5]])
    labels = np.array([0, 1, 2, 0, 0, 2])
    expected = sum((labels == c).sum() / 6 * pair_count_auc(scores[:, c], labels == c) for c in range(3))
    assert auc_weighted(scores, labels) == pytest.approx(expected, abs=1e-15)
    assert evaluation_auc(scores, labels) == auc_weighted(scores, labels)


def test_weighted_auc_absent_class():
    with pytest.raises(UndefinedAUCError):
        auc_weighted(np.full((4, 3), 1 / 3), [0, 1, 0, 1])


def test_spearman_examples():
    assert spearman_rho([1, 2, 3], [1, 2, 3]) == 1.0
    assert spearman_rho([1, 2, 3, 4], [4, 3, 2, 1]) == -1.0
    assert spearman_rho([1, 2, 3, 4], [1, 3, 2, 4]) == pytest.approx(0.8, abs=1e-15)
    assert rank_difference_rho([1, 2, 3, 4], [1, 3, 2, 4]) == pytest.approx(0.8, abs=1e-15)
    with pytest.raises(ShapeError):
        spearman_rho([1, 2], [1, 2, 3])


def test_spearman_matches_closed_form_tie_free():
    rng = np.random.default_rng(11)
    for _ in range(300):
        n = int(rng.integers(2, 50))
        a, b = rng.permutation(n) + 0.5, rng.normal(size=n)
        assert spearman_rho(a, b) == pytest.approx(rank_difference_rho(a, b), abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.integers(-50, 50), st.integers(-50, 50)), min_size=2, max_size=25))
def test_spearman_monotone_invariance(pairs):
    a, b = (np.array(v, dtype=np.float64) for v in zip(*pairs))
    assert spearman_rho(np.exp(a / 10), b ** 3) == pytest.approx(spearman_rho(a, b), abs=1e-12)


def test_cosine():
    assert cosine([1.0, 2.0], [1.0, 2.0]) == pytest.approx(1.0)
    assert cosine([1.0, 0.0], [0.0, 1.0]) == 0.0
    assert cosine([0.0, 0.0], [1.0, 2.0], with_flag=True) == (0.0, True)
    assert cosine([1.0, 1.0], [1.0, 2.0], with_flag=True)[1] is False
    with pytest.raises(ShapeError):
        cosine([1.0], [1.0])


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-10, 10), min_size=3, max_size=3), st.lists(st.floats(-10, 10), min_size=3, max_size=3),
       st.floats(0.01, 100))
def test_cosine_scale_invariance(a, b, k):
    a, b = np.array(a), np.array(b)
    assert cosine(a * k, b) == pytest.approx(cosine(a, b), abs=1e-12)
