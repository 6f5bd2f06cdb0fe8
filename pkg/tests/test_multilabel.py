import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ips_lab.ips import threshold_decision
from ips_lab.multilabel import (
    ConfusionMatrix,
    LimitRatioMatrix,
    Order,
    at_most,
    error_compare,
    limit_labels,
    pareto_compare,
    simplex_grid,
    weller_labels,
    weller_limit_partition,
    weller_partition,
)
from ips_lab.problem import ScoreDistribution

BP_D = ConfusionMatrix([[0.12, 0.15, 0.03], [0.15, 0.15, 0.0], [0.0, 0.0, 0.40]])
BP_D2 = ConfusionMatrix([[0.15, 0.05, 0.10], [0.15, 0.15, 0.0], [0.0, 0.0, 0.40]])
STEEP_LIMITS = LimitRatioMatrix([[1, math.inf, math.inf], [0, 1, 0.5], [0, 2, 1]])


def random_pair(rng, n):
    """Two confusion matrices with the same row marginals."""
    marg = rng.dirichlet(np.ones(n))
    a = rng.dirichlet(np.ones(n), size=n) * marg[:, None]
    b = rng.dirichlet(np.ones(n), size=n) * marg[:, None]
    return ConfusionMatrix(a / a.sum()), ConfusionMatrix(b / b.sum())


def test_blood_pressure_example():
    assert pareto_compare(BP_D, BP_D2) is Order.LESS
    assert error_compare(BP_D, BP_D2) is Order.INCOMPARABLE
    assert pareto_compare(BP_D, BP_D) is Order.EQUIVALENT
    assert error_compare(BP_D2, BP_D2) is Order.EQUIVALENT


def test_simple_orders():
    a = ConfusionMatrix([[0.2, 0.3], [0.4, 0.1]])
    b = ConfusionMatrix([[0.1, 0.4], [0.3, 0.2]])
    assert pareto_compare(a, b) is Order.INCOMPARABLE
    m = np.array(BP_D.entries)
    m[0, 1] -= 0.01
    m[0, 0] += 0.01
    better = ConfusionMatrix(m)
    assert error_compare(BP_D, better) is Order.LESS
    assert error_compare(better, BP_D) is Order.GREATER


def test_confusion_matrix_validation():
    for bad in ([[1.0]], [[0.5, 0.5], [0.1, -0.1]], [[0.5, 0.5], [0.1, 0.1]], [[0.5, 0.5, 0.0]]):
        with pytest.raises(ValueError):
            ConfusionMatrix(bad)
    with pytest.raises(ValueError):
        pareto_compare(BP_D, ConfusionMatrix([[0.5, 0.0], [0.0, 0.5]]))
    assert np.allclose(BP_D.marginals, [0.3, 0.3, 0.4])


def test_error_order_implies_pareto_order():
    rng = np.random.default_rng(0)
    hits = 0
    for _ in range(1000):
        n = int(rng.integers(2, 5))
        a, b = random_pair(rng, n)
        # push a towards b's errors often enough to exercise the implication
        if rng.uniform() < 0.5:
            e = np.array(b.entries)
            off = ~np.eye(n, dtype=bool)
            moved = e[off] * rng.uniform(0, 1, size=off.sum())
            e2 = e.copy()
            e2[off] -= moved
            e2[np.diag_indices(n)] += np.bincount(np.nonzero(off)[0], weights=moved, minlength=n)
            a, b = b, ConfusionMatrix(e2)
        if at_most(error_compare(a, b)):
            hits += 1
            assert at_most(pareto_compare(a, b))
    assert hits > 300


@pytest.mark.parametrize("seed", range(5))
def test_binary_orders_coincide(seed):
    rng = np.random.default_rng(seed)
    for _ in range(200):
        a, b = random_pair(rng, 2)
        assert pareto_compare(a, b) is error_compare(a, b)


def test_converse_fails_for_three_labels():
    assert at_most(pareto_compare(BP_D, BP_D2)) and not at_most(error_compare(BP_D, BP_D2))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31))
def test_preorder_axioms(seed):
    rng = np.random.default_rng(seed)
    n = 3
    marg = rng.dirichlet(np.ones(n))
    ms = [ConfusionMatrix((lambda m: m / m.sum())(rng.dirichlet(np.ones(n), size=n) * marg[:, None]))
          for _ in range(3)]
    for cmp in (pareto_compare, error_compare):
        assert all(cmp(m, m) is Order.EQUIVALENT for m in ms)
        a, b, c = ms
        if at_most(cmp(a, b)) and at_most(cmp(b, c)):
            assert at_most(cmp(a, c))


def test_weller_examples():
    w = (0.25, 0.25, 0.5)
    assert weller_labels(w, (0.25, 0.25, 0.5)).tolist() == [[True, True, True]]
    assert weller_labels((1 / 3, 1 / 3, 1 / 3), (0.5, 0.2, 0.3)).tolist() == [[True, False, False]]
    assert weller_labels(w, (0.5, 0.2, 0.3)).tolist() == [[True, False, False]]
    with pytest.raises(ValueError):
        weller_partition((0.5, 0.5, 0.0), 10)
    with pytest.raises(ValueError):
        weller_partition((0.3, 0.3), 10)


def test_limit_ratio_examples():
    assert limit_labels(STEEP_LIMITS, (0.2, 0.2, 0.6)).tolist() == [[False, False, True]]
    ones = LimitRatioMatrix(np.ones((3, 3)))
    assert limit_labels(ones, (0.4, 0.4, 0.2)).tolist() == [[True, True, False]]
    assert not limit_labels(ones, (0.0, 0.0, 1.0))[0, 0]
    assert limit_labels(STEEP_LIMITS, (1.0, 0.0, 0.0)).tolist() == [[True, False, False]]


def test_limit_ratio_validation_and_json():
    for bad in ([[1, 2], [2, 1]], [[1, 0], [0, 1]], [[2, 1], [1, 1]], [[1, -1], [-1, 1]]):
        with pytest.raises(ValueError):
            LimitRatioMatrix(bad)
    with pytest.raises(ValueError):
        LimitRatioMatrix([[1, 2, 1], [0.5, 1, 1], [1, 1, 1]])
    back = LimitRatioMatrix.from_json(STEEP_LIMITS.to_json())
    assert np.array_equal(back.R, STEEP_LIMITS.R)


def test_simplex_grid():
    pts = simplex_grid(3, 4)
    assert len(pts) == 15 and np.allclose(pts.sum(axis=1), 1.0)
    with pytest.raises(ValueError):
        simplex_grid(3, 1)


def test_finite_limits_agree_with_weights():
    for w in ((0.25, 0.25, 0.5), (0.1, 0.3, 0.6), (0.2, 0.8)):
        pts, a = weller_partition(w, 200 if len(w) == 3 else 400)
        _, b = weller_limit_partition(LimitRatioMatrix.from_weights(w), 200 if len(w) == 3 else 400)
        assert np.array_equal(a, b)


def test_limit_partition_never_empty():
    pts, labels = weller_limit_partition(STEEP_LIMITS, 120)
    assert labels.any(axis=1).all()


def test_binary_weller_is_threshold():
    rng = np.random.default_rng(4)
    for w1 in rng.uniform(0.05, 0.95, size=20):
        s = np.round(rng.uniform(size=50), 6)
        t = np.column_stack([s, 1 - s])
        labels = weller_labels((w1, 1 - w1), t)
        assert np.array_equal(labels[:, 0], s >= w1)
        # label 2 (the positive class in the binary view) mirrors a threshold at 1 - w1 on P(y2|x)
        dist = ScoreDistribution(1 - s, np.ones_like(s))
        lam = threshold_decision(dist, 1 - w1, 1.0).lam
        strict = np.abs(s - w1) > 1e-9
        order = np.argsort(1 - s, kind="stable")
        pos = np.empty_like(lam)
        pos[order] = lam
        assert np.all((pos == 1.0)[strict] == labels[strict, 1])
