import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import distributions
from ips_lab.problem import (
    AtomDecision,
    GroupedProblem,
    GroupEntry,
    ProblemError,
    ScoreDistribution,
    base_rates,
    confusion_matrix,
    lift_to_slicing,
    operating_point,
    pushforward_from_dataset,
    slicing_operating_point,
)


def test_distribution_sorted_merged_normalised():
    d = ScoreDistribution([0.9, 0.3, 0.3 + 1e-14], [2, 1, 1])
    assert np.allclose(d.atoms(), [(0.3, 0.5), (0.9, 0.5)], atol=1e-15)
    assert not d.scores.flags.writeable


@pytest.mark.parametrize("scores,masses,msg", [
    ([], [], "no data"),
    ([1.2], [1.0], "invalid score"),
    ([0.5], [0.0], None),
    ([0.5], [-1.0], None),
])
def test_distribution_rejects_bad_input(scores, masses, msg):
    with pytest.raises(ProblemError, match=msg):
        ScoreDistribution(scores, masses)


def test_pushforward_examples():
    p = pushforward_from_dataset([(0.9, 1, "g"), (0.3, 1, "g")])
    assert np.allclose(p["g"].dist.atoms(), [(0.3, 0.5), (0.9, 0.5)], atol=1e-15)
    p = pushforward_from_dataset([(0.5, 2, "g"), (0.5, 3, "g")])
    assert p["g"].dist.atoms() == [(0.5, 1.0)]
    p = pushforward_from_dataset([(0.2, 1, "a"), (0.8, 3, "b")])
    assert p["a"].prior == pytest.approx(0.25) and p["b"].prior == pytest.approx(0.75)


@pytest.mark.parametrize("records,msg", [
    ([], "no data"),
    ([(1.5, 1, "g")], "invalid score"),
    ([(0.5, -1, "g")], "negative weight"),
])
def test_pushforward_errors(records, msg):
    with pytest.raises(ProblemError, match=msg):
        pushforward_from_dataset(records)


@pytest.mark.parametrize("atoms,rates", [
    ([(0.3, 0.5), (0.9, 0.5)], (0.4, 0.6)),
    ([(1.0, 1.0)], (0.0, 1.0)),
    ([(0.5, 1.0)], (0.5, 0.5)),
])
def test_base_rates(atoms, rates):
    assert base_rates(ScoreDistribution.from_atoms(atoms)) == pytest.approx(rates, abs=1e-15)


def test_operating_point_examples(two_point):
    assert operating_point(two_point, AtomDecision([0, 1])) == pytest.approx((0.35, 0.45))
    assert operating_point(two_point, AtomDecision([1, 1])) == pytest.approx((0.0, 0.6))
    assert operating_point(two_point, AtomDecision([0.5, 0.5])) == pytest.approx((0.2, 0.3))
    with pytest.raises(ProblemError):
        operating_point(two_point, AtomDecision([1, 1, 1]))


def test_deterministic_oracle_two_point(two_point):
    # the four deterministic decisions, evaluated by hand
    pts = {tuple(l): operating_point(two_point, AtomDecision(l)) for l in [(0, 0), (0, 1), (1, 0), (1, 1)]}
    assert pts[(0, 0)] == pytest.approx((0.4, 0.0))
    assert pts[(1, 0)] == pytest.approx((0.05, 0.15))


def test_confusion_matrix_totals(two_point):
    cm = confusion_matrix(two_point, AtomDecision([0.5, 1.0]))
    assert cm.sum() == pytest.approx(1.0)
    assert cm[1].sum() == pytest.approx(0.6)


def test_lift_examples(two_point):
    sl = lift_to_slicing(two_point, AtomDecision([0.0, 1.0]))
    assert slicing_operating_point(two_point, sl) == pytest.approx((0.35, 0.45), abs=1e-12)
    d = ScoreDistribution([0.4], [1.0])
    sl = lift_to_slicing(d, AtomDecision([0.25]))
    mm = sl.measure_matrix(d)
    assert mm[0, 0] == pytest.approx(0.75 * 0.6) and mm[1, 1] == pytest.approx(0.25 * 0.4)
    sl = lift_to_slicing(d, AtomDecision([1.0]))
    assert list(sl.intervals[0][1]) == [(0.0, 1.0)] and not sl.intervals[0][0]
    assert sl.is_partition()


@settings(max_examples=100, deadline=None)
@given(distributions(max_atoms=10), st.data())
def test_lift_matches_operating_point(dist, data):
    lam = data.draw(st.lists(st.floats(0, 1), min_size=len(dist), max_size=len(dist)))
    d = AtomDecision(lam)
    sl = lift_to_slicing(dist, d)
    assert sl.is_partition()
    assert np.allclose(slicing_operating_point(dist, sl), operating_point(dist, d), atol=1e-12, rtol=0)
    assert np.allclose(sl.measure_matrix(dist), confusion_matrix(dist, d), atol=1e-12, rtol=0)


@settings(max_examples=100, deadline=None)
@given(distributions(max_atoms=8), st.data(), st.floats(0, 1))
def test_operating_point_affine(dist, data, alpha):
    n = len(dist)
    l1 = np.array(data.draw(st.lists(st.floats(0, 1), min_size=n, max_size=n)))
    l2 = np.array(data.draw(st.lists(st.floats(0, 1), min_size=n, max_size=n)))
    mix = operating_point(dist, AtomDecision(np.clip(alpha * l1 + (1 - alpha) * l2, 0, 1)))
    a = np.array(operating_point(dist, AtomDecision(l1)))
    b = np.array(operating_point(dist, AtomDecision(l2)))
    assert np.allclose(mix, alpha * a + (1 - alpha) * b, atol=1e-12, rtol=0)


def test_merging_preserves_operating_points():
    rng = np.random.default_rng(3)
    raw_s = np.array([0.2, 0.2, 0.7, 0.7, 0.7])
    raw_m = np.array([0.1, 0.3, 0.2, 0.2, 0.2])
    merged = ScoreDistribution(raw_s, raw_m)
    assert len(merged) == 2
    for _ in range(50):
        lam = rng.uniform(size=5)
        tnr = np.sum((1 - lam) * raw_m * (1 - raw_s))
        tpr = np.sum(lam * raw_m * raw_s)
        # the same point on the merged atoms: mass-weighted average of lambdas per score
        lam_m = [np.dot(lam[:2], raw_m[:2]) / raw_m[:2].sum(), np.dot(lam[2:], raw_m[2:]) / raw_m[2:].sum()]
        assert np.allclose(operating_point(merged, AtomDecision(lam_m)), (tnr, tpr), atol=1e-12)


def test_grouped_problem_roundtrip_and_validation(two_point):
    p = GroupedProblem({"a": GroupEntry(0.25, two_point), "b": (0.75, two_point)})
    q = GroupedProblem.from_json_dict(p.to_json_dict())
    assert q == p and q.group_ids == ["a", "b"]
    assert p["a"].p1 == pytest.approx(0.6)
    with pytest.raises(ProblemError):
        GroupedProblem({"a": GroupEntry(0.5, two_point)})
    with pytest.raises(ProblemError):
        GroupedProblem.from_json_dict({"groups": {"a": {"atoms": [[0.5, 1]]}}})


def test_cherry_picks_definition(two_point):
    assert not AtomDecision([0, 1]).cherry_picks(two_point)
    assert AtomDecision([0.5, 0.5]).cherry_picks(two_point)
    assert AtomDecision([1, 0]).cherry_picks(two_point)
    assert not AtomDecision([0.5, 1]).cherry_picks(two_point)


def test_extreme_scores_flagged():
    assert ScoreDistribution([0.0, 0.5], [1, 1]).has_extreme_scores
    assert not ScoreDistribution([0.1, 0.5], [1, 1]).has_extreme_scores
