import numpy as np
import pytest

from ips_lab.cherrypick import (
    ForcedCherryConfig,
    _cell_problem,
    _cell_spec,
    _reduced_problem,
    cap_grid,
    default_cp_tol,
    detect,
    max_precision,
    oracle_confirms,
    ray_crossing,
    reduce_base,
    theorem6_replication,
    theorem8_search,
    tradeoff_sweep,
)
from ips_lab.generators import GeneratorConfig, generate, make_battery
from ips_lab.ips import contains, ips_from_distribution
from ips_lab.metrics import Precision, SaturatingLinear
from ips_lab.problem import GroupedProblem, GroupEntry, ScoreDistribution
from ips_lab.solver import FairnessProblemSpec, OperatingPointPair, SolveResult, solve_grid, solve_thresholds

CFG = ForcedCherryConfig()


def _result(problem, pairs):
    spec = FairnessProblemSpec("accuracy", "dp", 1.0)
    opt = [OperatingPointPair(a, b, 0.0, 0.0) for a, b in pairs]
    return SolveResult(tuple(problem.group_ids), spec, 0.0, opt, 1 / 256, 0.0, len(opt))


def test_detect_examples(twin_pair):
    rep = detect(twin_pair, _result(twin_pair, [((0.35, 0.45), (0.0, 0.6))]))
    assert not rep.cherry_picks[0] and rep.exists_clean and not rep.all_cherry_pick
    rep = detect(twin_pair, _result(twin_pair, [((0.35, 0.30), (0.35, 0.45))]))
    assert rep.frontier_dist[0, 0] == pytest.approx(0.15)
    assert rep.cherry_picks[0] and rep.all_cherry_pick and not rep.exists_clean
    assert rep.cp_tol == default_cp_tol(1 / 256) == pytest.approx(4 / 256)
    with pytest.raises(ValueError, match="no optima"):
        detect(twin_pair, _result(twin_pair, []))


def test_identical_groups_clean(twin_pair):
    res = solve_grid(twin_pair, FairnessProblemSpec("accuracy", "dp", 10.0), 1 / 128)
    assert detect(twin_pair, res).exists_clean


def test_threshold_solutions_never_cherry_pick():
    for p in make_battery(4, seed=1):
        for fid in ("dp", "predictive_parity"):
            res = solve_thresholds(p, FairnessProblemSpec("precision", fid, 4.0))
            rep = detect(p, res, cp_tol=1e-9)
            assert not rep.cherry_picks.any()


def test_replication_small():
    two_point = ScoreDistribution([0.3, 0.9], [0.5, 0.5])
    same = GroupedProblem({"a": GroupEntry(0.5, two_point), "b": GroupEntry(0.5, two_point)})
    summary = theorem6_replication([same], ["accuracy"], [5.0], h=1 / 64, fairness=("dp",))
    assert summary.all_clean and len(summary.cells) == 1
    summary = theorem6_replication(make_battery(2, seed=4), ["accuracy", "precision"], [0.5, 8.0], h=1 / 64)
    assert len(summary.cells) == 2 * 2 * 2 * 3
    assert summary.all_clean and summary.failures == []
    with pytest.raises(ValueError):
        theorem6_replication([], ["accuracy"], [1.0])


def test_equal_base_rate_eo_trivial_pair():
    base = GeneratorConfig("binned_density", bins=6, density="tent")
    p = generate(GeneratorConfig("adversarial_pair", base=base, coarse_bins=2, gamma=0.5, eps_prime=0.3))
    res = solve_grid(p, FairnessProblemSpec("accuracy", "eo", 1000.0), 1 / 64)
    assert detect(p, res).exists_clean


def test_ray_crossing_has_requested_precision():
    prob = _cell_problem(CFG, 0.5, 0.1)
    for gid in ("A0", "A1"):
        g = ips_from_distribution(prob[gid].dist)
        for q in np.linspace(g.p1 + 1e-3, max_precision(g) - 1e-3, 9):
            x = ray_crossing(g, q)
            assert Precision().evaluate(x[0], x[1], g.p0, g.p1) == pytest.approx(q, abs=1e-9)
            assert g.upper_at(x[0]) == pytest.approx(x[1], abs=1e-12)
        assert np.allclose(ray_crossing(g, max_precision(g)), g.upper[1])


def test_cap_grid_lies_on_target_rays():
    prob = _cell_problem(CFG, 0.5, 0.1)
    p0 = sum(e.prior * e.p0 for e in prob.values())
    entries = cap_grid(prob, 4)
    assert len(entries) == 16
    for k, j, q, r, ct, cp in entries:
        assert 0 < r < 1 and cp > 0
        assert cp / (cp + p0 - ct) == pytest.approx(q, abs=1e-12)


def test_reduce_base_preserves_mean():
    d = generate(CFG.base)["g"].dist
    r = reduce_base(d, 2)
    assert len(r) == 2 and r.p1 == pytest.approx(d.p1, abs=1e-12)


def test_known_forced_cell():
    # one cell of the default sweep; every optimum leaves a frontier at both pitches
    prob = _cell_problem(CFG, 0.25, 0.05)
    spec = _cell_spec(prob, CFG.caps_grid, 2, 1, 2.0)
    for h in (1 / 64, 1 / 128):
        rep = detect(prob, solve_grid(prob, spec, h))
        assert rep.all_cherry_pick and rep.min_max_distance >= 0.01
    red = _reduced_problem(prob, 0.25)
    assert oracle_confirms(red, _cell_spec(red, CFG.caps_grid, 2, 1, 2.0), 4)["all_cherry_pick"]


def test_penalty_off_never_forces():
    prob = _cell_problem(CFG, 0.25, 0.05)
    rep = detect(prob, solve_grid(prob, _cell_spec(prob, CFG.caps_grid, 2, 1, 0.0), 1 / 64))
    assert not rep.all_cherry_pick
    red = _reduced_problem(prob, 0.25)
    assert not oracle_confirms(red, _cell_spec(red, CFG.caps_grid, 2, 1, 0.0), 4)["all_cherry_pick"]


def test_control_cell_inactive_caps_dp_is_clean():
    prob = _cell_problem(CFG, 0.25, 0.05)
    spec = FairnessProblemSpec(SaturatingLinear(1, 1, 2.0, 2.0), "dp", 8.0)
    assert detect(prob, solve_grid(prob, spec, 1 / 64)).exists_clean


def test_search_negative_result_is_reported():
    cfg = ForcedCherryConfig(cs=(0.0,), gammas=(0.5,), eps_primes=(0.1,), caps_grid=2, h=1 / 32)
    f = theorem8_search(cfg)
    assert not f.found and f.params is None and len(f.log) == 4
    assert all(not e["all_cherry_pick"] for e in f.log)
    f = theorem8_search(ForcedCherryConfig(max_cells=1, h=1 / 32))
    assert len(f.log) <= 1


def test_config_roundtrip():
    assert ForcedCherryConfig.from_dict(CFG.to_dict()) == CFG


def test_tradeoff_sweep_monotone():
    base = GeneratorConfig("binned_density", bins=6, density="u_shape", jitter=0.3, seed=2)
    p = generate(GeneratorConfig("adversarial_pair", base=base, coarse_bins=2, gamma=0.4, eps_prime=0.3))
    rows = tradeoff_sweep(p, "accuracy", "predictive_parity", [0.0, 0.5, 1, 2, 4, 8], h=1 / 64)
    for a, b in zip(rows, rows[1:]):
        assert b["fairness_at_opt"] <= a["fairness_at_opt"] + b["slack"]
        assert b["metric_at_opt"] <= a["metric_at_opt"] + b["slack"]
    two_point = ScoreDistribution([0.3, 0.9], [0.5, 0.5])
    same = GroupedProblem({"a": GroupEntry(0.5, two_point), "b": GroupEntry(0.5, two_point)})
    rows = tradeoff_sweep(same, "accuracy", "dp", [0.0, 1.0, 4.0], h=1 / 64)
    assert all(r["best_value"] == pytest.approx(0.8) and r["exists_clean"] for r in rows)
    with pytest.raises(ValueError):
        tradeoff_sweep(same, "accuracy", "dp", [2.0, 1.0])
