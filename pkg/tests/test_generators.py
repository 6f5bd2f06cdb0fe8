import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ips_lab.generators import (
    GeneratorConfig,
    coarse_bin_index,
    contract,
    generate,
    make_battery,
    verify_adversarial,
)
from ips_lab.ips import area, ips_from_distribution
from ips_lab.problem import GroupedProblem, GroupEntry, ProblemError, base_rates

TWO = GeneratorConfig("two_point")


def pair(gamma=0.5, eps=0.25, base=TWO, bins=1):
    return generate(GeneratorConfig("adversarial_pair", base=base, coarse_bins=bins, gamma=gamma, eps_prime=eps))


def test_two_point():
    p = generate(TWO)
    assert np.allclose(p["g"].dist.atoms(), [(0.3, 0.5), (0.9, 0.5)])
    assert base_rates(p["g"].dist) == pytest.approx((0.4, 0.6))


def test_binned_density():
    p = generate(GeneratorConfig("binned_density", bins=4, density="tent"))
    d = p["g"].dist
    assert np.allclose(d.scores, [0.125, 0.375, 0.625, 0.875])
    assert np.allclose(d.masses, np.array([0.25, 0.75, 0.75, 0.25]) / 2)
    u = generate(GeneratorConfig("binned_density", bins=4, density="u_shape"))["g"].dist
    assert u.masses[0] > u.masses[1]


def test_adversarial_example():
    p = pair()
    a0 = p["A0"].dist
    assert np.allclose(a0.atoms(), [(0.45, 0.5), (0.75, 0.5)])
    assert p["A0"].prior == pytest.approx(0.25) and a0.p1 == pytest.approx(0.6)
    g0, g1 = (ips_from_distribution(p[g].dist) for g in ("A0", "A1"))
    assert np.allclose(g0.upper[1], (0.275, 0.375))
    assert g1.upper_at(0.275) == pytest.approx(0.4821428571, abs=1e-9)
    assert area(g1) - area(g0) == pytest.approx(0.075)


def test_verify_adversarial_examples():
    rep = verify_adversarial(pair(eps=0.1), 0.1)
    assert rep.flags == (True, True, True) and rep.difference_area == pytest.approx(0.075)
    assert verify_adversarial(pair(eps=0.1), 0.05).flags == (True, True, False)
    d = generate(TWO)["g"].dist
    same = GroupedProblem({"A0": GroupEntry(0.5, d), "A1": GroupEntry(0.5, d)})
    assert verify_adversarial(same, 0.1).flags == (True, False, True)


def test_errors():
    with pytest.raises(ValueError):
        GeneratorConfig("adversarial_pair")
    with pytest.raises(ValueError):
        GeneratorConfig("adversarial_pair", base=TWO, gamma=1.0)
    with pytest.raises(ValueError):
        GeneratorConfig("binned_density", density="bogus")
    with pytest.raises(ProblemError, match="degenerate group"):
        generate(GeneratorConfig("lemma_partition", base=TWO, coarse_bins=1))
    with pytest.raises(ProblemError, match="degenerate group"):
        generate(GeneratorConfig("lemma_partition", base=TWO, coarse_bins=2))


def test_lemma_partition():
    base = GeneratorConfig("binned_density", bins=8, density="tent")
    p = generate(GeneratorConfig("lemma_partition", base=base, coarse_bins=2, eps_prime=0.2))
    assert len(p["A0"].dist) == 2
    rep = verify_adversarial(p, 1.0)
    # the single A0 vertex sits at the coarse boundary, on the A1 frontier
    assert rep.base_rates_equal and not rep.strictly_nested
    assert rep.min_frontier_gap == pytest.approx(0.0, abs=1e-12)


def test_several_coarse_bins_touch_at_boundaries():
    base = GeneratorConfig("binned_density", bins=8, density="tent")
    p = generate(GeneratorConfig("adversarial_pair", base=base, coarse_bins=2, gamma=0.5, eps_prime=0.2))
    g0, g1 = (ips_from_distribution(p[g].dist) for g in ("A0", "A1"))
    gaps = g1.upper_at(g0.upper[1:-1, 0]) - g0.upper[1:-1, 1]
    assert np.sum(np.abs(gaps) < 1e-12) == 1 and np.all(gaps > -1e-12)
    assert verify_adversarial(pair(base=base, gamma=0.5, bins=1), 1.0).strictly_nested


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 10), st.sampled_from(["uniform", "tent", "u_shape"]), st.integers(1, 4),
       st.floats(0.05, 0.95), st.integers(0, 1000))
def test_mean_preserved_per_bin(bins, density, coarse, gamma, seed):
    d = generate(GeneratorConfig("binned_density", bins=bins, density=density, jitter=0.4, seed=seed))["g"].dist
    c = contract(d, coarse, gamma)
    idx = coarse_bin_index(d.scores, coarse)
    for b in np.unique(idx):
        sel = idx == b
        assert np.dot(d.masses[sel], d.scores[sel]) == pytest.approx(np.dot(c.masses[sel], c.scores[sel]), abs=1e-14)


@settings(max_examples=40, deadline=None)
@given(st.integers(3, 10), st.integers(1, 3), st.floats(0.05, 0.45), st.floats(0.5, 0.95), st.integers(0, 1000))
def test_monotone_nesting(bins, coarse, g1, g2, seed):
    base = GeneratorConfig("binned_density", bins=bins, density="u_shape", jitter=0.4, seed=seed)
    d = generate(base)["g"].dist
    inner = ips_from_distribution(contract(d, coarse, g1))
    mid = ips_from_distribution(contract(d, coarse, g2))
    outer = ips_from_distribution(d)
    xs = np.linspace(0, outer.p0, 101)
    assert np.all(mid.upper_at(xs) - inner.upper_at(xs) >= -1e-12)
    assert np.all(outer.upper_at(xs) - mid.upper_at(xs) >= -1e-12)
    assert area(inner) <= area(mid) + 1e-12 <= area(outer) + 2e-12


def test_difference_shrinks_with_gamma():
    sds = [verify_adversarial(pair(gamma=g), 1.0).difference_area for g in (0.1, 0.3, 0.5, 0.7, 0.9, 0.99)]
    assert np.all(np.diff(sds) < 0) and sds[-1] < 0.01


def test_deterministic_generation():
    cfg = GeneratorConfig("binned_density", bins=6, jitter=0.5, seed=11)
    assert generate(cfg) == generate(cfg)
    assert generate(GeneratorConfig.from_dict(cfg.to_dict())) == generate(cfg)
    assert make_battery(6, seed=1) == make_battery(6, seed=1)


def test_battery_adversarial_members():
    battery = make_battery(20)
    assert len(battery) == 20
    for k, p in enumerate(battery):
        assert len(p) == 2
        if k % 2:
            rep = verify_adversarial(p, 1.0)
            assert rep.base_rates_equal and rep.strictly_nested
