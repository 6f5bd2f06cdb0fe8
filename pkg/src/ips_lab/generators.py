"""Synthetic instance builders.

Densities for ``binned_density`` are fixed: ``uniform`` (flat), ``tent``
(``1 - |2s - 1|``) and ``u_shape`` (``0.1 + (2s - 1)**2``), each evaluated at
bin midpoints and normalised.  An optional multiplicative jitter drawn from the
config seed makes batteries of distinct but reproducible instances.

``adversarial_pair`` builds a majority group ``A1`` equal to the base
distribution and a minority ``A0`` whose scores are pulled towards the
mass-weighted mean of their coarse score bin.  The pull preserves every bin
mean, so both groups have the same base rate and their frontiers share both
endpoints, while ``IPS(A0)`` sits inside ``IPS(A1)``.  With one coarse bin
the containment is strict at every non-endpoint vertex.  With several bins the
cumulative mass and mean agree at each coarse boundary, so the ``A0`` vertex
there touches the ``A1`` frontier.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .ips import GEOM_TOL, area, ips_from_distribution, symmetric_difference_area
from .problem import GroupedProblem, GroupEntry, ProblemError, ScoreDistribution

DENSITIES = ("uniform", "tent", "u_shape")
KINDS = ("two_point", "binned_density", "adversarial_pair", "lemma_partition")


@dataclass(frozen=True)
class GeneratorConfig:
    kind: str = "two_point"
    bins: int = 8
    density: str = "uniform"
    jitter: float = 0.0
    base: "GeneratorConfig | None" = None
    coarse_bins: int = 1
    gamma: float = 0.5
    eps_prime: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown generator kind {self.kind!r}")
        if self.kind == "binned_density":
            if self.bins < 2:
                raise ValueError("bins must be at least 2")
            if self.density not in DENSITIES:
                raise ValueError(f"unknown density {self.density!r}")
            if not 0.0 <= self.jitter < 1.0:
                raise ValueError("jitter must lie in [0, 1)")
        if self.kind in ("adversarial_pair", "lemma_partition"):
            if self.base is None:
                raise ValueError(f"{self.kind} needs a base config")
            if self.coarse_bins < 1:
                raise ValueError("coarse_bins must be at least 1")
            if not 0.0 < self.eps_prime < 1.0:
                raise ValueError("eps_prime must lie in (0, 1)")
            if self.kind == "adversarial_pair" and not 0.0 < self.gamma < 1.0:
                raise ValueError("gamma must lie in (0, 1)")

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "seed": self.seed}
        if self.kind == "binned_density":
            out.update(bins=self.bins, density=self.density, jitter=self.jitter)
        elif self.kind in ("adversarial_pair", "lemma_partition"):
            out.update(base=self.base.to_dict(), coarse_bins=self.coarse_bins, eps_prime=self.eps_prime)
            if self.kind == "adversarial_pair":
                out["gamma"] = self.gamma
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "GeneratorConfig":
        d = dict(d)
        if d.get("base") is not None:
            d["base"] = cls.from_dict(d["base"])
        return cls(**d)


def _density(name: str, s: np.ndarray) -> np.ndarray:
    if name == "uniform":
        return np.ones_like(s)
    if name == "tent":
        return 1.0 - np.abs(2.0 * s - 1.0)
    return 0.1 + (2.0 * s - 1.0) ** 2


def _base_distribution(cfg: GeneratorConfig) -> ScoreDistribution:
    if cfg.kind == "two_point":
        return ScoreDistribution([0.3, 0.9], [0.5, 0.5])
    if cfg.kind == "binned_density":
        s = (np.arange(cfg.bins) + 0.5) / cfg.bins
        w = _density(cfg.density, s)
        if cfg.jitter > 0:
            rng = np.random.default_rng(cfg.seed)
            w = w * rng.uniform(1.0 - cfg.jitter, 1.0 + cfg.jitter, size=w.size)
        return ScoreDistribution(s, w)
    raise ValueError(f"{cfg.kind} does not describe a single distribution")


def coarse_bin_index(scores: np.ndarray, coarse_bins: int) -> np.ndarray:
    """Equal-width score bins on [0, 1]; score 1 joins the last bin."""
    return np.minimum((np.asarray(scores) * coarse_bins).astype(int), coarse_bins - 1)


def contract(dist: ScoreDistribution, coarse_bins: int, gamma: float) -> ScoreDistribution:
    """Pull scores towards their bin mean: ``s -> m_bin + gamma (s - m_bin)``."""
    s, m = dist.scores, dist.masses
    idx = coarse_bin_index(s, coarse_bins)
    out = s.copy()
    for b in np.unique(idx):
        sel = idx == b
        mean = np.dot(m[sel], s[sel]) / m[sel].sum()
        out[sel] = mean + gamma * (s[sel] - mean)
    return ScoreDistribution(out, m, normalize=False)


def _check_nondegenerate(dist: ScoreDistribution):
    if dist.is_degenerate:
        raise ProblemError("degenerate group")


def generate(cfg: GeneratorConfig) -> GroupedProblem:
    if cfg.kind in ("two_point", "binned_density"):
        dist = _base_distribution(cfg)
        _check_nondegenerate(dist)
        return GroupedProblem({"g": GroupEntry(1.0, dist)})
    base = generate(cfg.base)
    if len(base) != 1:
        raise ValueError("the base config must describe a single group")
    a1 = next(iter(base.values())).dist
    if cfg.kind == "lemma_partition":
        idx = coarse_bin_index(a1.scores, cfg.coarse_bins)
        varied = sum(np.ptp(a1.scores[idx == b]) > 0 for b in np.unique(idx))
        if varied < 2:
            raise ProblemError("degenerate group")
        gamma = 0.0
    else:
        gamma = cfg.gamma
    a0 = contract(a1, cfg.coarse_bins, gamma)
    _check_nondegenerate(a1)
    _check_nondegenerate(a0)
    return GroupedProblem({
        "A0": GroupEntry(cfg.eps_prime, a0),
        "A1": GroupEntry(1.0 - cfg.eps_prime, a1),
    })


def combine(problems: dict[str, GroupedProblem], priors: dict[str, float]) -> GroupedProblem:
    """Join single-group problems into one grouped problem with the given priors."""
    groups = {}
    for gid, prob in problems.items():
        if len(prob) != 1:
            raise ValueError("combine expects single-group problems")
        groups[gid] = GroupEntry(priors[gid], next(iter(prob.values())).dist)
    return GroupedProblem(groups)


def make_battery(n: int = 20, seed: int = 0) -> list[GroupedProblem]:
    """Reproducible mix of independent-group pairs and adversarial pairs."""
    rng = np.random.default_rng(seed)
    out = []
    for k in range(n):
        sub = int(rng.integers(0, 2**31))
        if k % 2 == 0:
            cfgs = [GeneratorConfig("binned_density", bins=int(rng.integers(3, 9)),
                                    density=DENSITIES[int(rng.integers(0, 3))],
                                    jitter=0.5, seed=sub + j) for j in range(2)]
            prior = float(rng.uniform(0.2, 0.8))
            out.append(combine({"A0": generate(cfgs[0]), "A1": generate(cfgs[1])},
                               {"A0": prior, "A1": 1.0 - prior}))
        else:
            base = GeneratorConfig("binned_density", bins=int(rng.integers(4, 9)),
                                   density=DENSITIES[int(rng.integers(0, 3))], jitter=0.5, seed=sub)
            cfg = GeneratorConfig("adversarial_pair", base=base, coarse_bins=1,
                                  gamma=float(rng.uniform(0.2, 0.8)),
                                  eps_prime=float(rng.uniform(0.1, 0.5)), seed=sub)
            out.append(generate(cfg))
    return out


@dataclass
class AdversarialReport:
    base_rates_equal: bool
    strictly_nested: bool
    small_difference: bool
    base_rate_gap: float
    min_frontier_gap: float
    difference_area: float
    inner: str = ""
    outer: str = ""

    @property
    def flags(self) -> tuple[bool, bool, bool]:
        return self.base_rates_equal, self.strictly_nested, self.small_difference


def verify_adversarial(problem: GroupedProblem, eps: float) -> AdversarialReport:
    """Check equal base rates, strict nesting of the smaller IPS, and a small area gap."""
    if len(problem) != 2:
        raise ValueError("verify_adversarial needs exactly two groups")
    ids = problem.group_ids
    geo = {g: ips_from_distribution(problem[g].dist) for g in ids}
    inner, outer = sorted(ids, key=lambda g: (area(geo[g]), ids.index(g)))
    gi, go = geo[inner], geo[outer]
    gap_rate = abs(problem[inner].p1 - problem[outer].p1)
    verts = np.vstack([gi.upper[1:-1], gi.lower[1:-1]])
    if len(verts):
        gaps = np.minimum(go.upper_at(verts[:, 0]) - verts[:, 1], verts[:, 1] - go.lower_at(verts[:, 0]))
        min_gap = float(gaps.min())
    else:
        min_gap = 0.0
    sd = symmetric_difference_area(gi, go)
    return AdversarialReport(gap_rate <= 1e-12, len(verts) > 0 and min_gap > GEOM_TOL, sd < eps,
                             gap_rate, min_gap, sd, inner, outer)
