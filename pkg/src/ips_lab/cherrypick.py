"""Cherry-picking detection and the fairness experiments built on it.

A decision cherry-picks inside a group exactly when that group's operating
point is off its Pareto frontier, so detection is a frontier-distance test on
each optimum of a solve.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .generators import GeneratorConfig, contract, generate
from .ips import IpsGeometry, ips_from_distribution
from .metrics import Precision, SaturatingLinear, parse_metric
from .problem import GroupedProblem, GroupEntry, ScoreDistribution
from .solver import (
    DEFAULT_H,
    DEFAULT_OPT_TOL,
    FairnessProblemSpec,
    SolveResult,
    brute_force_oracle,
    lipschitz_bound,
    optima_frontier_distances,
    solve_grid,
)


@dataclass
class CherryReport:
    frontier_dist: np.ndarray      # (k, 2), one column per group
    cherry_picks: np.ndarray       # (k,) bool
    cp_tol: float
    truncated: bool = False

    @property
    def exists_clean(self) -> bool:
        return bool((~self.cherry_picks).any())

    @property
    def all_cherry_pick(self) -> bool:
        return bool(self.cherry_picks.all())

    @property
    def min_max_distance(self) -> float:
        """Smallest, over optima, of the larger group frontier distance."""
        return float(self.frontier_dist.max(axis=1).min())

    def to_dict(self) -> dict:
        return {"cp_tol": self.cp_tol, "n_optima": int(len(self.cherry_picks)),
                "exists_clean": self.exists_clean, "all_cherry_pick": self.all_cherry_pick,
                "min_max_distance": self.min_max_distance, "truncated": self.truncated}


def default_cp_tol(h: float) -> float:
    return 4.0 * h


def detect(problem: GroupedProblem, result: SolveResult, cp_tol: float | None = None) -> CherryReport:
    """Classify every optimum; ``cp_tol`` should exceed the grid slack (about 2h times the max slope)."""
    if not result.optima:
        raise ValueError("no optima to classify")
    if cp_tol is None:
        cp_tol = default_cp_tol(result.h or DEFAULT_H)
    dist = optima_frontier_distances(problem, result)
    return CherryReport(dist, (dist > cp_tol).any(axis=1), cp_tol, result.truncated)


# ---------------------------------------------------------------- replication


def metric_label(metric) -> str:
    m = parse_metric(metric)
    if m.name == "immediate_utility":
        return f"immediate_utility:{m.t!r}"
    if m.name == "saturating_linear":
        return f"saturating_linear:{m.a!r},{m.b!r},{m.cap_tnr!r},{m.cap_tpr!r}"
    return m.name


@dataclass
class ReplicationSummary:
    cells: list[dict]

    @property
    def all_clean(self) -> bool:
        return all(c["exists_clean"] for c in self.cells)

    @property
    def failures(self) -> list[dict]:
        return [c for c in self.cells if not c["exists_clean"]]


def theorem6_replication(battery, metrics, cs, h: float = DEFAULT_H, cp_tol: float | None = None,
                         fairness=("dp", "eo", "er"), opt_tol: float = DEFAULT_OPT_TOL) -> ReplicationSummary:
    """Solve every (instance, metric, c, fairness) cell and record whether a clean optimum exists."""
    battery = list(battery)
    if not battery:
        raise ValueError("battery is empty")
    cp_tol = default_cp_tol(h) if cp_tol is None else cp_tol
    cells = []
    for k, prob in enumerate(battery):
        for metric in metrics:
            for c in cs:
                for fid in fairness:
                    spec = FairnessProblemSpec(metric, fid, c)
                    res = solve_grid(prob, spec, h, opt_tol)
                    rep = detect(prob, res, cp_tol)
                    cells.append({
                        "instance": k, "metric": metric_label(metric), "c": c, "fairness": fid,
                        "best_value": res.best_value, "n_optima": res.n_optima,
                        "exists_clean": rep.exists_clean, "min_max_distance": rep.min_max_distance,
                        "truncated": res.truncated,
                    })
    return ReplicationSummary(cells)


# ---------------------------------------------------------------- forced cherry-picking search


def ray_crossing(ips: IpsGeometry, q: float) -> np.ndarray:
    """Frontier point whose precision equals ``q``.

    Precision is constant on rays from the all-negative corner ``(p0, 0)``
    and decreases along the frontier away from it.
    """
    P = ips.upper
    # g > 0 exactly where precision exceeds q; g vanishes at the corner itself
    g = (1.0 - q) * P[:, 1] - q * (ips.p0 - P[:, 0])
    if g[1] <= 1e-15:
        # q at or above the first segment's precision: its far end is the last point on the ray
        return P[1].copy() if g[1] >= -1e-12 else P[0].copy()
    k = int(np.argmax(g[1:] <= 0.0)) + 1 if np.any(g[1:] <= 0.0) else len(P) - 1
    g0, g1 = g[k - 1], g[k]
    t = 1.0 if g1 == g0 else float(np.clip(g0 / (g0 - g1), 0.0, 1.0))
    return P[k - 1] + t * (P[k] - P[k - 1])


def max_precision(ips: IpsGeometry) -> float:
    """Precision along the first frontier segment, the largest attainable."""
    (x, y) = ips.upper[1]
    return float(y / (y + ips.p0 - x))


def cap_grid(problem: GroupedProblem, caps_grid: int, inner: str = "A0", outer: str = "A1") -> list[tuple]:
    """Caps on the equal-precision set of the pair.

    For precision levels ``q_k`` between the base rate and the inner group's
    best precision, and fractions ``r_j`` in (0, 1), the cap is the point a
    fraction ``r_j`` of the way from the all-negative corner to the mixture of
    both groups' frontier crossings at ``q_k``.  Entries are
    ``(k, j, q, r, cap_tnr, cap_tpr)``.
    """
    gi = ips_from_distribution(problem[inner].dist)
    go = ips_from_distribution(problem[outer].dist)
    wi, wo = problem[inner].prior, problem[outer].prior
    p0 = wi * gi.p0 + wo * go.p0
    p1 = 1.0 - p0
    qmax = max_precision(gi)
    out = []
    for k in range(caps_grid):
        q = p1 + (k + 1) / caps_grid * (qmax - p1)
        mix = wi * ray_crossing(gi, q) + wo * ray_crossing(go, q)
        corner = np.array([p0, 0.0])
        for j in range(caps_grid):
            r = (j + 1) / (caps_grid + 1)
            cap = corner + r * (mix - corner)
            out.append((k, j, float(q), float(r), float(cap[0]), float(cap[1])))
    return out


def reduce_base(dist: ScoreDistribution, n_atoms: int) -> ScoreDistribution:
    """Merge runs of consecutive atoms into ``n_atoms`` atoms at their mass-weighted means."""
    parts = np.array_split(np.arange(len(dist)), n_atoms)
    s = [np.dot(dist.masses[p], dist.scores[p]) / dist.masses[p].sum() for p in parts]
    m = [dist.masses[p].sum() for p in parts]
    return ScoreDistribution(s, m)


@dataclass
class ForcedCherryConfig:
    base: GeneratorConfig = field(default_factory=lambda: GeneratorConfig("binned_density", bins=8))
    coarse_bins: int = 2
    gammas: tuple = (0.25, 0.5)
    eps_primes: tuple = (0.05, 0.1, 0.2)
    cs: tuple = (2.0, 8.0, 32.0, 128.0)
    caps_grid: int = 8
    h: float = DEFAULT_H
    cp_tol: float | None = None
    min_distance: float = 0.01
    opt_tol: float = DEFAULT_OPT_TOL
    oracle_steps: int = 4
    max_cells: int | None = None

    def to_dict(self) -> dict:
        return {"base": self.base.to_dict(), "coarse_bins": self.coarse_bins,
                "gammas": list(self.gammas), "eps_primes": list(self.eps_primes), "cs": list(self.cs),
                "caps_grid": self.caps_grid, "h": self.h, "cp_tol": self.cp_tol,
                "min_distance": self.min_distance, "opt_tol": self.opt_tol,
                "oracle_steps": self.oracle_steps, "max_cells": self.max_cells}

    @classmethod
    def from_dict(cls, d: dict) -> "ForcedCherryConfig":
        d = dict(d)
        if "base" in d:
            d["base"] = GeneratorConfig.from_dict(d["base"])
        for key in ("gammas", "eps_primes", "cs"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)


def _cell_problem(cfg: ForcedCherryConfig, gamma: float, eps: float) -> GroupedProblem:
    return generate(GeneratorConfig("adversarial_pair", base=cfg.base, coarse_bins=cfg.coarse_bins,
                                    gamma=gamma, eps_prime=eps, seed=cfg.base.seed))


def _reduced_problem(problem: GroupedProblem, gamma: float) -> GroupedProblem:
    a1 = reduce_base(problem["A1"].dist, 2)
    a0 = contract(a1, 1, gamma)
    return GroupedProblem({"A0": GroupEntry(problem["A0"].prior, a0),
                           "A1": GroupEntry(problem["A1"].prior, a1)})


def _cell_spec(problem, caps_grid, k, j, c) -> FairnessProblemSpec:
    _, _, q, r, ct, cp = cap_grid(problem, caps_grid)[k * caps_grid + j]
    return FairnessProblemSpec(SaturatingLinear(1.0, 1.0, ct, cp), "predictive_parity", c)


def oracle_confirms(problem: GroupedProblem, spec: FairnessProblemSpec, steps: int,
                    opt_tol: float = DEFAULT_OPT_TOL) -> dict:
    """Exhaustive check that every optimal decision cherry-picks by definition."""
    res = brute_force_oracle(problem, spec, steps, opt_tol)
    g0, g1 = res.group_ids
    flags = [o.decisions[0].cherry_picks(problem[g0].dist) or o.decisions[1].cherry_picks(problem[g1].dist)
             for o in res.optima]
    return {"best_value": res.best_value, "n_optima": len(res.optima),
            "all_cherry_pick": bool(all(flags)), "n_decisions": res.n_candidates}


@dataclass
class ForcedCherryFinding:
    found: bool
    params: dict | None
    report: dict | None
    result: SolveResult | None
    log: list[dict]
    wall_time: float = 0.0


def theorem8_search(cfg: ForcedCherryConfig = ForcedCherryConfig()) -> ForcedCherryFinding:
    """Sweep adversarial cells; return the first one whose optima all cherry-pick.

    A cell is accepted only when (i) every optimum at pitch ``h`` is off some
    group frontier by more than ``cp_tol``, (ii) the smallest per-optimum
    frontier distance reaches ``min_distance``, (iii) the same holds at
    ``h / 2``, and (iv) on the two-atom-per-group reduction of the cell every
    optimal decision of the exhaustive oracle cherry-picks.
    """
    t0 = time.perf_counter()
    cp_tol = default_cp_tol(cfg.h) if cfg.cp_tol is None else cfg.cp_tol
    log = []
    n = 0
    for gamma in cfg.gammas:
        for eps in cfg.eps_primes:
            prob = _cell_problem(cfg, gamma, eps)
            for c in cfg.cs:
                for k in range(cfg.caps_grid):
                    for j in range(cfg.caps_grid):
                        if cfg.max_cells is not None and n >= cfg.max_cells:
                            return ForcedCherryFinding(False, None, None, None, log, time.perf_counter() - t0)
                        n += 1
                        params = {"gamma": gamma, "eps_prime": eps, "c": c, "cap_k": k, "cap_j": j}
                        spec = _cell_spec(prob, cfg.caps_grid, k, j, c)
                        res = solve_grid(prob, spec, cfg.h, cfg.opt_tol)
                        rep = detect(prob, res, cp_tol)
                        entry = dict(params, best_value=res.best_value, n_optima=res.n_optima,
                                     all_cherry_pick=rep.all_cherry_pick and not res.truncated,
                                     min_max_distance=rep.min_max_distance)
                        log.append(entry)
                        if not entry["all_cherry_pick"] or rep.min_max_distance < cfg.min_distance:
                            continue
                        fine = solve_grid(prob, spec, cfg.h / 2, cfg.opt_tol)
                        rep_fine = detect(prob, fine, cp_tol)
                        entry["refined_all_cherry_pick"] = rep_fine.all_cherry_pick and not fine.truncated
                        entry["refined_min_max_distance"] = rep_fine.min_max_distance
                        if not entry["refined_all_cherry_pick"]:
                            continue
                        red = _reduced_problem(prob, gamma)
                        red_spec = _cell_spec(red, cfg.caps_grid, k, j, c)
                        oracle = oracle_confirms(red, red_spec, cfg.oracle_steps, cfg.opt_tol)
                        red_res = solve_grid(red, red_spec, cfg.h, cfg.opt_tol)
                        oracle["grid_all_cherry_pick"] = detect(red, red_res, cp_tol).all_cherry_pick
                        oracle["grid_best_value"] = red_res.best_value
                        entry["oracle"] = oracle
                        if not (oracle["all_cherry_pick"] and oracle["grid_all_cherry_pick"]):
                            continue
                        report = {"h": cfg.h, "cp_tol": cp_tol, "coarse": rep.to_dict(),
                                  "refined": dict(rep_fine.to_dict(), h=cfg.h / 2), "oracle": oracle,
                                  "metric": spec.to_dict()["metric"],
                                  "slack_bound": 2 * cfg.h}
                        return ForcedCherryFinding(True, params, report, res, log, time.perf_counter() - t0)
    return ForcedCherryFinding(False, None, None, None, log, time.perf_counter() - t0)


# ---------------------------------------------------------------- trade-off curve


def tradeoff_sweep(problem: GroupedProblem, metric, fairness: str, cs, h: float = DEFAULT_H,
                   cp_tol: float | None = None, opt_tol: float = DEFAULT_OPT_TOL) -> list[dict]:
    """Per penalty weight: best objective, metric and fairness at the first optimum, cleanliness."""
    cs = list(cs)
    if any(b < a for a, b in zip(cs, cs[1:])):
        raise ValueError("cs must be sorted ascending")
    rows = []
    for c in cs:
        spec = FairnessProblemSpec(metric, fairness, c)
        res = solve_grid(problem, spec, h, opt_tol)
        rep = detect(problem, res, cp_tol)
        best = res.best
        rows.append({"c": c, "best_value": res.best_value,
                     "metric_at_opt": best.objective + c * best.fairness,
                     "fairness_at_opt": best.fairness, "exists_clean": rep.exists_clean,
                     "slack": 2 * h * lipschitz_bound(problem, spec)})
    return rows
