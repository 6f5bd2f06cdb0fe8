"""Penalised fairness problems over the product of two group achievable sets.

The objective ``metric_scale * L(global point) - c * U(x0, x1)`` depends on a
decision only through the two group operating points, so every search here
runs over pairs of points rather than over decisions.

``solve_grid`` searches a lattice of pitch ``h`` inside each group set,
augmented with the points where the Pareto frontier crosses lattice columns,
rows and diagonals.  The augmentation keeps the candidate set closed under the
moves that leave dp, eo and er unchanged (diagonal, horizontal and vertical
moves onto the frontier), and it keeps grids nested when ``h`` is halved.
"""
from __future__ import annotations

import itertools
import math
import os
from dataclasses import dataclass, field

import numba
import numpy as np

from .ips import IpsGeometry, contains, frontier_distances, ips_from_distribution
from .metrics import (
    Accuracy,
    GroupStats,
    ImmediateUtility,
    Precision,
    SaturatingLinear,
    fairness_lipschitz,
    fairness_values,
    metric_to_dict,
    parse_metric,
)
from .problem import AtomDecision, GroupedProblem, operating_point

DEFAULT_H = 1.0 / 256
DEFAULT_OPT_TOL = 1e-6
MAX_OPTIMA = 200_000

_METRIC_CODES = {"accuracy": 0, "immediate_utility": 1, "precision": 2, "saturating_linear": 3}
_FAIR_CODES = {"dp": 0, "eo": 1, "er": 2, "predictive_parity": 3}


class SolverError(ValueError):
    pass


@dataclass(frozen=True)
class FairnessProblemSpec:
    metric: object = field(default_factory=Accuracy)
    fairness: str = "dp"
    c: float = 1.0
    metric_scale: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "metric", parse_metric(self.metric))
        if self.fairness not in _FAIR_CODES:
            raise ValueError(f"unknown fairness measure {self.fairness!r}")
        for name in ("c", "metric_scale"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ValueError(f"{name} must be finite and non-negative")

    def to_dict(self) -> dict:
        return {"metric": metric_to_dict(self.metric), "fairness": self.fairness,
                "c": self.c, "metric_scale": self.metric_scale}


@dataclass(frozen=True)
class OperatingPointPair:
    x0: tuple[float, float]
    x1: tuple[float, float]
    objective: float
    fairness: float
    decisions: tuple | None = None


@dataclass
class SolveResult:
    group_ids: tuple[str, str]
    spec: FairnessProblemSpec
    best_value: float
    optima: list[OperatingPointPair]
    h: float | None
    opt_tol: float
    n_optima: int
    truncated: bool = False
    method: str = "grid"
    n_candidates: tuple[int, int] = (0, 0)

    @property
    def best(self) -> OperatingPointPair:
        return self.optima[0]

    def points(self) -> np.ndarray:
        """Optima as an ``(k, 4)`` array ``tnr0, tpr0, tnr1, tpr1``."""
        return np.array([[*o.x0, *o.x1] for o in self.optima]).reshape(-1, 4)


# ---------------------------------------------------------------- objective (numpy)


def _stats(problem: GroupedProblem):
    if len(problem) != 2:
        raise SolverError(f"the fairness problem needs exactly 2 groups, got {len(problem)}")
    g0, g1 = problem.group_ids
    return g0, g1, GroupStats.of(problem, g0), GroupStats.of(problem, g1), GroupStats.pooled(problem)


def objective_values(problem: GroupedProblem, spec: FairnessProblemSpec, x0, x1):
    """Objective and fairness term for broadcastable arrays of group points."""
    _, _, s0, s1, sg = _stats(problem)
    x0 = np.asarray(x0, dtype=float)
    x1 = np.asarray(x1, dtype=float)
    tnr = s0.prior * x0[..., 0] + s1.prior * x1[..., 0]
    tpr = s0.prior * x0[..., 1] + s1.prior * x1[..., 1]
    L = spec.metric.evaluate(tnr, tpr, sg.p0, sg.p1)
    U = fairness_values(spec.fairness, x0[..., 0], x0[..., 1], s0, x1[..., 0], x1[..., 1], s1)
    return spec.metric_scale * L - spec.c * U, U


def lipschitz_bound(problem: GroupedProblem, spec: FairnessProblemSpec) -> float:
    """K with |d objective| <= K * delta when every coordinate moves by at most delta."""
    _, _, s0, s1, _ = _stats(problem)
    k_metric = spec.metric.lipschitz
    k_fair = fairness_lipschitz(spec.fairness, s0) + fairness_lipschitz(spec.fairness, s1)
    # a group move of delta per coordinate shifts the mixture by at most 2 * delta in L1
    return 2.0 * (spec.metric_scale * k_metric + spec.c * k_fair)


# ---------------------------------------------------------------- candidates


def _upper_inverse(ips: IpsGeometry, y):
    """Largest tnr whose frontier tpr reaches ``y``."""
    P = ips.upper
    ys = P[:, 1]
    k = np.clip(np.searchsorted(ys, y, side="left"), 1, len(P) - 1)
    y0, y1 = ys[k - 1], ys[k]
    x0, x1 = P[k - 1, 0], P[k, 0]
    dy = y1 - y0
    t = np.where(dy > 0, (y - y0) / np.where(dy > 0, dy, 1.0), 1.0)
    return x0 + np.clip(t, 0.0, 1.0) * (x1 - x0)


def _diagonal_crossing(ips: IpsGeometry, d):
    """Frontier point with ``tpr - tnr = d``; ``tpr - tnr`` increases along the frontier."""
    P = ips.upper
    f = P[:, 1] - P[:, 0]
    k = np.clip(np.searchsorted(f, d, side="left"), 1, len(P) - 1)
    f0, f1 = f[k - 1], f[k]
    df = f1 - f0
    t = np.where(df > 0, (d - f0) / np.where(df > 0, df, 1.0), 1.0)
    t = np.clip(t, 0.0, 1.0)
    return np.column_stack([P[k - 1, 0] + t * (P[k, 0] - P[k - 1, 0]),
                            P[k - 1, 1] + t * (P[k, 1] - P[k - 1, 1])])


def _frontier_projections(ips: IpsGeometry, pts: np.ndarray) -> np.ndarray:
    """Vertical, horizontal and diagonal moves of ``pts`` onto the frontier."""
    x, y = pts[:, 0], pts[:, 1]
    vert = np.column_stack([x, ips.upper_at(x)])
    horiz = np.column_stack([_upper_inverse(ips, y), y])
    diag = _diagonal_crossing(ips, y - x)
    return np.vstack([vert, horiz, diag])


def candidate_points(ips: IpsGeometry, h: float) -> np.ndarray:
    """Lexicographically sorted candidate operating points for one group."""
    nx = int(math.floor(ips.p0 / h + 1e-9))
    ny = int(math.floor(ips.p1 / h + 1e-9))
    xs = np.arange(nx + 1) * h
    ys = np.arange(ny + 1) * h
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    lattice = np.column_stack([X.ravel(), Y.ravel()])
    lattice = lattice[contains(ips, lattice, 1e-12)]
    cols = np.column_stack([xs, ips.upper_at(xs)])
    rows = np.column_stack([_upper_inverse(ips, ys), ys])
    kmin = int(math.ceil(-ips.p0 / h - 1e-9))
    kmax = int(math.floor(ips.p1 / h + 1e-9))
    diags = _diagonal_crossing(ips, np.arange(kmin, kmax + 1) * h)
    pts = np.vstack([lattice, cols, rows, diags, ips.upper, ips.lower,
                     _frontier_projections(ips, ips.lower)])
    pts = np.unique(pts, axis=0)
    return np.ascontiguousarray(pts)


# ---------------------------------------------------------------- kernels


@numba.njit(cache=True, inline="always")
def _pair_value(a0, b0, a1, b1, w0, w1, gp0, gp1, s00, s01, s10, s11,
                mcode, m0, m1, m2, m3, fcode, c, scale):
    # a = tnr, b = tpr; s00, s01 = (p0, p1) of group 0; s10, s11 of group 1
    T = w0 * a0 + w1 * a1
    P = w0 * b0 + w1 * b1
    if mcode == 0:
        L = T + P
    elif mcode == 1:
        L = (1.0 - m0) * P + m0 * (T - gp0)
    elif mcode == 2:
        den = P + gp0 - T
        L = P / den if den > 0.0 else gp1
    else:
        L = m0 * min(T, m2) + m1 * min(P, m3)
    if fcode == 0:
        U = abs((b1 - a1 + s10) - (b0 - a0 + s00))
    elif fcode == 1:
        U = abs(b1 / s11 - b0 / s01)
    elif fcode == 2:
        U = abs(a1 / s10 - a0 / s00)
    else:
        d0 = b0 + s00 - a0
        d1 = b1 + s10 - a1
        q0 = b0 / d0 if d0 > 0.0 else s01
        q1 = b1 / d1 if d1 > 0.0 else s11
        U = abs(q1 - q0)
    return scale * L - c * U, U


@numba.njit(cache=True)
def _row_maxima(c0, c1, params, mparams, codes):
    n0 = c0.shape[0]
    n1 = c1.shape[0]
    out = np.empty(n0)
    w0, w1, gp0, gp1, s00, s01, s10, s11, c, scale = params
    m0, m1, m2, m3 = mparams
    mcode, fcode = codes
    for i in range(n0):
        best = -np.inf
        a0 = c0[i, 0]
        b0 = c0[i, 1]
        for j in range(n1):
            v, _ = _pair_value(a0, b0, c1[j, 0], c1[j, 1], w0, w1, gp0, gp1, s00, s01, s10, s11,
                               mcode, m0, m1, m2, m3, fcode, c, scale)
            if v > best:
                best = v
        out[i] = best
    return out


@numba.njit(cache=True)
def _collect(c0, c1, rows, params, mparams, codes, opt_tol, cap):
    w0, w1, gp0, gp1, s00, s01, s10, s11, c, scale = params
    m0, m1, m2, m3 = mparams
    mcode, fcode = codes
    n1 = c1.shape[0]
    best = -np.inf
    for i in rows:
        for j in range(n1):
            v, _ = _pair_value(c0[i, 0], c0[i, 1], c1[j, 0], c1[j, 1], w0, w1, gp0, gp1,
                               s00, s01, s10, s11, mcode, m0, m1, m2, m3, fcode, c, scale)
            if v > best:
                best = v
    idx = np.empty((cap, 2), dtype=np.int64)
    vals = np.empty((cap, 2))
    count = 0
    for i in rows:
        for j in range(n1):
            v, u = _pair_value(c0[i, 0], c0[i, 1], c1[j, 0], c1[j, 1], w0, w1, gp0, gp1,
                               s00, s01, s10, s11, mcode, m0, m1, m2, m3, fcode, c, scale)
            if v >= best - opt_tol:
                if count < cap:
                    idx[count, 0] = i
                    idx[count, 1] = j
                    vals[count, 0] = v
                    vals[count, 1] = u
                count += 1
    return best, idx, vals, count


def _kernel_args(problem, spec):
    _, _, s0, s1, sg = _stats(problem)
    metric = spec.metric
    mparams = np.zeros(4)
    if isinstance(metric, ImmediateUtility):
        mparams[0] = metric.t
    elif isinstance(metric, SaturatingLinear):
        mparams[:] = (metric.a, metric.b, metric.cap_tnr, metric.cap_tpr)
    params = np.array([s0.prior, s1.prior, sg.p0, sg.p1, s0.p0, s0.p1, s1.p0, s1.p1,
                       spec.c, spec.metric_scale])
    codes = np.array([_METRIC_CODES[metric.name], _FAIR_CODES[spec.fairness]], dtype=np.int64)
    return params, mparams, codes


def _linear_parts(problem, spec, c0, c1):
    """Split a linear metric into per-group terms plus the 1-D fairness features."""
    _, _, s0, s1, sg = _stats(problem)
    metric = spec.metric
    if isinstance(metric, Accuracy):
        w_tnr, w_tpr, const = 1.0, 1.0, 0.0
    elif isinstance(metric, ImmediateUtility):
        w_tnr, w_tpr, const = metric.t, 1.0 - metric.t, -metric.t * sg.p0
    else:
        return None

    def lin(cand, prior):
        return spec.metric_scale * prior * (w_tnr * cand[:, 0] + w_tpr * cand[:, 1])

    def feature(cand, st):
        if spec.fairness == "dp":
            return cand[:, 1] - cand[:, 0] + st.p0
        if spec.fairness == "eo":
            return cand[:, 1] / st.p1
        if spec.fairness == "er":
            return cand[:, 0] / st.p0
        return Precision().evaluate(cand[:, 0], cand[:, 1], st.p0, st.p1)

    return (lin(c0, s0.prior) + spec.metric_scale * const, feature(c0, s0),
            lin(c1, s1.prior), feature(c1, s1))


def _row_maxima_linear(A0, f0, A1, f1, c):
    """max_j A1[j] - c |f1[j] - f0[i]| for every i, by sorted prefix/suffix maxima."""
    order = np.argsort(f1, kind="stable")
    fs, As = f1[order], A1[order]
    pre = np.maximum.accumulate(As + c * fs)           # for f1 <= f0
    suf = np.maximum.accumulate((As - c * fs)[::-1])[::-1]  # for f1 >= f0
    k = np.searchsorted(fs, f0, side="left")
    below = np.where(k > 0, pre[np.maximum(k - 1, 0)] - c * f0, -np.inf)
    above = np.where(k < fs.size, suf[np.minimum(k, fs.size - 1)] + c * f0, -np.inf)
    return A0 + np.maximum(below, above)


def _configure_threads():
    env = os.environ.get("IPS_LAB_THREADS")
    if env:
        numba.set_num_threads(max(1, min(int(env), numba.config.NUMBA_NUM_THREADS)))


def solve_pairs(problem: GroupedProblem, spec: FairnessProblemSpec, c0: np.ndarray, c1: np.ndarray,
                opt_tol: float = DEFAULT_OPT_TOL, max_optima: int = MAX_OPTIMA):
    """Exhaustive search over the product of two candidate lists.

    Returns ``(best, pairs_idx, values, count)``.  Row maxima come from the
    sorted envelope when the metric is linear, and from the pair kernel
    otherwise; only rows that can hold an optimum are then rescanned.
    """
    _configure_threads()
    params, mparams, codes = _kernel_args(problem, spec)
    parts = _linear_parts(problem, spec, c0, c1)
    if parts is not None:
        rmax = _row_maxima_linear(*parts, spec.c)
    else:
        rmax = _row_maxima(c0, c1, params, mparams, codes)
    top = float(np.max(rmax))
    rows = np.flatnonzero(rmax >= top - opt_tol - 1e-9 * max(1.0, abs(top))).astype(np.int64)
    best, idx, vals, count = _collect(c0, c1, rows, params, mparams, codes, float(opt_tol),
                                      int(max_optima))
    k = min(count, max_optima)
    return best, idx[:k], vals[:k], count


def _check_h(h):
    if not (0.0 < h <= 0.1):
        raise SolverError("h must lie in (0, 0.1]")


def _result(problem, spec, c0, c1, best, idx, vals, count, h, opt_tol, method, max_optima):
    g0, g1 = problem.group_ids
    optima = [
        OperatingPointPair((float(c0[i, 0]), float(c0[i, 1])), (float(c1[j, 0]), float(c1[j, 1])),
                           float(v), float(u))
        for (i, j), (v, u) in zip(idx, vals)
    ]
    return SolveResult((g0, g1), spec, float(best), optima, h, opt_tol, int(count),
                       truncated=count > max_optima, method=method,
                       n_candidates=(len(c0), len(c1)))


def solve_grid(problem: GroupedProblem, spec: FairnessProblemSpec, h: float = DEFAULT_H,
               opt_tol: float = DEFAULT_OPT_TOL, max_optima: int = MAX_OPTIMA) -> SolveResult:
    """Grid search of the penalised problem; optima are listed in lexicographic grid order."""
    _check_h(h)
    if opt_tol < 0:
        raise SolverError("opt_tol must be non-negative")
    g0, g1, *_ = _stats(problem)
    c0 = candidate_points(ips_from_distribution(problem[g0].dist), h)
    c1 = candidate_points(ips_from_distribution(problem[g1].dist), h)
    if len(c0) == 0 or len(c1) == 0:
        raise SolverError("empty feasible grid")
    best, idx, vals, count = solve_pairs(problem, spec, c0, c1, opt_tol, max_optima)
    return _result(problem, spec, c0, c1, best, idx, vals, count, h, opt_tol, "grid", max_optima)


def frontier_samples(ips: IpsGeometry, steps: int) -> np.ndarray:
    """Frontier vertices plus ``steps`` evenly spaced interior points per segment."""
    P = ips.upper
    out = [P]
    if steps > 0:
        frac = np.arange(1, steps + 1) / (steps + 1)
        seg = P[1:] - P[:-1]
        out.append((P[:-1, None, :] + frac[None, :, None] * seg[:, None, :]).reshape(-1, 2))
    return np.unique(np.vstack(out), axis=0)


def solve_thresholds(problem: GroupedProblem, spec: FairnessProblemSpec, steps: int = 64,
                     opt_tol: float = DEFAULT_OPT_TOL, max_optima: int = MAX_OPTIMA) -> SolveResult:
    """Search restricted to per-group threshold decisions (points on each frontier)."""
    if steps < 0:
        raise SolverError("steps must be non-negative")
    g0, g1, *_ = _stats(problem)
    c0 = frontier_samples(ips_from_distribution(problem[g0].dist), steps)
    c1 = frontier_samples(ips_from_distribution(problem[g1].dist), steps)
    vals, fair = objective_values(problem, spec, c0[:, None, :], c1[None, :, :])
    best = float(vals.max())
    hit = np.argwhere(vals >= best - opt_tol)
    count = len(hit)
    hit = hit[:max_optima]
    return _result(problem, spec, c0, c1, best, hit,
                   np.column_stack([vals[hit[:, 0], hit[:, 1]], fair[hit[:, 0], hit[:, 1]]]),
                   count, None, opt_tol, "thresholds", max_optima)


ORACLE_MAX_ATOMS = 12
ORACLE_MAX_STEPS = 4


def _decision_points(dist, lambda_steps):
    levels = np.arange(lambda_steps + 1) / lambda_steps
    lams = np.array(list(itertools.product(levels, repeat=len(dist))))
    pts = np.array([operating_point(dist, AtomDecision(l)) for l in lams])
    return lams, pts


def brute_force_oracle(problem: GroupedProblem, spec: FairnessProblemSpec, lambda_steps: int = 2,
                       opt_tol: float = DEFAULT_OPT_TOL) -> SolveResult:
    """Enumerate every decision with ``lam_i`` in ``{0, 1/k, ..., 1}`` on every atom."""
    g0, g1, *_ = _stats(problem)
    d0, d1 = problem[g0].dist, problem[g1].dist
    if len(d0) + len(d1) > ORACLE_MAX_ATOMS or not (1 <= lambda_steps <= ORACLE_MAX_STEPS):
        raise SolverError("oracle scale")
    lam0, p0 = _decision_points(d0, lambda_steps)
    lam1, p1 = _decision_points(d1, lambda_steps)
    best = -np.inf
    chunk = max(1, 2_000_000 // len(p1))
    blocks = []
    for start in range(0, len(p0), chunk):
        v, u = objective_values(problem, spec, p0[start:start + chunk, None, :], p1[None, :, :])
        blocks.append((start, v, u))
        best = max(best, float(v.max()))
    optima = []
    for start, v, u in blocks:
        for i, j in np.argwhere(v >= best - opt_tol):
            optima.append(OperatingPointPair(
                tuple(map(float, p0[start + i])), tuple(map(float, p1[j])),
                float(v[i, j]), float(u[i, j]),
                (AtomDecision(lam0[start + i]), AtomDecision(lam1[j]))))
    return SolveResult((g0, g1), spec, best, optima, None, opt_tol, len(optima),
                       method="oracle", n_candidates=(len(p0), len(p1)))


def optima_frontier_distances(problem: GroupedProblem, result: SolveResult) -> np.ndarray:
    """``(k, 2)`` array of frontier distances of each optimum, per group."""
    g0, g1 = result.group_ids
    pts = result.points()
    geo0 = ips_from_distribution(problem[g0].dist)
    geo1 = ips_from_distribution(problem[g1].dist)
    return np.column_stack([frontier_distances(geo0, pts[:, :2]), frontier_distances(geo1, pts[:, 2:])])
