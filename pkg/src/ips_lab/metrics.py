"""Evaluation metrics and group fairness measures on operating points.

Everything here is a function of ``(tnr, tpr)`` plus base rates, the form in
which any metric that respects the Pareto order and permutation invariance can
be written.  Functions accept scalars or numpy arrays and broadcast.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from .ips import contains, ips_from_distribution
from .problem import GroupedProblem

FEAS_TOL = 1e-9
FD_STEP = 1e-5
FQC_TOL = 1e-7


@dataclass(frozen=True)
class GroupStats:
    p0: float
    p1: float
    prior: float = 1.0

    def __post_init__(self):
        if abs(self.p0 + self.p1 - 1.0) > 1e-12:
            raise ValueError("base rates must sum to 1")

    @classmethod
    def of(cls, problem: GroupedProblem, gid: str) -> "GroupStats":
        e = problem[gid]
        return cls(e.p0, e.p1, e.prior)

    @classmethod
    def pooled(cls, problem: GroupedProblem) -> "GroupStats":
        p1 = sum(e.prior * e.p1 for e in problem.values())
        return cls(1.0 - p1, p1, 1.0)


# ---------------------------------------------------------------- metrics


@dataclass(frozen=True)
class Accuracy:
    name = "accuracy"
    lipschitz = 1.0

    def evaluate(self, tnr, tpr, p0, p1):
        return np.add(tnr, tpr)


@dataclass(frozen=True)
class ImmediateUtility:
    """``P(Yhat=1, Y=1) - t P(Yhat=1)``, written on the (tnr, tpr) coordinates."""

    t: float = 0.5
    name = "immediate_utility"

    def __post_init__(self):
        if not 0.0 <= self.t <= 1.0:
            raise ValueError("immediate utility threshold must lie in [0, 1]")

    @property
    def lipschitz(self) -> float:
        return max(self.t, 1.0 - self.t)

    def evaluate(self, tnr, tpr, p0, p1):
        return (1.0 - self.t) * np.asarray(tpr) + self.t * (np.asarray(tnr) - p0)


@dataclass(frozen=True)
class Precision:
    """``P(Y=1 | Yhat=1)``; equals ``p1`` at the all-negative corner."""

    name = "precision"
    lipschitz = float("inf")

    def evaluate(self, tnr, tpr, p0, p1):
        tnr = np.asarray(tnr, dtype=float)
        tpr = np.asarray(tpr, dtype=float)
        den = tpr + p0 - tnr
        safe = np.where(den > 0.0, den, 1.0)
        return np.where(den > 0.0, tpr / safe, p1)


@dataclass(frozen=True)
class SaturatingLinear:
    """``a min(tnr, cap_tnr) + b min(tpr, cap_tpr)``: monotone, flat past the caps."""

    a: float = 1.0
    b: float = 1.0
    cap_tnr: float = 1.0
    cap_tpr: float = 1.0
    name = "saturating_linear"

    def __post_init__(self):
        if self.a < 0 or self.b < 0:
            raise ValueError("saturating_linear weights must be non-negative")

    @property
    def lipschitz(self) -> float:
        return max(self.a, self.b)

    def evaluate(self, tnr, tpr, p0, p1):
        return self.a * np.minimum(tnr, self.cap_tnr) + self.b * np.minimum(tpr, self.cap_tpr)


Metric = Union[Accuracy, ImmediateUtility, Precision, SaturatingLinear]

FAIRNESS_IDS = ("dp", "eo", "er", "predictive_parity")


def parse_metric(spec) -> Metric:
    """Accept a metric object, a name, or a dict such as ``{"name": "immediate_utility", "t": 0.3}``."""
    if isinstance(spec, (Accuracy, ImmediateUtility, Precision, SaturatingLinear)):
        return spec
    if isinstance(spec, str):
        name, _, arg = spec.partition(":")
        if name == "accuracy":
            return Accuracy()
        if name == "precision":
            return Precision()
        if name == "immediate_utility":
            return ImmediateUtility(float(arg) if arg else 0.5)
        if name == "saturating_linear":
            vals = [float(v) for v in arg.split(",")] if arg else []
            return SaturatingLinear(*vals)
        raise ValueError(f"unknown metric {spec!r}")
    if isinstance(spec, dict):
        kw = dict(spec)
        name = kw.pop("name")
        cls = {"accuracy": Accuracy, "precision": Precision,
               "immediate_utility": ImmediateUtility, "saturating_linear": SaturatingLinear}[name]
        return cls(**kw)
    raise TypeError(f"cannot interpret {spec!r} as a metric")


def metric_to_dict(metric: Metric) -> dict:
    out = {"name": metric.name}
    if isinstance(metric, ImmediateUtility):
        out["t"] = metric.t
    elif isinstance(metric, SaturatingLinear):
        out.update(a=metric.a, b=metric.b, cap_tnr=metric.cap_tnr, cap_tpr=metric.cap_tpr)
    return out


def _check_box(tnr, tpr, stats: GroupStats):
    tnr = np.asarray(tnr, dtype=float)
    tpr = np.asarray(tpr, dtype=float)
    bad = (tnr < -FEAS_TOL) | (tnr > stats.p0 + FEAS_TOL) | (tpr < -FEAS_TOL) | (tpr > stats.p1 + FEAS_TOL)
    if np.any(bad):
        raise ValueError("infeasible point for these base rates")


def eval_metric(metric, tnr, tpr, stats: GroupStats):
    metric = parse_metric(metric)
    _check_box(tnr, tpr, stats)
    out = metric.evaluate(tnr, tpr, stats.p0, stats.p1)
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------- fairness


def fairness_values(fid: str, tnr0, tpr0, s0: GroupStats, tnr1, tpr1, s1: GroupStats):
    """Vectorised fairness measure; all six point arguments broadcast."""
    tnr0, tpr0, tnr1, tpr1 = (np.asarray(v, dtype=float) for v in (tnr0, tpr0, tnr1, tpr1))
    if fid == "dp":
        return np.abs((tpr1 - tnr1 + s1.p0) - (tpr0 - tnr0 + s0.p0))
    if fid == "eo":
        if s0.p1 <= 0.0 or s1.p1 <= 0.0:
            raise ValueError("degenerate group")
        return np.abs(tpr1 / s1.p1 - tpr0 / s0.p1)
    if fid == "er":
        if s0.p0 <= 0.0 or s1.p0 <= 0.0:
            raise ValueError("degenerate group")
        return np.abs(tnr1 / s1.p0 - tnr0 / s0.p0)
    if fid == "predictive_parity":
        prec = Precision()
        return np.abs(prec.evaluate(tnr1, tpr1, s1.p0, s1.p1) - prec.evaluate(tnr0, tpr0, s0.p0, s0.p1))
    raise ValueError(f"unknown fairness measure {fid!r}")


def fairness_measure(fid: str, x0, s0: GroupStats, x1, s1: GroupStats) -> float:
    _check_box(x0[0], x0[1], s0)
    _check_box(x1[0], x1[1], s1)
    return float(fairness_values(fid, x0[0], x0[1], s0, x1[0], x1[1], s1))


def fairness_lipschitz(fid: str, stats: GroupStats) -> float:
    """Bound on |dU| per unit change of one coordinate of this group's point."""
    if fid == "dp":
        return 1.0
    if fid == "eo":
        return 1.0 / stats.p1
    if fid == "er":
        return 1.0 / stats.p0
    return float("inf")


# ---------------------------------------------------------------- first quadrant


@dataclass
class FirstQuadrantReport:
    fairness: str
    passes: bool
    n_checked: int
    witness: dict | None = None


def _feasible_grid(ips, n: int) -> np.ndarray:
    xs = (np.arange(n) + 0.5) / n * ips.p0
    ys = (np.arange(n) + 0.5) / n * ips.p1
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    pts = np.column_stack([X.ravel(), Y.ravel()])
    return pts[contains(ips, pts, 0.0)]


def _partial(f, pts, axis, ips, step):
    """Central difference where both probes are feasible, one-sided otherwise."""
    e = np.zeros(2)
    e[axis] = step
    fwd_ok = contains(ips, pts + e, 0.0)
    bwd_ok = contains(ips, pts - e, 0.0)
    f0 = f(pts)
    fp = f(pts + e)
    fm = f(pts - e)
    central = (fp - fm) / (2 * step)
    forward = (fp - f0) / step
    backward = (f0 - fm) / step
    return np.where(fwd_ok & bwd_ok, central, np.where(fwd_ok, forward, backward))


def check_first_quadrant_condition(fid: str, problem: GroupedProblem, grid_n: int = 16,
                                   step: float = FD_STEP, tol: float = FQC_TOL) -> FirstQuadrantReport:
    """Check ``min(dF/dtnr_A, dF/dtpr_A) <= 0`` for the squared measure ``F``.

    Each group in turn is moved over a ``grid_n x grid_n`` feasible grid while
    the other group sits at each of its own grid points.
    """
    if grid_n < 8:
        raise ValueError("grid_n must be at least 8")
    if len(problem) != 2:
        raise ValueError("first-quadrant check needs exactly two groups")
    g0, g1 = problem.group_ids
    stats = {g: GroupStats.of(problem, g) for g in (g0, g1)}
    geoms = {g: ips_from_distribution(problem[g].dist) for g in (g0, g1)}
    grids = {g: _feasible_grid(geoms[g], grid_n) for g in (g0, g1)}
    n_checked = 0
    for moving, fixed in ((g0, g1), (g1, g0)):
        for other in grids[fixed]:
            if moving == g0:
                def f(p, other=other):
                    return fairness_values(fid, p[:, 0], p[:, 1], stats[g0], other[0], other[1], stats[g1]) ** 2
            else:
                def f(p, other=other):
                    return fairness_values(fid, other[0], other[1], stats[g0], p[:, 0], p[:, 1], stats[g1]) ** 2
            pts = grids[moving]
            d_tnr = _partial(f, pts, 0, geoms[moving], step)
            d_tpr = _partial(f, pts, 1, geoms[moving], step)
            n_checked += len(pts)
            bad = np.minimum(d_tnr, d_tpr) > tol
            if np.any(bad):
                k = int(np.argmax(bad))
                return FirstQuadrantReport(fid, False, n_checked, {
                    "group": moving,
                    "point": [float(pts[k, 0]), float(pts[k, 1])],
                    "other_group": fixed,
                    "other_point": [float(other[0]), float(other[1])],
                    "d_tnr": float(d_tnr[k]),
                    "d_tpr": float(d_tpr[k]),
                })
    return FirstQuadrantReport(fid, True, n_checked, None)
