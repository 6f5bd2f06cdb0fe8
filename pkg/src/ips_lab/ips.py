"""Exact geometry of the set of achievable ``(tnr, tpr)`` pairs of one group.

For a distribution with atoms ``(s_i, m_i)`` every decision lands at
``(p0, 0) + sum_i lam_i * g_i`` with generator ``g_i = (-m_i (1 - s_i), m_i s_i)``,
so the achievable set is a 2-D zonotope.  Its upper boundary (the Pareto
frontier) is traced by adding generators in order of descending score, the
lower boundary by ascending score.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .problem import AtomDecision, ProblemError, ScoreDistribution, operating_point

GEOM_TOL = 1e-9
SLOPE_TOL = 1e-12


class InfeasiblePoint(ValueError):
    pass


def _sweep(dist: ScoreDistribution, descending: bool) -> np.ndarray:
    s, m = dist.scores, dist.masses
    order = np.argsort(-s if descending else s, kind="stable")
    gens = np.column_stack([-m[order] * (1.0 - s[order]), m[order] * s[order]])
    return _merge_collinear(gens)


def _merge_collinear(gens: np.ndarray) -> np.ndarray:
    merged = [gens[0].copy()]
    for g in gens[1:]:
        last = merged[-1]
        cross = last[0] * g[1] - last[1] * g[0]
        scale = np.hypot(*last) * np.hypot(*g)
        if abs(cross) <= SLOPE_TOL * max(scale, 1e-300):
            merged[-1] = last + g
        else:
            merged.append(g.copy())
    return np.array(merged)


def _polyline(start, gens: np.ndarray) -> np.ndarray:
    pts = np.vstack([np.asarray(start, dtype=float), np.asarray(start) + np.cumsum(gens, axis=0)])
    return pts


def _envelope(poly: np.ndarray, upper: bool) -> tuple[np.ndarray, np.ndarray]:
    """Sorted unique tnr knots with the max (upper) or min (lower) tpr at each."""
    order = np.lexsort((poly[:, 1], poly[:, 0]))
    pts = poly[order]
    xs, ys = [pts[0, 0]], [pts[0, 1]]
    for x, y in pts[1:]:
        if x - xs[-1] <= 1e-15:
            ys[-1] = max(ys[-1], y) if upper else min(ys[-1], y)
        else:
            xs.append(x)
            ys.append(y)
    return np.array(xs), np.array(ys)


@dataclass(frozen=True, eq=False)
class IpsGeometry:
    """Upper and lower boundary polylines, both from ``(p0, 0)`` to ``(0, p1)``."""

    upper: np.ndarray
    lower: np.ndarray
    p0: float
    p1: float

    def __post_init__(self):
        for name in ("upper", "lower"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "_up", _envelope(self.upper, True))
        object.__setattr__(self, "_lo", _envelope(self.lower, False))

    @property
    def generators(self) -> np.ndarray:
        """Upper-frontier segment vectors, steepest first."""
        return np.diff(self.upper, axis=0)

    @property
    def vertices(self) -> np.ndarray:
        """Polygon vertices, counter-clockwise, starting at ``(p0, 0)``."""
        ring = np.vstack([self.upper, self.lower[-2:0:-1]])
        return ring

    @property
    def center(self) -> tuple[float, float]:
        return self.p0 / 2.0, self.p1 / 2.0

    @property
    def is_degenerate(self) -> bool:
        return len(self.upper) <= 2 and np.allclose(self.upper, self.lower)

    def upper_at(self, tnr):
        xs, ys = self._up
        return np.interp(np.clip(tnr, 0.0, self.p0), xs, ys)

    def lower_at(self, tnr):
        xs, ys = self._lo
        return np.interp(np.clip(tnr, 0.0, self.p0), xs, ys)


def ips_from_distribution(dist: ScoreDistribution) -> IpsGeometry:
    p0, p1 = 1.0 - dist.p1, dist.p1
    upper = _polyline((p0, 0.0), _sweep(dist, descending=True))
    lower = _polyline((p0, 0.0), _sweep(dist, descending=False))
    # pin the shared end exactly; cumulative sums drift by an ulp or two
    upper[-1] = lower[-1] = (0.0, p1)
    return IpsGeometry(upper, lower, p0, p1)


def contains(ips: IpsGeometry, point, tol: float = GEOM_TOL):
    """Membership with polylines evaluated by linear interpolation.

    ``point`` may be a single pair or an ``(n, 2)`` array; the result is a bool
    or a boolean array accordingly.
    """
    if tol < 0:
        raise ValueError("tol must be non-negative")
    pts = np.asarray(point, dtype=float)
    x, y = pts[..., 0], pts[..., 1]
    ok = (x >= -tol) & (x <= ips.p0 + tol)
    ok &= y <= ips.upper_at(x) + tol
    ok &= y >= ips.lower_at(x) - tol
    return bool(ok) if ok.ndim == 0 else ok


def frontier_distance(ips: IpsGeometry, point) -> float:
    """Vertical gap between a feasible point and the Pareto frontier."""
    if not contains(ips, point, GEOM_TOL):
        raise InfeasiblePoint(f"infeasible point {tuple(point)!r}")
    x, y = float(point[0]), float(point[1])
    return max(float(ips.upper_at(x)) - y, 0.0)


def frontier_distances(ips: IpsGeometry, points: np.ndarray) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    if not np.all(contains(ips, pts, GEOM_TOL)):
        raise InfeasiblePoint("infeasible point in batch")
    return np.maximum(ips.upper_at(pts[:, 0]) - pts[:, 1], 0.0)


def _shoelace(ring: np.ndarray) -> float:
    x, y = ring[:, 0], ring[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


def area(ips: IpsGeometry) -> float:
    """Lebesgue area, as the zonotope generator sum cross-checked by shoelace."""
    g = ips.generators
    if len(g) < 2:
        gen_area = 0.0
    else:
        # generators are angle-sorted, so every pairwise cross product has one sign
        suffix = np.cumsum(g[::-1], axis=0)[::-1]
        tail = suffix[1:]
        gen_area = abs(float(np.sum(g[:-1, 0] * tail[:, 1] - g[:-1, 1] * tail[:, 0])))
    poly_area = _shoelace(ips.vertices) if len(ips.vertices) >= 3 else 0.0
    if abs(gen_area - poly_area) > 1e-9 * max(1.0, gen_area):
        raise ArithmeticError(f"area mismatch: generators {gen_area!r} vs shoelace {poly_area!r}")
    return gen_area


def _linear_root(x0, x1, f0, f1):
    if (f0 < 0 < f1) or (f1 < 0 < f0):
        return x0 + (x1 - x0) * f0 / (f0 - f1)
    return None


def symmetric_difference_area(a: IpsGeometry, b: IpsGeometry) -> float:
    """Area of ``a \\u25b3 b`` by exact piecewise-linear integration over tnr."""
    knots = np.unique(
        np.concatenate([a._up[0], a._lo[0], b._up[0], b._lo[0], [0.0, a.p0, b.p0]])
    )

    def bounds(g: IpsGeometry, x):
        inside = x <= g.p0 + 1e-15
        return inside, g.lower_at(x), g.upper_at(x)

    def integrand(x):
        ia, la, ua = bounds(a, x)
        ib, lb, ub = bounds(b, x)
        len_a = np.where(ia, ua - la, 0.0)
        len_b = np.where(ib, ub - lb, 0.0)
        inter = np.where(ia & ib, np.maximum(np.minimum(ua, ub) - np.maximum(la, lb), 0.0), 0.0)
        return len_a + len_b - 2.0 * inter

    total = 0.0
    for x0, x1 in zip(knots[:-1], knots[1:]):
        if x1 - x0 <= 0:
            continue
        # inside one cell every boundary is affine; split where the integrand kinks
        cuts = {x0, x1}
        mid = 0.5 * (x0 + x1)
        ia, la0, ua0 = bounds(a, x0)
        ib, lb0, ub0 = bounds(b, x0)
        _, la1, ua1 = bounds(a, x1)
        _, lb1, ub1 = bounds(b, x1)
        if (a.p0 >= mid) and (b.p0 >= mid):
            for f0, f1 in ((ua0 - ub0, ua1 - ub1), (la0 - lb0, la1 - lb1),
                           (ua0 - lb0, ua1 - lb1), (ub0 - la0, ub1 - la1)):
                r = _linear_root(x0, x1, float(f0), float(f1))
                if r is not None:
                    cuts.add(r)
        pts = np.array(sorted(cuts))
        vals = integrand(pts)
        total += float(np.sum(0.5 * (vals[1:] + vals[:-1]) * np.diff(pts)))
    return total


def frontier_to_distribution(upper, p1: float) -> ScoreDistribution:
    """Recover the atoms whose Pareto frontier is ``upper``.

    A frontier segment with slope ``sigma = dtpr / dtnr`` is produced by an atom
    of score ``sigma / (sigma - 1)``; its mass follows from the segment length.
    """
    pts = np.asarray(upper, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 2:
        raise ProblemError("not a frontier")
    p0 = 1.0 - p1
    if np.allclose(pts[0], (0.0, p1), atol=GEOM_TOL) and not np.allclose(pts[0], (p0, 0.0), atol=GEOM_TOL):
        pts = pts[::-1]
    if not (np.allclose(pts[0], (p0, 0.0), atol=GEOM_TOL) and np.allclose(pts[-1], (0.0, p1), atol=GEOM_TOL)):
        raise ProblemError("not a frontier: endpoints must be (p0, 0) and (0, p1)")
    seg = np.diff(pts, axis=0)
    seg = seg[np.hypot(seg[:, 0], seg[:, 1]) > 0.0]
    if np.any(seg[:, 0] > GEOM_TOL) or np.any(seg[:, 1] < -GEOM_TOL):
        raise ProblemError("not a frontier: polyline must move left and up")
    dx = np.minimum(seg[:, 0], 0.0)
    dy = np.maximum(seg[:, 1], 0.0)
    # sigma / (sigma - 1) rewritten so vertical and horizontal segments need no special case
    scores = dy / (dy - dx)
    if np.any(np.diff(scores) > SLOPE_TOL):
        raise ProblemError("not a frontier: slopes are not concave")
    masses = dy - dx
    if abs(masses.sum() - 1.0) > GEOM_TOL:
        raise ProblemError("not a frontier: segment masses do not sum to 1")
    return ScoreDistribution(scores, masses)


def frontier_to_roc(ips: IpsGeometry) -> np.ndarray:
    """Map frontier vertices ``(tnr, tpr)`` to ROC coordinates ``(fpr, tpr_rate)``."""
    if ips.p0 <= 0.0 or ips.p1 <= 0.0:
        raise ProblemError("degenerate base rate")
    return point_to_roc(ips, ips.upper)


def point_to_roc(ips: IpsGeometry, points) -> np.ndarray:
    if ips.p0 <= 0.0 or ips.p1 <= 0.0:
        raise ProblemError("degenerate base rate")
    pts = np.asarray(points, dtype=float)
    return np.stack([(ips.p0 - pts[..., 0]) / ips.p0, pts[..., 1] / ips.p1], axis=-1)


def threshold_decision(dist: ScoreDistribution, t: float, q: float) -> AtomDecision:
    """Positive above ``t``, negative below, probability ``q`` on atoms at ``t``."""
    if not (0.0 <= q <= 1.0):
        raise ValueError("q must lie in [0, 1]")
    s = dist.scores
    lam = np.where(s > t + 1e-12, 1.0, 0.0)
    lam[np.abs(s - t) <= 1e-12] = q
    return AtomDecision(lam)


def threshold_operating_point(dist: ScoreDistribution, t: float, q: float) -> tuple[float, float]:
    return operating_point(dist, threshold_decision(dist, t, q))


def _frontier_decision(dist: ScoreDistribution, tnr: float, upper: bool) -> np.ndarray:
    """Decision reaching the upper (or lower) boundary at the given tnr."""
    s, m = dist.scores, dist.masses
    lam = np.zeros(s.size)
    order = np.argsort(-s if upper else s, kind="stable")
    if upper:
        lam[s >= 1.0] = 1.0
    need = dist.p0 - tnr
    for i in order:
        cost = m[i] * (1.0 - s[i])
        if cost <= 0.0:
            continue
        if need <= 0.0:
            break
        take = min(1.0, need / cost)
        lam[i] = take
        need -= take * cost
    return lam


def realize_point(dist: ScoreDistribution, point, tol: float = GEOM_TOL) -> AtomDecision:
    """A per-atom decision whose operating point is ``point``.

    Mixes the upper and lower boundary decisions that share the point's tnr.
    """
    ips = ips_from_distribution(dist)
    if not contains(ips, point, tol):
        raise InfeasiblePoint(f"infeasible point {tuple(point)!r}")
    x = min(max(float(point[0]), 0.0), ips.p0)
    lam_u = _frontier_decision(dist, x, upper=True)
    lam_l = _frontier_decision(dist, x, upper=False)
    y_u = float(np.dot(lam_u, dist.masses * dist.scores))
    y_l = float(np.dot(lam_l, dist.masses * dist.scores))
    y = min(max(float(point[1]), y_l), y_u)
    alpha = 1.0 if y_u - y_l <= 0.0 else (y - y_l) / (y_u - y_l)
    lam = np.clip(alpha * lam_u + (1.0 - alpha) * lam_l, 0.0, 1.0)
    return AtomDecision(lam)
