"""Multi-label confusion matrices, their two pre-orders, and weighted-argmax partitions.

Entry ``(i, j)`` of a confusion matrix is ``P(Yhat = y_j, Y = y_i)``.  Rows
therefore sum to the label marginals, which any two decisions on the same
problem share.
"""
from __future__ import annotations

import enum
import logging
import math

import numpy as np

TOL = 1e-12


class Order(enum.Enum):
    LESS = "Less"
    GREATER = "Greater"
    EQUIVALENT = "Equivalent"
    INCOMPARABLE = "Incomparable"


class ConfusionMatrix:
    def __init__(self, entries):
        m = np.array(entries, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] < 2:
            raise ValueError("confusion matrix must be square with n >= 2")
        if not np.all(np.isfinite(m)) or np.any(m < 0):
            raise ValueError("confusion matrix entries must be finite and non-negative")
        if abs(m.sum() - 1.0) > TOL:
            raise ValueError("confusion matrix must sum to 1")
        m.setflags(write=False)
        self.entries = m

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    @property
    def diagonal(self) -> np.ndarray:
        return np.diag(self.entries)

    @property
    def off_diagonal(self) -> np.ndarray:
        return self.entries[~np.eye(self.n, dtype=bool)]

    @property
    def marginals(self) -> np.ndarray:
        return self.entries.sum(axis=1)

    def __repr__(self) -> str:
        return f"ConfusionMatrix({self.entries.tolist()})"


def _vector_order(a: np.ndarray, b: np.ndarray) -> Order:
    le = np.all(a <= b + TOL)
    ge = np.all(a >= b - TOL)
    if le and ge:
        return Order.EQUIVALENT
    if le:
        return Order.LESS
    if ge:
        return Order.GREATER
    return Order.INCOMPARABLE


def _same_size(a: ConfusionMatrix, b: ConfusionMatrix):
    if a.n != b.n:
        raise ValueError("confusion matrices differ in size")


def pareto_compare(a: ConfusionMatrix, b: ConfusionMatrix) -> Order:
    """Compare correct-classification masses entrywise."""
    _same_size(a, b)
    return _vector_order(a.diagonal, b.diagonal)


def error_compare(a: ConfusionMatrix, b: ConfusionMatrix) -> Order:
    """Compare error masses entrywise; more error is lower in the order."""
    _same_size(a, b)
    return _vector_order(-a.off_diagonal, -b.off_diagonal)


def at_most(o: Order) -> bool:
    return o in (Order.LESS, Order.EQUIVALENT)


# ---------------------------------------------------------------- weighted-argmax partitions


class LimitRatioMatrix:
    """Limits of weight ratios ``omega_i / omega_j`` with entries in ``[0, inf]``."""

    def __init__(self, R):
        R = np.array(R, dtype=float)
        n = R.shape[0]
        if R.ndim != 2 or R.shape != (n, n) or n < 2:
            raise ValueError("limit-ratio matrix must be square with n >= 2")
        if np.any(np.isnan(R)) or np.any(R < 0):
            raise ValueError("limit ratios must lie in [0, inf]")
        if not np.allclose(np.diag(R), 1.0, rtol=0, atol=TOL):
            raise ValueError("limit ratios need a unit diagonal")
        for i in range(n):
            for j in range(n):
                a, b = R[i, j], R[j, i]
                if a == 0 or math.isinf(a):
                    if not ((a == 0 and math.isinf(b)) or (math.isinf(a) and b == 0)):
                        raise ValueError(f"inconsistent limit ratios at ({i}, {j})")
                elif abs(a * b - 1.0) > 1e-9:
                    raise ValueError(f"inconsistent limit ratios at ({i}, {j})")
        fin = np.isfinite(R) & (R > 0)
        for i in range(n):
            for j in range(n):
                for k in range(n):
                    if fin[i, j] and fin[j, k] and fin[i, k]:
                        if abs(R[i, j] * R[j, k] - R[i, k]) > 1e-9 * max(1.0, R[i, k]):
                            raise ValueError(f"inconsistent limit ratios on ({i}, {j}, {k})")
        R.setflags(write=False)
        self.R = R

    @property
    def n(self) -> int:
        return self.R.shape[0]

    @classmethod
    def from_weights(cls, omega) -> "LimitRatioMatrix":
        w = _check_weights(omega)
        return cls(w[:, None] / w[None, :])

    def to_json(self) -> list:
        return [[("inf" if math.isinf(v) else v) for v in row] for row in self.R.tolist()]

    @classmethod
    def from_json(cls, rows) -> "LimitRatioMatrix":
        return cls([[math.inf if v in ("inf", "Infinity") else float(v) for v in row] for row in rows])


def _check_weights(omega) -> np.ndarray:
    w = np.asarray(omega, dtype=float)
    if w.ndim != 1 or w.size < 2:
        raise ValueError("weights must be a vector with at least 2 entries")
    if abs(w.sum() - 1.0) > 1e-9:
        raise ValueError("weights must sum to 1")
    if np.any(w <= 0):
        raise ValueError("weights on the simplex boundary need weller_limit_partition")
    return w


def simplex_grid(n: int, grid: int) -> np.ndarray:
    """All points of the simplex with coordinates in multiples of ``1 / grid``."""
    if grid < 2:
        raise ValueError("grid must be at least 2")

    def comps(total, parts):
        if parts == 1:
            yield (total,)
            return
        for k in range(total, -1, -1):
            for rest in comps(total - k, parts - 1):
                yield (k,) + rest

    return np.array(list(comps(grid, n)), dtype=float) / grid


def weller_labels(omega, t) -> np.ndarray:
    """Boolean mask (``len(t)``, n) of labels maximising ``t_i / omega_i``."""
    w = _check_weights(omega)
    t = np.atleast_2d(np.asarray(t, dtype=float))
    ratio = t / w
    top = ratio.max(axis=1, keepdims=True)
    return (ratio >= top - TOL * np.maximum(1.0, top)) & (t > 0)


def limit_labels(R: LimitRatioMatrix, t) -> np.ndarray:
    """Label ``i`` allowed iff ``t_i > 0`` and ``t_i >= R_ij t_j`` for every ``j``.

    An infinite ratio is met only where ``t_j = 0``.
    """
    t = np.atleast_2d(np.asarray(t, dtype=float))
    inf = np.isinf(R.R)[None]
    finite = np.where(inf[0], 0.0, R.R)[None]
    ti = t[:, :, None]
    tj = t[:, None, :]
    finite_ok = ti - finite * tj >= -TOL * np.maximum(1.0, ti)
    ok = np.where(inf, tj == 0.0, finite_ok)
    return ok.all(axis=2) & (t > 0)


def weller_partition(omega, grid: int) -> tuple[np.ndarray, np.ndarray]:
    w = _check_weights(omega)
    pts = simplex_grid(w.size, grid)
    return pts, weller_labels(w, pts)


def weller_limit_partition(R: LimitRatioMatrix, grid: int) -> tuple[np.ndarray, np.ndarray]:
    pts = simplex_grid(R.n, grid)
    labels = limit_labels(R, pts)
    empty = ~labels.any(axis=1)
    if empty.any():
        logging.getLogger(__name__).warning("%d grid points with no allowed label", int(empty.sum()))
    return pts, labels
