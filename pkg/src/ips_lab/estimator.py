"""scikit-learn style post-processor for calibrated scores.

``FairThresholdPostProcessor`` takes calibrated scores ``P(Y=1 | x)`` and a
two-valued sensitive attribute, solves the penalised fairness problem on the
induced score distributions, and predicts with the per-atom randomised
decision that realises the chosen optimum.  When ``prefer_clean`` is set the
optimum closest to both group frontiers is used, so the decision is a
group-wise threshold whenever a clean optimum exists.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils import check_random_state
from sklearn.utils.validation import check_is_fitted

from .cherrypick import default_cp_tol, detect
from .ips import realize_point
from .problem import pushforward_from_dataset
from .solver import FairnessProblemSpec, solve_grid, solve_thresholds


def _scores(X) -> np.ndarray:
    s = np.asarray(X, dtype=float)
    if s.ndim == 2:
        if s.shape[1] == 2:
            s = s[:, 1]
        elif s.shape[1] == 1:
            s = s[:, 0]
        else:
            raise ValueError("X must hold one score column or two class-probability columns")
    if s.ndim != 1:
        raise ValueError("X must be 1-D scores or a 2-D score array")
    return s


class FairThresholdPostProcessor(ClassifierMixin, BaseEstimator):
    def __init__(self, metric="accuracy", fairness="dp", c=1.0, metric_scale=1.0, h=1.0 / 256,
                 method="grid", opt_tol=1e-6, prefer_clean=True, cp_tol=None, random_state=None):
        self.metric = metric
        self.fairness = fairness
        self.c = c
        self.metric_scale = metric_scale
        self.h = h
        self.method = method
        self.opt_tol = opt_tol
        self.prefer_clean = prefer_clean
        self.cp_tol = cp_tol
        self.random_state = random_state

    def fit(self, X, y=None, sensitive_features=None, sample_weight=None):
        s = _scores(X)
        if sensitive_features is None:
            raise ValueError("sensitive_features is required")
        a = np.asarray(sensitive_features).astype(str)
        w = np.ones_like(s) if sample_weight is None else np.asarray(sample_weight, dtype=float)
        if not (len(s) == len(a) == len(w)):
            raise ValueError("X, sensitive_features and sample_weight differ in length")
        self.problem_ = pushforward_from_dataset(zip(s, w, a))
        spec = FairnessProblemSpec(self.metric, self.fairness, self.c, self.metric_scale)
        if self.method == "grid":
            res = solve_grid(self.problem_, spec, self.h, self.opt_tol)
        elif self.method == "thresholds":
            res = solve_thresholds(self.problem_, spec, opt_tol=self.opt_tol)
        else:
            raise ValueError(f"unknown method {self.method!r}")
        cp_tol = default_cp_tol(self.h) if self.cp_tol is None else self.cp_tol
        rep = detect(self.problem_, res, cp_tol)
        k = int(np.argmin(rep.frontier_dist.max(axis=1))) if self.prefer_clean else 0
        opt = res.optima[k]
        self.result_ = res
        self.best_value_ = res.best_value
        self.cherry_picks_ = bool(rep.cherry_picks[k])
        self.groups_ = tuple(res.group_ids)
        self.operating_points_ = {self.groups_[0]: opt.x0, self.groups_[1]: opt.x1}
        self.decisions_ = {}
        for g in self.groups_:
            dist = self.problem_[g].dist
            self.decisions_[g] = (dist.scores.copy(), realize_point(dist, self.operating_points_[g]).lam.copy())
        self.classes_ = np.array([0, 1])
        return self

    def _lam(self, X, sensitive_features) -> np.ndarray:
        check_is_fitted(self, "decisions_")
        s = _scores(X)
        a = np.asarray(sensitive_features).astype(str)
        if len(a) != len(s):
            raise ValueError("X and sensitive_features differ in length")
        lam = np.empty_like(s)
        for g in np.unique(a):
            if g not in self.decisions_:
                raise ValueError(f"unseen group {g!r}")
            atoms, lam_g = self.decisions_[g]
            sel = a == g
            # nearest atom; atoms are sorted ascending
            k = np.clip(np.searchsorted(atoms, s[sel]), 1, max(len(atoms) - 1, 1))
            if len(atoms) == 1:
                lam[sel] = lam_g[0]
                continue
            left = np.abs(s[sel] - atoms[k - 1]) <= np.abs(atoms[k] - s[sel])
            lam[sel] = lam_g[np.where(left, k - 1, k)]
        return lam

    def predict_proba(self, X, sensitive_features=None):
        lam = self._lam(X, sensitive_features)
        return np.column_stack([1.0 - lam, lam])

    def predict(self, X, sensitive_features=None):
        lam = self._lam(X, sensitive_features)
        rng = check_random_state(self.random_state)
        return (rng.uniform(size=lam.size) < lam).astype(int)
