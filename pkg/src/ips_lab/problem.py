"""Score-distribution representation of grouped binary classification problems.

A problem on an arbitrary population is summarised by the distribution of its
calibrated scores ``s = P(Y=1 | x)``.  Each sensitive group carries its own
distribution and a prior mass.  Decisions are per-atom probabilities of
predicting the positive label.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

SCORE_TOL = 1e-12
MASS_TOL = 1e-12


class ProblemError(ValueError):
    """Raised when an instance violates the representation invariants."""


@dataclass(frozen=True, eq=False)
class ScoreDistribution:
    """Weighted atoms ``(score, mass)`` on [0, 1], sorted by score.

    Construction normalises masses and merges scores closer than ``SCORE_TOL``.
    """

    scores: np.ndarray
    masses: np.ndarray

    def __init__(self, scores, masses, normalize: bool = True):
        s = np.asarray(scores, dtype=float).ravel()
        m = np.asarray(masses, dtype=float).ravel()
        if s.shape != m.shape:
            raise ProblemError("scores and masses differ in length")
        if s.size == 0:
            raise ProblemError("no data")
        if not np.all(np.isfinite(s)) or np.any(s < 0.0) or np.any(s > 1.0):
            raise ProblemError("invalid score")
        if not np.all(np.isfinite(m)) or np.any(m <= 0.0):
            raise ProblemError("atom masses must be positive")
        order = np.argsort(s, kind="stable")
        s, m = s[order], m[order]
        # merge runs of equal scores
        keep_s, keep_m = [s[0]], [m[0]]
        for si, mi in zip(s[1:], m[1:]):
            if si - keep_s[-1] <= SCORE_TOL:
                keep_m[-1] += mi
            else:
                keep_s.append(si)
                keep_m.append(mi)
        s = np.array(keep_s)
        m = np.array(keep_m)
        total = m.sum()
        if normalize:
            m = m / total
        elif abs(total - 1.0) > MASS_TOL:
            raise ProblemError(f"masses sum to {total!r}, expected 1")
        s.setflags(write=False)
        m.setflags(write=False)
        object.__setattr__(self, "scores", s)
        object.__setattr__(self, "masses", m)

    @classmethod
    def from_atoms(cls, atoms: Iterable, normalize: bool = True) -> "ScoreDistribution":
        atoms = [tuple(a) for a in atoms]
        if not atoms:
            raise ProblemError("no data")
        s, m = zip(*atoms)
        return cls(s, m, normalize=normalize)

    def __len__(self) -> int:
        return self.scores.size

    def __eq__(self, other) -> bool:
        if not isinstance(other, ScoreDistribution):
            return NotImplemented
        return (
            self.scores.shape == other.scores.shape
            and np.array_equal(self.scores, other.scores)
            and np.array_equal(self.masses, other.masses)
        )

    def __repr__(self) -> str:
        return f"ScoreDistribution(atoms={self.atoms()!r})"

    def atoms(self) -> list[tuple[float, float]]:
        return [(float(s), float(m)) for s, m in zip(self.scores, self.masses)]

    @property
    def p1(self) -> float:
        return float(np.dot(self.masses, self.scores))

    @property
    def p0(self) -> float:
        return 1.0 - self.p1

    @property
    def has_extreme_scores(self) -> bool:
        """True if some atom sits at score 0 or 1 (labels excluded with certainty)."""
        return bool(np.any(self.scores <= 0.0) or np.any(self.scores >= 1.0))

    @property
    def is_degenerate(self) -> bool:
        """A single distinct score: the achievable set is a segment."""
        return self.scores.size < 2


def base_rates(dist: ScoreDistribution) -> tuple[float, float]:
    """Return ``(p0, p1) = (P(Y=0), P(Y=1))`` of a distribution."""
    p1 = min(max(dist.p1, 0.0), 1.0)
    return 1.0 - p1, p1


@dataclass(frozen=True)
class GroupEntry:
    prior: float
    dist: ScoreDistribution
    p0: float = field(init=False)
    p1: float = field(init=False)

    def __post_init__(self):
        p0, p1 = base_rates(self.dist)
        object.__setattr__(self, "p0", p0)
        object.__setattr__(self, "p1", p1)


class GroupedProblem(Mapping):
    """Sensitive groups, each a prior mass and a score distribution.

    Behaves as a read-only mapping ``group_id -> GroupEntry`` that keeps the
    insertion order of the groups.
    """

    def __init__(self, groups: Mapping[str, tuple[float, ScoreDistribution] | GroupEntry]):
        entries = {}
        for gid, val in groups.items():
            if isinstance(val, GroupEntry):
                entry = val
            else:
                prior, dist = val
                if not isinstance(dist, ScoreDistribution):
                    dist = ScoreDistribution.from_atoms(dist)
                entry = GroupEntry(float(prior), dist)
            if not (0.0 < entry.prior <= 1.0):
                raise ProblemError(f"prior of group {gid!r} outside (0, 1]")
            entries[str(gid)] = entry
        if not entries:
            raise ProblemError("no groups")
        total = sum(e.prior for e in entries.values())
        if abs(total - 1.0) > MASS_TOL:
            raise ProblemError(f"group priors sum to {total!r}, expected 1")
        self._groups = entries

    def __getitem__(self, gid: str) -> GroupEntry:
        return self._groups[gid]

    def __iter__(self):
        return iter(self._groups)

    def __len__(self) -> int:
        return len(self._groups)

    def __repr__(self) -> str:
        inner = ", ".join(f"{g!r}: ({e.prior!r}, {e.dist!r})" for g, e in self._groups.items())
        return f"GroupedProblem({{{inner}}})"

    def __eq__(self, other) -> bool:
        if not isinstance(other, GroupedProblem):
            return NotImplemented
        return list(self) == list(other) and all(
            self[g].prior == other[g].prior and self[g].dist == other[g].dist for g in self
        )

    @property
    def group_ids(self) -> list[str]:
        return list(self._groups)

    def pooled(self) -> ScoreDistribution:
        """Score distribution of the whole population (prior-weighted mixture)."""
        s = np.concatenate([e.dist.scores for e in self._groups.values()])
        m = np.concatenate([e.prior * e.dist.masses for e in self._groups.values()])
        return ScoreDistribution(s, m)

    def to_json_dict(self) -> dict:
        return {
            "groups": {
                gid: {"prior": e.prior, "atoms": [[s, m] for s, m in e.dist.atoms()]}
                for gid, e in self._groups.items()
            }
        }

    @classmethod
    def from_json_dict(cls, data: Mapping) -> "GroupedProblem":
        try:
            groups = data["groups"]
            parsed = {
                gid: (float(g["prior"]), ScoreDistribution.from_atoms(g["atoms"]))
                for gid, g in groups.items()
            }
        except (KeyError, TypeError, AttributeError) as exc:
            raise ProblemError(f"malformed instance: {exc}") from exc
        return cls(parsed)


def pushforward_from_dataset(records: Iterable) -> GroupedProblem:
    """Build a grouped problem from ``(score, weight, group_id)`` records.

    Group priors are proportional to total group weight; records with zero
    weight are ignored.
    """
    sums: dict[str, list] = {}
    seen = False
    for rec in records:
        seen = True
        score, weight, gid = rec
        score = float(score)
        weight = float(weight)
        if not np.isfinite(score) or score < 0.0 or score > 1.0:
            raise ProblemError("invalid score")
        if not np.isfinite(weight) or weight < 0.0:
            raise ProblemError("negative weight")
        bucket = sums.setdefault(str(gid), [[], []])
        if weight > 0.0:
            bucket[0].append(score)
            bucket[1].append(weight)
    if not seen:
        raise ProblemError("no data")
    totals = {}
    for gid, (s, w) in sums.items():
        if not w:
            raise ProblemError(f"group {gid!r} has no positive weight")
        totals[gid] = float(np.sum(w))
    grand = sum(totals.values())
    return GroupedProblem(
        {gid: (totals[gid] / grand, ScoreDistribution(s, w)) for gid, (s, w) in sums.items()}
    )


@dataclass(frozen=True, eq=False)
class AtomDecision:
    """Probability of predicting label 1 on each atom of a distribution."""

    lam: np.ndarray

    def __init__(self, lam):
        lam = np.asarray(lam, dtype=float).ravel()
        if np.any(~np.isfinite(lam)) or np.any(lam < 0.0) or np.any(lam > 1.0):
            raise ProblemError("decision probabilities must lie in [0, 1]")
        lam = lam.copy()
        lam.setflags(write=False)
        object.__setattr__(self, "lam", lam)

    def __len__(self) -> int:
        return self.lam.size

    def cherry_picks(self, dist: ScoreDistribution, tol: float = 0.0) -> bool:
        """Some lower-score atom gets positives while a higher-score atom gets negatives."""
        _check_length(dist, self)
        lam = self.lam
        n = lam.size
        for i in range(n):
            if lam[i] <= tol:
                continue
            if np.any(lam[i + 1 :] < 1.0 - tol):
                return True
        return False


def _check_length(dist: ScoreDistribution, d: AtomDecision) -> None:
    if len(d) != len(dist):
        raise ProblemError(f"decision has {len(d)} entries, distribution has {len(dist)} atoms")


def operating_point(dist: ScoreDistribution, d: AtomDecision) -> tuple[float, float]:
    """Group-conditional ``(tnr, tpr) = (P(Yhat=0, Y=0), P(Yhat=1, Y=1))``."""
    _check_length(dist, d)
    s, m, lam = dist.scores, dist.masses, d.lam
    tnr = float(np.sum((1.0 - lam) * m * (1.0 - s)))
    tpr = float(np.sum(lam * m * s))
    return tnr, tpr


def confusion_matrix(dist: ScoreDistribution, d: AtomDecision) -> np.ndarray:
    """2x2 joint matrix with entry ``(i, j) = P(Yhat=j, Y=i)``."""
    _check_length(dist, d)
    s, m, lam = dist.scores, dist.masses, d.lam
    out = np.empty((2, 2))
    out[0, 0] = np.sum((1.0 - lam) * m * (1.0 - s))
    out[0, 1] = np.sum(lam * m * (1.0 - s))
    out[1, 0] = np.sum((1.0 - lam) * m * s)
    out[1, 1] = np.sum(lam * m * s)
    return out


@dataclass(frozen=True)
class Slicing:
    """Per atom, per label, a list of half-open subintervals of [0, 1).

    ``intervals[k][j]`` holds the pieces of the auxiliary coordinate given to
    label ``j`` on atom ``k``; the pieces of one atom partition [0, 1).
    """

    intervals: tuple[tuple[tuple[tuple[float, float], ...], ...], ...]

    def lengths(self) -> np.ndarray:
        """Array ``(n_atoms, n_labels)`` of total interval length per label."""
        return np.array(
            [[sum(b - a for a, b in pieces) for pieces in atom] for atom in self.intervals]
        )

    def measure_matrix(self, dist: ScoreDistribution) -> np.ndarray:
        """Entry ``(i, j)``: conditioned mass of label ``i`` carried by slice ``j``."""
        lengths = self.lengths()
        probs = np.column_stack([1.0 - dist.scores, dist.scores]) * dist.masses[:, None]
        return probs.T @ lengths

    def is_partition(self, tol: float = 1e-12) -> bool:
        for atom in self.intervals:
            pieces = sorted(p for label in atom for p in label)
            pos = 0.0
            for a, b in pieces:
                if abs(a - pos) > tol or b < a:
                    return False
                pos = b
            if abs(pos - 1.0) > tol:
                return False
        return True


def lift_to_slicing(dist: ScoreDistribution, d: AtomDecision) -> Slicing:
    """Lift a randomised decision to a deterministic slicing of atoms x [0, 1).

    On atom ``k`` label 0 receives ``[0, 1 - lam_k)`` and label 1 receives
    ``[1 - lam_k, 1)``; empty pieces are dropped.
    """
    _check_length(dist, d)
    atoms = []
    for lam_k in d.lam:
        cut = 1.0 - float(lam_k)
        zero = ((0.0, cut),) if cut > 0.0 else ()
        one = ((cut, 1.0),) if cut < 1.0 else ()
        atoms.append((zero, one))
    return Slicing(tuple(atoms))


def slicing_operating_point(dist: ScoreDistribution, slicing: Slicing) -> tuple[float, float]:
    mat = slicing.measure_matrix(dist)
    return float(mat[0, 0]), float(mat[1, 1])
