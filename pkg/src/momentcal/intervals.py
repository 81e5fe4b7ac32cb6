"""Prediction intervals from calibrated moment predictors, and the multi-moment cover.

For degree ``k`` the half-width at ``x`` is::

    alpha/gamma + eps + 1/m + ((mbar_k(x) + eps + 1/m + beta/gamma) / delta) ** (1/k)

and the interval is ``mu_bar(x)`` plus or minus that width. The cover problem
picks a family of qualifying cells (one degree each) so that every point is
covered, minimizing the expected widest covering width.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .core import FeatureVector, iter_cells


@dataclass(frozen=True)
class IntervalParams:
    gamma: float
    delta: float
    k: int
    alpha: float = 0.0
    beta: float = 0.0
    eps: float = 0.0
    absolute: bool = False

    def __post_init__(self):
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError(f"gamma must lie in (0, 1], got {self.gamma}")
        if not 0.0 < self.delta < 1.0:
            raise ValueError(f"coverage failure probability delta must lie in (0, 1), got {self.delta}")
        if self.k < 2 or (self.k % 2 and not self.absolute):
            raise ValueError(f"degree {self.k} must be even (odd degrees need absolute-moment mode)")
        if min(self.alpha, self.beta, self.eps) < 0:
            raise ValueError("calibration slacks must be nonnegative")

    @classmethod
    def from_exact_training(cls, alpha: float, beta: float, m: int, k: int, gamma: float, delta: float,
                            absolute: bool = False) -> "IntervalParams":
        """Slacks certified for degree ``k`` by exact-mode training at (alpha, beta, m)."""
        return cls(gamma, delta, k, alpha, beta + k * alpha, k / m, absolute)

    @classmethod
    def from_sample_training(cls, alpha_p: float, beta_p: float, m: int, k: int, gamma: float, delta: float,
                             absolute: bool = False) -> "IntervalParams":
        """Slacks certified for degree ``k`` by finite-sample training with levels (alpha', beta')."""
        return cls(gamma, delta, k, alpha_p, k * alpha_p + beta_p, k / m, absolute)


def width_formula(mk: np.ndarray | float, params: IntervalParams, m: int):
    p = params
    inner = (np.asarray(mk, dtype=float) + p.eps + 1.0 / m + p.beta / p.gamma) / p.delta
    return p.alpha / p.gamma + p.eps + 1.0 / m + inner ** (1.0 / p.k)


def _check_degree(bundle, params):
    if params.k not in bundle.moment_degrees:
        raise ValueError(f"degree {params.k} is not predicted by the bundle {bundle.moment_degrees}")
    if params.k % 2 and not bundle.absolute:
        raise ValueError("odd-degree intervals need a bundle trained on absolute central moments")


def interval_widths(bundle, X, params: IntervalParams) -> np.ndarray:
    _check_degree(bundle, params)
    _, moms = bundle.predict(X)
    return width_formula(moms[params.k], params, bundle.bucket_count)


def interval_width(bundle, x, params: IntervalParams) -> float:
    values = x.values if isinstance(x, FeatureVector) else x
    return float(interval_widths(bundle, np.atleast_2d(np.asarray(values, dtype=float)), params)[0])


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float
    raw_lo: float
    raw_hi: float
    mean: float
    width: float


def prediction_intervals(bundle, X, params: IntervalParams) -> dict:
    """Vectorized intervals: arrays ``mean, width, raw_lo, raw_hi, lo, hi`` (lo/hi clipped to [0,1])."""
    _check_degree(bundle, params)
    mean, moms = bundle.predict(X)
    w = width_formula(moms[params.k], params, bundle.bucket_count)
    raw_lo, raw_hi = mean - w, mean + w
    return {"mean": mean, "moment": moms[params.k], "width": w, "raw_lo": raw_lo, "raw_hi": raw_hi,
            "lo": np.clip(raw_lo, 0.0, 1.0), "hi": np.clip(raw_hi, 0.0, 1.0)}


def prediction_interval(bundle, x, params: IntervalParams) -> Interval:
    values = x.values if isinstance(x, FeatureVector) else x
    out = prediction_intervals(bundle, np.atleast_2d(np.asarray(values, dtype=float)), params)
    return Interval(float(out["lo"][0]), float(out["hi"][0]), float(out["raw_lo"][0]), float(out["raw_hi"][0]),
                    float(out["mean"][0]), float(out["width"][0]))


def chebyshev_tail(mk: float, k: int, t: float) -> float:
    """``min(1, mk / t^k)``: bound on ``P(|y - mu| >= t)`` from the k-th central moment."""
    if t <= 0:
        raise ValueError(f"t must be positive, got {t}")
    if k % 2:
        raise ValueError(f"k must be even, got {k}")
    return min(1.0, mk / t ** k)


# --------------------------------------------------------------------------
# cover

@dataclass
class CoverInstance:
    mass: np.ndarray  # (N,)
    members: np.ndarray  # (S, N) bool
    widths: np.ndarray  # (S, N); only entries on members matter
    mean: np.ndarray | None = None  # (N,) mean predictions, for per-point intervals
    labels: list = field(default_factory=list)
    degree: int = 2  # largest degree among the sets, for the approximation factor
    empirical: bool = False

    def __post_init__(self):
        self.mass = np.asarray(self.mass, dtype=float)
        self.members = np.atleast_2d(np.asarray(self.members, dtype=bool))
        self.widths = np.atleast_2d(np.asarray(self.widths, dtype=float))
        if self.members.shape != self.widths.shape or self.members.shape[1] != len(self.mass):
            raise ValueError("members and widths must both be (sets, points)")
        if not self.labels:
            self.labels = [f"S{s + 1}" for s in range(len(self.members))]
        uncovered = np.flatnonzero(~self.members.any(axis=0))
        if len(uncovered):
            raise ValueError(f"point {int(uncovered[0])} lies in no candidate set")

    @property
    def max_set_size(self) -> int:
        return int(self.members.sum(axis=1).max())

    def objective(self, chosen: Sequence[int]) -> float:
        """Expected widest chosen width over covered points (uncovered points count 0)."""
        if not len(chosen):
            return 0.0
        w = np.where(self.members[list(chosen)], self.widths[list(chosen)], 0.0).max(axis=0)
        return float((self.mass * w).sum())

    def coverage(self, chosen: Sequence[int]) -> float:
        if not len(chosen):
            return 0.0
        return float(self.mass[self.members[list(chosen)].any(axis=0)].sum())

    def feasible(self, chosen: Sequence[int]) -> bool:
        return bool(len(chosen)) and bool(self.members[list(chosen)].any(axis=0).all())

    def to_json(self) -> dict:
        return {"mass": self.mass.tolist(), "members": self.members.astype(int).tolist(),
                "widths": np.where(self.members, self.widths, 0.0).tolist(),
                "mean": None if self.mean is None else self.mean.tolist(),
                "labels": list(self.labels), "degree": self.degree, "empirical": self.empirical}

    @classmethod
    def from_json(cls, obj) -> "CoverInstance":
        return cls(np.array(obj["mass"]), np.array(obj["members"], dtype=bool), np.array(obj["widths"]),
                   None if obj.get("mean") is None else np.array(obj["mean"]), list(obj.get("labels", [])),
                   obj.get("degree", 2), obj.get("empirical", False))


def harmonic(n: int) -> float:
    return sum(1.0 / i for i in range(1, n + 1))


def build_cover_instance(bundle, family, X, mass, params: Mapping[int, IntervalParams],
                         empirical: bool = False) -> CoverInstance:
    """One candidate set per cell ``G(mu_bar, mbar_a, i, j)`` of mass at least gamma, per degree in ``params``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    mass = np.asarray(mass, dtype=float)
    st = bundle.state(X)
    groups = family.masks(X)
    codes = st.mean_buckets()
    members, widths, labels = [], [], []
    for a in sorted(params):
        p = params[a]
        _check_degree(bundle, p)
        w = width_formula(st.moments[a], p, bundle.bucket_count)
        cells = iter_cells(groups, codes, {a: st.moment_buckets(a)}, bundle.bucket_count, include_mean=False)
        for key, cell in cells:
            if mass[cell].sum() >= p.gamma:
                members.append(cell)
                widths.append(w)
                labels.append(key.label(family))
    if not members:
        raise ValueError("no cell reaches the minimum mass gamma")
    return CoverInstance(mass, np.array(members), np.array(widths), st.mean.copy(), labels,
                         max(params), empirical)


@dataclass(frozen=True)
class Cover:
    chosen: tuple[int, ...]
    objective: float


def greedy_cover(inst: CoverInstance) -> Cover:
    """Repeatedly add the set with the least objective increase per newly covered point.

    Ties go to the lowest set index; sets covering nothing new are skipped.
    """
    S, N = inst.members.shape
    covered = np.zeros(N, dtype=bool)
    current = np.zeros(N)
    chosen: list[int] = []
    while not covered.all():
        best, best_ratio = None, math.inf
        for s in range(S):
            if s in chosen:
                continue
            mem = inst.members[s]
            fresh = int((mem & ~covered).sum())
            if fresh == 0:
                continue
            increase = float((inst.mass * np.where(mem, np.maximum(inst.widths[s] - current, 0.0), 0.0)).sum())
            ratio = increase / fresh
            if ratio < best_ratio:
                best, best_ratio = s, ratio
        if best is None:
            raise ValueError("instance has no feasible cover")
        chosen.append(best)
        mem = inst.members[best]
        current = np.where(mem, np.maximum(current, inst.widths[best]), current)
        covered |= mem
    return Cover(tuple(chosen), inst.objective(chosen))


def brute_force_cover(inst: CoverInstance, max_sets: int = 20) -> Cover:
    """Optimal cover by enumerating every subfamily (ties: fewest sets, then lexicographic)."""
    S = len(inst.members)
    if S > max_sets:
        raise ValueError(f"brute force over {S} sets exceeds the limit of {max_sets}")
    best = None
    for r in range(1, S + 1):
        for combo in itertools.combinations(range(S), r):
            if not inst.feasible(combo):
                continue
            val = inst.objective(combo)
            if best is None or val < best.objective:
                best = Cover(combo, val)
    if best is None:
        raise ValueError("instance has no feasible cover")
    return best


def cover_widths(inst: CoverInstance, cover: Cover) -> np.ndarray:
    """Per point widest width among the chosen sets containing it; raises if a point is uncovered."""
    chosen = list(cover.chosen)
    mem = inst.members[chosen]
    if not mem.any(axis=0).all():
        raise ValueError(f"point {int(np.flatnonzero(~mem.any(axis=0))[0])} is not covered")
    return np.where(mem, inst.widths[chosen], -np.inf).max(axis=0)


def per_point_interval_from_cover(inst: CoverInstance, cover: Cover, point: int) -> tuple[float, float]:
    chosen = [s for s in cover.chosen if inst.members[s, point]]
    if not chosen:
        raise ValueError(f"point {point} is not covered by the chosen sets")
    if inst.mean is None:
        raise ValueError("the cover instance carries no mean predictions")
    w = max(inst.widths[s, point] for s in chosen)
    return float(inst.mean[point] - w), float(inst.mean[point] + w)
