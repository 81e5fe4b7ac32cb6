"""Domain types, bucketing, predictor replay and exact moment arithmetic.

A trained predictor is stored as a replay log: starting from mean and moment
predictions identically 0, each :class:`UpdateRecord` subtracts its step from
one target on the points its :class:`SetDescriptor` selects, then clamps to
[0, 1]. Selector bucket constraints are tested against the predictions as they
stand at that point of the replay, so the log defines the predictors at every
feature vector, in or out of sample.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from math import comb
from typing import Iterator, Mapping, Sequence

import numpy as np

from .predicates import GroupFamily, Predicate, Ref, predicate_from_json

MEAN = 1  # UpdateRecord.target for the mean predictor; moments use their degree

BUNDLE_FORMAT = "momentcal-bundle/1"


def project_unit(v: float) -> float:
    v = float(v)
    if not math.isfinite(v):
        raise ValueError(f"cannot project non-finite value {v}")
    return min(max(v, 0.0), 1.0)


def bucket_index(v: float, m: int) -> int:
    """Bucket of ``v`` among ``[(i-1)/m, i/m)``, i = 1..m, with 1.0 in bucket m."""
    if m < 1:
        raise ValueError(f"bucket count must be positive, got {m}")
    v = float(v)
    if not 0.0 <= v <= 1.0:
        raise ValueError(f"bucketed value {v} lies outside [0, 1]")
    return min(int(math.floor(v * m)) + 1, m)


def bucket_indices(values: np.ndarray, m: int) -> np.ndarray:
    """Vectorized :func:`bucket_index`; same float arithmetic as the scalar form."""
    values = np.asarray(values, dtype=float)
    if values.size and (values.min() < 0.0 or values.max() > 1.0):
        raise ValueError("bucketed values must lie in [0, 1]")
    return np.minimum(np.floor(values * m).astype(np.int64) + 1, m)


# --------------------------------------------------------------------------
# data

@dataclass(frozen=True)
class FeatureVector:
    id: object
    values: tuple[float, ...]

    def __post_init__(self):
        if not all(math.isfinite(v) for v in self.values):
            raise ValueError(f"feature vector {self.id!r} has non-finite values")


@dataclass(frozen=True)
class LabeledExample:
    features: FeatureVector
    label: float

    def __post_init__(self):
        if not 0.0 <= self.label <= 1.0:
            raise ValueError(f"label {self.label} outside [0, 1]")


@dataclass(frozen=True, eq=False)
class Sample:
    """Labeled examples, possibly aggregated.

    Row ``b`` is ``counts[b]`` copies of the example with features
    ``table[index[b]]`` and label ``y[b]``. Samples drawn from a
    :class:`FiniteDistribution` share the support as their table, which lets
    trainers keep replayed predictions for the support across blocks.
    """

    table: np.ndarray
    index: np.ndarray
    y: np.ndarray
    counts: np.ndarray
    ids: np.ndarray | None = None
    block: int | None = None

    @classmethod
    def from_arrays(cls, X, y, ids=None, counts=None) -> "Sample":
        X = np.atleast_2d(np.asarray(X, dtype=float))
        y = np.asarray(y, dtype=float)
        if len(X) != len(y):
            raise ValueError("feature rows and labels differ in length")
        if not np.all(np.isfinite(X)):
            raise ValueError("features must be finite")
        if y.size and (y.min() < 0.0 or y.max() > 1.0):
            raise ValueError("labels must lie in [0, 1]")
        counts = np.ones(len(y), dtype=np.int64) if counts is None else np.asarray(counts, dtype=np.int64)
        return cls(X, np.arange(len(y)), y, counts, None if ids is None else np.asarray(ids))

    @classmethod
    def from_examples(cls, examples: Sequence[LabeledExample]) -> "Sample":
        X = [e.features.values for e in examples]
        return cls.from_arrays(X, [e.label for e in examples], ids=[e.features.id for e in examples])

    @property
    def features(self) -> np.ndarray:
        return self.table[self.index]

    @property
    def n(self) -> int:
        return int(self.counts.sum())

    def __len__(self):
        return len(self.y)

    def subset(self, rows) -> "Sample":
        return Sample(self.table, self.index[rows], self.y[rows], self.counts[rows],
                      None if self.ids is None else self.ids[rows], self.block)


class FiniteDistribution:
    """Finite-support joint law of (x, y) with explicit conditional label laws."""

    def __init__(self, X, mass, label_values, label_probs, ids=None, tol: float = 1e-12):
        self.X = np.atleast_2d(np.asarray(X, dtype=float))
        self.mass = np.asarray(mass, dtype=float)
        self.values = np.atleast_2d(np.asarray(label_values, dtype=float))
        self.probs = np.atleast_2d(np.asarray(label_probs, dtype=float))
        r = len(self.X)
        if self.mass.shape != (r,) or self.values.shape != self.probs.shape or len(self.values) != r:
            raise ValueError("support, masses and label laws have inconsistent shapes")
        if not np.all(np.isfinite(self.X)):
            raise ValueError("support features must be finite")
        if np.any(self.mass < 0) or abs(self.mass.sum() - 1.0) > tol:
            raise ValueError(f"masses must be nonnegative and sum to 1 (sum={self.mass.sum()!r})")
        if np.any(self.probs < 0) or np.any(np.abs(self.probs.sum(axis=1) - 1.0) > tol):
            raise ValueError("each label law must have nonnegative probabilities summing to 1")
        used = self.probs > 0
        if np.any((self.values[used] < 0) | (self.values[used] > 1)):
            raise ValueError("labels must lie in [0, 1]")
        self.ids = list(range(r)) if ids is None else list(ids)

    @classmethod
    def from_support(cls, support, ids=None) -> "FiniteDistribution":
        """Build from ``[(features, mass, [(label, prob), ...]), ...]``."""
        width = max(len(law) for _, _, law in support)
        vals = np.zeros((len(support), width))
        probs = np.zeros((len(support), width))
        for r, (_, _, law) in enumerate(support):
            for c, (yv, pv) in enumerate(law):
                vals[r, c] = yv
                probs[r, c] = pv
        X = [np.atleast_1d(np.asarray(x, dtype=float)) for x, _, _ in support]
        return cls(np.vstack(X), [m for _, m, _ in support], vals, probs, ids)

    def __len__(self):
        return len(self.X)

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    def conditional_mean(self) -> np.ndarray:
        return (self.values * self.probs).sum(axis=1)

    def conditional_central(self, a: int, center: np.ndarray, absolute: bool = False) -> np.ndarray:
        """Per point ``E[(y - center(x))^a | x]`` (absolute value inside if requested)."""
        dev = self.values - np.asarray(center, dtype=float)[:, None]
        if absolute:
            dev = np.abs(dev)
        return (self.probs * dev ** a).sum(axis=1)

    def measure(self, mask: np.ndarray) -> float:
        return float(self.mass[mask].sum())

    def sample(self, n: int, rng: np.random.Generator) -> Sample:
        """``n`` explicit i.i.d. draws (one row per example)."""
        pts = rng.choice(len(self), size=n, p=self.mass)
        cdf = np.cumsum(self.probs[pts], axis=1)
        u = rng.random(n)
        col = np.minimum((u[:, None] >= cdf).sum(axis=1), self.values.shape[1] - 1)
        y = self.values[pts, col]
        return Sample(self.X, pts, y, np.ones(n, dtype=np.int64), np.asarray(self.ids, dtype=object)[pts])

    def sample_counts(self, n: int, rng: np.random.Generator) -> Sample:
        """``n`` i.i.d. draws aggregated into multinomial counts per (point, label) atom.

        Identical in law to :meth:`sample` followed by grouping equal examples;
        cost is independent of ``n``.
        """
        atom_p = (self.mass[:, None] * self.probs).ravel()
        live = np.flatnonzero(atom_p > 0)
        p = atom_p[live]
        counts = rng.multinomial(int(n), p / p.sum())
        keep = counts > 0
        atoms = live[keep]
        pts, cols = np.divmod(atoms, self.values.shape[1])
        return Sample(self.X, pts, self.values[pts, cols], counts[keep].astype(np.int64))


# --------------------------------------------------------------------------
# predictors

@dataclass(frozen=True)
class SetDescriptor:
    """Group (or learned hypothesis) intersected with optional bucket constraints."""

    predicate: Predicate
    mean_bucket: int | None = None
    moment: tuple[int, int] | None = None  # (degree, moment bucket)

    def to_json(self) -> dict:
        out = {"predicate": self.predicate.to_json()}
        if self.mean_bucket is not None:
            out["mean_bucket"] = self.mean_bucket
        if self.moment is not None:
            out["moment"] = list(self.moment)
        return out

    @classmethod
    def from_json(cls, obj) -> "SetDescriptor":
        mom = obj.get("moment")
        return cls(predicate_from_json(obj["predicate"]), obj.get("mean_bucket"),
                   None if mom is None else (int(mom[0]), int(mom[1])))


@dataclass(frozen=True)
class UpdateRecord:
    target: int  # MEAN (=1) or a moment degree >= 2
    step: float
    selector: SetDescriptor

    def to_json(self) -> dict:
        return {"target": self.target, "step": self.step, "selector": self.selector.to_json()}

    @classmethod
    def from_json(cls, obj) -> "UpdateRecord":
        return cls(int(obj["target"]), float(obj["step"]), SetDescriptor.from_json(obj["selector"]))


@dataclass(frozen=True, order=True)
class CellKey:
    group: int
    mean_bucket: int
    degree: int | None = None
    moment_bucket: int | None = None

    def selector(self, family: GroupFamily) -> SetDescriptor:
        mom = None if self.degree is None else (self.degree, self.moment_bucket)
        return SetDescriptor(Ref(family.names[self.group]), self.mean_bucket, mom)

    def label(self, family: GroupFamily | None = None) -> str:
        g = family.names[self.group] if family is not None else str(self.group)
        if self.degree is None:
            return f"{g}[i={self.mean_bucket}]"
        return f"{g}[i={self.mean_bucket},a={self.degree},j={self.moment_bucket}]"


class ReplayState:
    """Current mean/moment predictions on a fixed table of feature rows."""

    def __init__(self, X: np.ndarray, family: GroupFamily | None, m: int, degrees: Sequence[int]):
        self.X = np.atleast_2d(np.asarray(X, dtype=float))
        self.family = family
        self.m = m
        self.mean = np.zeros(len(self.X))
        self.moments = {a: np.zeros(len(self.X)) for a in degrees}
        self._pred_cache: dict = {}

    def predicate_mask(self, pred: Predicate) -> np.ndarray:
        hit = self._pred_cache.get(pred)
        if hit is None:
            if isinstance(pred, Ref) and self.family is not None and pred.name not in self.family.names:
                raise ValueError(f"selector references unknown group {pred.name!r}")
            hit = pred.mask(self.X, self.family)
            self._pred_cache[pred] = hit
        return hit

    def group_masks(self) -> np.ndarray:
        return np.vstack([self.predicate_mask(Ref(n)) for n in self.family.names])

    def mean_buckets(self) -> np.ndarray:
        return bucket_indices(self.mean, self.m)

    def moment_buckets(self, a: int) -> np.ndarray:
        return bucket_indices(self.moments[a], self.m)

    def selector_mask(self, sel: SetDescriptor) -> np.ndarray:
        mask = self.predicate_mask(sel.predicate)
        if sel.mean_bucket is not None:
            mask = mask & (self.mean_buckets() == sel.mean_bucket)
        if sel.moment is not None:
            a, j = sel.moment
            if a not in self.moments:
                raise ValueError(f"selector constrains degree {a}, which is not predicted")
            mask = mask & (self.moment_buckets(a) == j)
        return mask

    def values(self, target: int) -> np.ndarray:
        return self.mean if target == MEAN else self.moments[target]

    def apply(self, rec: UpdateRecord) -> np.ndarray:
        mask = self.selector_mask(rec.selector)
        vals = self.values(rec.target)
        vals[mask] = np.clip(vals[mask] - rec.step, 0.0, 1.0)
        return mask


@dataclass
class PredictorBundle:
    """Joint mean and moment predictors as a replayable, clamped update log."""

    bucket_count: int
    max_degree: int
    moment_degrees: tuple[int, ...]
    family: GroupFamily | None = None
    updates: list[UpdateRecord] = field(default_factory=list)
    absolute: bool = False
    mean_rate: float | None = None
    moment_rate: float | None = None

    def __post_init__(self):
        self.moment_degrees = tuple(int(a) for a in self.moment_degrees)
        if self.bucket_count < 1:
            raise ValueError("bucket count must be positive")
        if self.max_degree < 2:
            raise ValueError("max degree must be at least 2")
        if list(self.moment_degrees) != sorted(set(self.moment_degrees)):
            raise ValueError("moment degrees must be sorted and distinct")
        if any(a < 2 or a > self.max_degree for a in self.moment_degrees):
            raise ValueError(f"moment degrees must lie in 2..{self.max_degree}")
        if not self.absolute and any(a % 2 for a in self.moment_degrees):
            raise ValueError("odd moment degrees require absolute-central-moment mode")

    def copy(self) -> "PredictorBundle":
        return PredictorBundle(self.bucket_count, self.max_degree, self.moment_degrees, self.family,
                               list(self.updates), self.absolute, self.mean_rate, self.moment_rate)

    def append(self, rec: UpdateRecord) -> None:
        rate = self.mean_rate if rec.target == MEAN else self.moment_rate
        if rate is not None and abs(rec.step) != rate:
            raise ValueError(f"update step {rec.step} does not match the phase learning rate {rate}")
        self.updates.append(rec)

    def state(self, X) -> ReplayState:
        st = ReplayState(X, self.family, self.bucket_count, self.moment_degrees)
        for rec in self.updates:
            st.apply(rec)
        return st

    def predict(self, X) -> tuple[np.ndarray, dict[int, np.ndarray]]:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if len(X) == 0:
            return np.zeros(0), {a: np.zeros(0) for a in self.moment_degrees}
        uniq, inverse = np.unique(X, axis=0, return_inverse=True)
        inverse = inverse.reshape(-1)
        st = self.state(uniq)
        return st.mean[inverse], {a: v[inverse] for a, v in st.moments.items()}

    # serialization ---------------------------------------------------------
    def to_json(self) -> dict:
        return {
            "format": BUNDLE_FORMAT,
            "bucket_count": self.bucket_count,
            "max_degree": self.max_degree,
            "moment_degrees": list(self.moment_degrees),
            "absolute": self.absolute,
            "mean_rate": self.mean_rate,
            "moment_rate": self.moment_rate,
            "family": None if self.family is None or not self.family.serializable() else self.family.to_json(),
            "updates": [u.to_json() for u in self.updates],
        }

    @classmethod
    def from_json(cls, obj, family: GroupFamily | None = None) -> "PredictorBundle":
        if obj.get("format") != BUNDLE_FORMAT:
            raise ValueError(f"not a bundle file (format={obj.get('format')!r})")
        if family is None and obj.get("family") is not None:
            family = GroupFamily.from_json(obj["family"])
        return cls(obj["bucket_count"], obj["max_degree"], tuple(obj["moment_degrees"]), family,
                   [UpdateRecord.from_json(u) for u in obj["updates"]], obj.get("absolute", False),
                   obj.get("mean_rate"), obj.get("moment_rate"))

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=1)

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.dumps())

    @classmethod
    def load(cls, path, family: GroupFamily | None = None) -> "PredictorBundle":
        with open(path) as fh:
            return cls.from_json(json.load(fh), family)


class LookupPredictor:
    """Predictor given by explicit values on a finite table of feature rows.

    Mostly used for the true conditional mean/moment functions of a
    :class:`FiniteDistribution`; exposes the same ``predict`` surface as
    :class:`PredictorBundle`.
    """

    def __init__(self, X, mean, moments: Mapping[int, np.ndarray], bucket_count: int, absolute: bool = False):
        self.X = np.atleast_2d(np.asarray(X, dtype=float))
        self.mean = np.asarray(mean, dtype=float)
        self.moments = {int(a): np.asarray(v, dtype=float) for a, v in moments.items()}
        self.bucket_count = bucket_count
        self.moment_degrees = tuple(sorted(self.moments))
        self.absolute = absolute
        self._rows = {tuple(r): i for i, r in enumerate(self.X)}

    @classmethod
    def truth(cls, dist: FiniteDistribution, m: int, degrees: Sequence[int], absolute: bool = False):
        mu = dist.conditional_mean()
        return cls(dist.X, mu, {a: dist.conditional_central(a, mu, absolute) for a in degrees}, m, absolute)

    def predict(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        try:
            idx = np.array([self._rows[tuple(r)] for r in X], dtype=np.int64)
        except KeyError as exc:
            raise ValueError(f"feature row {exc.args[0]} is not in the lookup table") from None
        return self.mean[idx], {a: v[idx] for a, v in self.moments.items()}

    def state(self, X) -> ReplayState:
        """A :class:`ReplayState` holding the looked-up values, for the audit code paths."""
        st = ReplayState(X, None, self.bucket_count, self.moment_degrees)
        st.mean, st.moments = self.predict(st.X)
        return st


def evaluate_bundle(bundle: PredictorBundle, x) -> tuple[float, dict[int, float]]:
    """Mean and moment predictions at a single feature vector."""
    values = x.values if isinstance(x, FeatureVector) else x
    mean, moms = bundle.predict(np.atleast_2d(np.asarray(values, dtype=float)))
    return float(mean[0]), {a: float(v[0]) for a, v in moms.items()}


def cell_membership(bundle, family: GroupFamily, cell: CellKey, x) -> bool:
    values = x.values if isinstance(x, FeatureVector) else x
    X = np.atleast_2d(np.asarray(values, dtype=float))
    if not family.predicates[cell.group].mask(X, family)[0]:
        return False
    mean, moms = bundle.predict(X)
    m = bundle.bucket_count
    if bucket_index(mean[0], m) != cell.mean_bucket:
        return False
    if cell.degree is not None:
        return bucket_index(moms[cell.degree][0], m) == cell.moment_bucket
    return True


# --------------------------------------------------------------------------
# cells

def iter_cells(group_masks: np.ndarray, mean_codes: np.ndarray, moment_codes: Mapping[int, np.ndarray],
               m: int, include_mean: bool = True, degrees: Sequence[int] | None = None
               ) -> Iterator[tuple[CellKey, np.ndarray]]:
    """Populated cells in the canonical scan order.

    Groups in declaration order; within a group the mean-only cells by
    ascending bucket, then moment cells by ascending (degree, i, j). Rows are
    whatever the caller's arrays index (support points, sample rows).
    """
    if degrees is None:
        degrees = sorted(moment_codes)
    for g in range(len(group_masks)):
        gm = group_masks[g]
        if not gm.any():
            continue
        if include_mean:
            for i in np.unique(mean_codes[gm]):
                yield CellKey(g, int(i)), gm & (mean_codes == i)
        for a in degrees:
            combo = mean_codes * (m + 1) + moment_codes[a]
            for c in np.unique(combo[gm]):
                i, j = divmod(int(c), m + 1)
                yield CellKey(g, i, a, j), gm & (combo == c)


# --------------------------------------------------------------------------
# exact moments

def _as_mask(dist: FiniteDistribution, member) -> np.ndarray:
    if isinstance(member, np.ndarray) and member.dtype == bool:
        return member
    if isinstance(member, Predicate):
        return member.mask(dist.X)
    return np.array([bool(member(x)) for x in dist.X], dtype=bool)


def true_mean_and_moments(dist: FiniteDistribution, member, k: int, absolute: bool = False):
    """Exact ``(mu(S), {a: m_a(S)})`` for ``a = 2..k``, or ``None`` if ``S`` has zero mass."""
    mask = _as_mask(dist, member)
    w = dist.mass * mask
    total = w.sum()
    if total <= 0:
        return None
    joint = w[:, None] * dist.probs
    mu = float((joint * dist.values).sum() / total)
    dev = dist.values - mu
    if absolute:
        dev = np.abs(dev)
    return mu, {a: float((joint * dev ** a).sum() / total) for a in range(2, k + 1)}


def mixture_moment(components: Sequence[tuple[float, float, Sequence[float]]], k: int) -> float:
    """k-th central moment of a mixture from its components' means and central moments.

    Each component is ``(weight, mean, [m_0, m_1, ..., m_k])`` with ``m_0 = 1``
    and ``m_1 = 0``.
    """
    ws = np.array([c[0] for c in components], dtype=float)
    if np.any(ws < 0) or abs(ws.sum() - 1.0) > 1e-12:
        raise ValueError("mixture weights must be nonnegative and sum to 1")
    for _, _, ms in components:
        if len(ms) < k + 1:
            raise ValueError(f"component needs central moments of orders 0..{k}")
        if abs(ms[0] - 1.0) > 1e-12 or abs(ms[1]) > 1e-12:
            raise ValueError("component moments must start with m_0 = 1, m_1 = 0")
    mu = sum(w * c[1] for w, c in zip(ws, components))
    total = 0.0
    for w, (_, mu_l, ms) in zip(ws, components):
        total += w * sum(comb(k, a) * (mu_l - mu) ** (k - a) * ms[a] for a in range(k + 1))
    return float(total)

