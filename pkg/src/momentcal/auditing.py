"""Finite-sample consistency auditing.

An audit compares the average of a predicted label ``lbar(x)`` with the
average of an observed label ``l(x, y)`` over the sample points falling in a
set, and flags the set only when the empirical gap, shrunk by a Chernoff
radius, clears ``alpha`` divided by a pessimistic estimate of the set's mass.
Natural logarithms throughout.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .core import FiniteDistribution, Sample


class PreconditionError(ValueError):
    """A parameter combination violates a documented precondition."""


def chernoff_radius(n: float, delta: float) -> float:
    """``sqrt(ln(2/delta) / (2 n))``."""
    return math.sqrt(math.log(2.0 / delta) / (2.0 * n))


def _check_delta(delta: float) -> None:
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")


def check_sample_precondition(alpha: float, delta: float, n: int, name: str = "alpha") -> None:
    """Raise unless ``2 sqrt(ln(2/delta)/(2n)) <= alpha``."""
    _check_delta(delta)
    lhs = 2.0 * chernoff_radius(n, delta)
    if not lhs <= alpha:
        raise PreconditionError(
            f"2*sqrt(ln(2/delta)/(2n)) <= {name} fails: 2*sqrt(ln(2/{delta})/(2*{n})) = {lhs:.6g} > {name} = {alpha}"
        )


@dataclass(frozen=True)
class LabelSpec:
    """Predicted label ``lbar(X)`` and observed label ``l(X, y)``, both into [0, 1]."""

    predicted: Callable[[np.ndarray], np.ndarray]
    observed: Callable[[np.ndarray, np.ndarray], np.ndarray]

    def on_sample(self, sample: Sample) -> tuple[np.ndarray, np.ndarray]:
        X = sample.features
        return (np.asarray(self.predicted(X), dtype=float),
                np.asarray(self.observed(X, sample.y), dtype=float))

    def exact(self, dist: FiniteDistribution, mask: np.ndarray) -> tuple[float, float] | None:
        """Exact ``(lbar(S), l(S))`` on the support points selected by ``mask``."""
        w = dist.mass * mask
        total = w.sum()
        if total <= 0:
            return None
        pred = np.asarray(self.predicted(dist.X), dtype=float)
        L = dist.values.shape[1]
        Xrep = np.repeat(dist.X, L, axis=0)
        obs = np.asarray(self.observed(Xrep, dist.values.ravel()), dtype=float).reshape(len(dist), L)
        obs_x = (dist.probs * obs).sum(axis=1)
        return float((w * pred).sum() / total), float((w * obs_x).sum() / total)

    @classmethod
    def mean(cls, predictor) -> "LabelSpec":
        return cls(lambda X: predictor.predict(X)[0], lambda X, y: y)

    @classmethod
    def moment(cls, predictor, a: int, absolute: bool = False) -> "LabelSpec":
        def observed(X, y):
            dev = y - predictor.predict(X)[0]
            return (np.abs(dev) if absolute else dev) ** a
        return cls(lambda X: predictor.predict(X)[1][a], observed)


@dataclass(frozen=True)
class AuditRecord:
    key: object
    n_sub: int
    n: int
    pred_avg: float | None
    obs_avg: float | None
    statistic: float | None  # |gap| - 2 sqrt(ln(2/delta)/(2 n'))
    threshold: float | None  # alpha / (n'/n - sqrt(ln(2/delta)/(2 n)))
    violation: bool

    def to_json(self) -> dict:
        key = self.key
        if hasattr(key, "to_json"):
            key = key.to_json()
        elif hasattr(key, "__dataclass_fields__"):
            key = {f: getattr(key, f) for f in key.__dataclass_fields__}
        return {"cell": key, "n_sub": self.n_sub, "n": self.n, "pred_avg": self.pred_avg,
                "obs_avg": self.obs_avg, "statistic": self.statistic, "threshold": self.threshold,
                "verdict": "violation" if self.violation else "null"}


@dataclass(frozen=True)
class Violation:
    """A witnessed consistency violation; ``sign`` is sign(lbar - l) on the set."""

    key: object
    sign: int
    record: AuditRecord | None = None


def _audit(key, n_sub, sum_pred, sum_obs, n, alpha, delta) -> tuple[Violation | None, AuditRecord]:
    if n_sub <= 0:
        return None, AuditRecord(key, 0, n, None, None, None, None, False)
    pred_avg = sum_pred / n_sub
    obs_avg = sum_obs / n_sub
    gap = pred_avg - obs_avg
    stat = abs(gap) - 2.0 * chernoff_radius(n_sub, delta)
    denom = n_sub / n - chernoff_radius(n, delta)
    if denom <= 0:
        return None, AuditRecord(key, n_sub, n, pred_avg, obs_avg, stat, None, False)
    threshold = alpha / denom
    hit = stat >= threshold
    rec = AuditRecord(key, n_sub, n, pred_avg, obs_avg, stat, threshold, hit)
    if not hit:
        return None, rec
    return Violation(key, 1 if gap > 0 else -1, rec), rec


def audit_single_set(pred, obs, alpha: float, delta: float, n: int, counts=None) -> Violation | None:
    """Audit one set given the predicted/observed labels of its sample members.

    ``n`` is the size of the full sample the members were drawn from.
    """
    _check_delta(delta)
    pred = np.asarray(pred, dtype=float)
    obs = np.asarray(obs, dtype=float)
    counts = np.ones(len(pred), dtype=np.int64) if counts is None else np.asarray(counts)
    n_sub = int(counts.sum())
    v, _ = _audit(None, n_sub, float((counts * pred).sum()), float((counts * obs).sum()), n, alpha, delta)
    return v


def audit_cells(pred: np.ndarray, obs: np.ndarray, counts: np.ndarray,
                cells: Iterable[tuple[object, np.ndarray]], alpha: float, delta: float,
                records: list | None = None) -> Violation | None:
    """First violating cell in iteration order, from row-level label arrays.

    ``cells`` yields ``(key, row_mask)`` pairs over the rows of the sample.
    """
    _check_delta(delta)
    n = int(counts.sum())
    wp = counts * pred
    wo = counts * obs
    for key, mask in cells:
        n_sub = int(counts[mask].sum())
        if n_sub == 0:
            continue
        v, rec = _audit(key, n_sub, float(wp[mask].sum()), float(wo[mask].sum()), n, alpha, delta)
        if records is not None:
            records.append(rec)
        if v is not None:
            return v
    return None


def consistency_auditor(spec, alpha: float, delta: float, sample: Sample,
                        cells: Sequence[tuple[object, np.ndarray]], records: list | None = None
                        ) -> Violation | None:
    """Audit a collection of sets on one sample; return the first violation or ``None``.

    ``spec`` is a :class:`LabelSpec` or a ``(pred, obs)`` pair of row arrays;
    ``cells`` is an ordered sequence of ``(key, row_mask)`` pairs.
    """
    pred, obs = spec.on_sample(sample) if isinstance(spec, LabelSpec) else spec
    return audit_cells(np.asarray(pred, float), np.asarray(obs, float), sample.counts, cells,
                       alpha, delta, records)


def alpha_prime(alpha: float, delta: float, n: float) -> float:
    """Level certified on every audited set when the auditor returns null."""
    _check_delta(delta)
    r = chernoff_radius(n, delta)
    if not alpha > 2.0 * r:
        raise PreconditionError(
            f"alpha' needs alpha > 2*sqrt(ln(2/delta)/(2n)) = {2 * r:.6g}, got alpha = {alpha}")
    return alpha + 4.0 * r + (alpha - 2.0 * r) ** -2 * (2.0 * r)


def closeness_holds(dist: FiniteDistribution, sample: Sample, member, spec: LabelSpec, delta: float) -> bool:
    """Whether ``sample`` is approximately close to ``dist`` for the set and labels.

    ``member`` maps a feature array to a boolean array (a predicate works).
    Test-mode facility: needs the true distribution.
    """
    _check_delta(delta)
    n = sample.n
    rows = np.asarray(member.mask(sample.features) if hasattr(member, "mask") else member(sample.features), bool)
    n_sub = int(sample.counts[rows].sum())
    if n_sub <= 0:
        return False
    pmask = np.asarray(member.mask(dist.X) if hasattr(member, "mask") else member(dist.X), bool)
    if abs(n_sub / n - dist.measure(pmask)) > chernoff_radius(n, delta):
        return False
    exact = spec.exact(dist, pmask)
    if exact is None:
        return False
    pred, obs = spec.on_sample(sample)
    c = sample.counts[rows]
    r_sub = chernoff_radius(n_sub, delta)
    pred_avg = float((c * pred[rows]).sum() / n_sub)
    obs_avg = float((c * obs[rows]).sum() / n_sub)
    return abs(pred_avg - exact[0]) <= r_sub and abs(obs_avg - exact[1]) <= r_sub


@dataclass(frozen=True)
class SampleSizePlan:
    alpha: float
    beta: float
    delta: float
    n: int
    n_exact: float
    q_bar: float
    n_alpha: float
    n_beta: float

    def to_json(self) -> dict:
        return dict(self.__dict__)


def sample_size_calculator(alpha_target: float, beta_target: float, delta_target: float, eps: float,
                           n_groups: int, k: int, m: int) -> SampleSizePlan:
    """Training parameters that reach target calibration levels with probability 1 - delta_target."""
    if not (0 < eps < alpha_target and eps < beta_target):
        raise ValueError(f"need 0 < eps < alpha' and eps < beta' (eps={eps}, alpha'={alpha_target}, beta'={beta_target})")
    _check_delta(delta_target)
    c = 6.0 + 2.0 / eps ** 2
    sa = ((alpha_target - eps) / c) ** 2
    sb = ((beta_target - eps) / c) ** 2
    q_bar = 6.0 * n_groups * k * m ** 2 / (sa * sb)
    delta = delta_target / max(3.0 * n_groups * (k * m ** 2 + m), q_bar)
    log_q = math.log(2.0 * q_bar / delta)
    n_alpha = log_q / (2.0 * sa)
    n_beta = log_q / (2.0 * sb)
    alpha = 2.0 * math.sqrt(log_q / (2.0 * n_alpha)) + eps
    beta = 2.0 * math.sqrt(log_q / (2.0 * n_beta)) + eps
    log_d = math.log(2.0 / delta)
    n_exact = max(log_q / log_d * n_alpha, log_q / log_d * n_beta,
                  2.0 * log_d / alpha ** 2, 2.0 * log_d / beta ** 2)
    return SampleSizePlan(alpha, beta, delta, int(math.ceil(n_exact)), n_exact, q_bar, n_alpha, n_beta)
