"""Training with exact access to a finite distribution.

Mean steps move the mean predictor toward the true conditional mean on a
violating cell; moment steps move one moment predictor toward the
pseudo-moment labels ``E[(y - mu_bar(x))^a | x]`` with the mean held fixed.
Cells are scanned in the canonical order of :func:`momentcal.core.iter_cells`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

from .core import MEAN, CellKey, FiniteDistribution, PredictorBundle, ReplayState, SetDescriptor, UpdateRecord, iter_cells
from .predicates import GroupFamily


class BoundExceededError(RuntimeError):
    """An exact-mode loop ran past its proven iteration cap (a logic error)."""


def iteration_cap(rate: float) -> int:
    """``ceil(1/rate^2) - 1``, guarded against float noise in ``1/rate^2``."""
    return int(math.ceil(1.0 / rate ** 2 - 1e-9)) - 1


def default_degrees(k: int) -> tuple[int, ...]:
    return tuple(range(2, k + 1, 2))


@dataclass
class ExactTrainConfig:
    alpha: float
    beta: float
    m: int
    k: int
    degrees: tuple[int, ...] | None = None
    absolute: bool = False
    search: str = "first"  # "first" violation in scan order, or "max" weighted violation

    def __post_init__(self):
        for name in ("alpha", "beta"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ValueError(f"{name} must lie in (0, 1), got {v}")
        if self.m < 1:
            raise ValueError("bucket count m must be positive")
        if self.k < 2:
            raise ValueError("max degree k must be at least 2")
        self.degrees = default_degrees(self.k) if self.degrees is None else tuple(int(a) for a in self.degrees)
        if self.search not in ("first", "max"):
            raise ValueError(f"search must be 'first' or 'max', got {self.search!r}")
        # delegate degree checks to the bundle
        self.new_bundle(None)

    @property
    def mean_cap(self) -> int:
        return iteration_cap(self.alpha)

    @property
    def moment_cap(self) -> int:
        return iteration_cap(self.beta)

    @property
    def update_cap(self) -> int:
        return self.mean_cap * (1 + (self.k - 1) * self.moment_cap)

    def new_bundle(self, family: GroupFamily | None) -> PredictorBundle:
        return PredictorBundle(self.m, self.k, self.degrees, family, [], self.absolute,
                               mean_rate=self.alpha, moment_rate=self.beta)


@dataclass
class TrainReport:
    outer_iterations: int = 0  # mean updates applied
    total_updates: int = 0
    per_degree_updates: dict = field(default_factory=dict)
    inner_calls: int = 0
    max_inner_steps: int = 0
    halt_reason: str = "converged"
    mean_cap: int = 0
    moment_cap: int = 0
    update_cap: int = 0
    blocks_consumed: int = 0  # audit blocks (check blocks in oracle mode)
    examples_consumed: int = 0
    train_blocks_consumed: int = 0  # oracle mode only
    failure_events: list = field(default_factory=list)
    oracle_calls: int = 0
    oracle_seconds: float = 0.0

    def to_json(self) -> dict:
        out = dict(self.__dict__)
        out["per_degree_updates"] = {str(a): c for a, c in self.per_degree_updates.items()}
        return out


def mean_consistency_update(bundle: PredictorBundle, selector: SetDescriptor, sign: int, eta: float) -> PredictorBundle:
    """New bundle with ``mu_bar <- clip(mu_bar - eta*sign)`` on the selected points."""
    if sign not in (-1, 1):
        raise ValueError(f"sign must be -1 or +1, got {sign}")
    out = bundle.copy()
    out.append(UpdateRecord(MEAN, eta * sign, selector))
    return out


def _scan(cells, mass, pred, target, rate, search):
    """First (or largest) cell with ``|pred(S) - target(S)| >= rate / P(S)``."""
    best = None
    for key, mask in cells:
        w = mass[mask]
        P = float(w.sum())
        if P <= 0.0:
            continue
        gap = float((w * pred[mask]).sum() / P - (w * target[mask]).sum() / P)
        if abs(gap) >= rate / P:
            hit = (key, P, gap)
            if search == "first":
                return hit
            if best is None or abs(gap) * P > abs(best[2]) * best[1]:
                best = hit
    return best


class _ExactRun:
    def __init__(self, bundle: PredictorBundle, dist: FiniteDistribution, family: GroupFamily,
                 search: str = "first", trace: list | None = None, state: ReplayState | None = None):
        self.bundle = bundle
        self.dist = dist
        self.family = family
        self.search = search
        self.trace = trace
        self.state = state if state is not None else bundle.state(dist.X)
        self.groups = self.state.group_masks()
        self.mu = dist.conditional_mean()

    def mean_cells(self):
        st = self.state
        codes = st.mean_buckets()
        mcodes = {a: st.moment_buckets(a) for a in self.bundle.moment_degrees}
        return iter_cells(self.groups, codes, mcodes, self.bundle.bucket_count)

    def moment_cells(self, a):
        st = self.state
        return iter_cells(self.groups, st.mean_buckets(), {a: st.moment_buckets(a)},
                          self.bundle.bucket_count, include_mean=False)

    def pseudo_labels(self, a):
        return self.dist.conditional_central(a, self.state.mean, self.bundle.absolute)

    def potential(self, values, target):
        return float((self.dist.mass * (values - target) ** 2).sum())

    def apply(self, key: CellKey, target: int, step: float):
        rec = UpdateRecord(target, step, key.selector(self.family))
        self.bundle.append(rec)
        self.state.apply(rec)

    def mean_step(self, alpha) -> bool:
        hit = _scan(self.mean_cells(), self.dist.mass, self.state.mean, self.mu, alpha, self.search)
        if hit is None:
            return False
        key, P, gap = hit
        sign = 1 if gap > 0 else -1
        before = self.potential(self.state.mean, self.mu)
        self.apply(key, MEAN, alpha * sign)
        if self.trace is not None:
            self.trace.append({"target": MEAN, "cell": key.label(self.family), "sign": sign, "mass": P,
                               "gap": gap, "potential_before": before,
                               "potential_after": self.potential(self.state.mean, self.mu)})
        return True

    def moment_loop(self, a, beta, cap) -> int:
        labels = self.pseudo_labels(a)
        steps = 0
        while True:
            hit = _scan(self.moment_cells(a), self.dist.mass, self.state.moments[a], labels, beta, self.search)
            if hit is None:
                return steps
            if steps >= cap:
                raise BoundExceededError(
                    f"pseudo-moment loop for degree {a} wants step {steps + 1} > cap {cap}")
            key, P, gap = hit
            sign = 1 if gap > 0 else -1
            before = self.potential(self.state.moments[a], labels)
            self.apply(key, a, beta * sign)
            steps += 1
            if self.trace is not None:
                self.trace.append({"target": a, "cell": key.label(self.family), "sign": sign, "mass": P,
                                   "gap": gap, "potential_before": before,
                                   "potential_after": self.potential(self.state.moments[a], labels)})


def exact_pseudo_moment_loop(a: int, beta: float, bundle: PredictorBundle, dist: FiniteDistribution,
                             family: GroupFamily, trace: list | None = None) -> PredictorBundle:
    """Drive moment predictor ``a`` to beta-pseudo-moment consistency; mean held fixed."""
    if a not in bundle.moment_degrees:
        raise ValueError(f"degree {a} is not among the bundle's moment degrees {bundle.moment_degrees}")
    out = bundle.copy()
    out.family = family
    _ExactRun(out, dist, family, trace=trace).moment_loop(a, beta, iteration_cap(beta))
    return out


def exact_alternating_descent(config: ExactTrainConfig, dist: FiniteDistribution, family: GroupFamily,
                              trace: list | None = None) -> tuple[PredictorBundle, TrainReport]:
    """Alternate mean steps with full pseudo-moment loops until no cell is alpha-inconsistent.

    ``trace``, if given, receives one dict per update with the cell, sign,
    mass, signed gap and the squared-error potential before and after.
    """
    bundle = config.new_bundle(family)
    run = _ExactRun(bundle, dist, family, config.search, trace)
    report = TrainReport(per_degree_updates={a: 0 for a in config.degrees}, mean_cap=config.mean_cap,
                         moment_cap=config.moment_cap, update_cap=config.update_cap)
    while True:
        if report.outer_iterations >= config.mean_cap:
            if _scan(run.mean_cells(), dist.mass, run.state.mean, run.mu, config.alpha, "first") is not None:
                raise BoundExceededError(f"mean loop wants update {report.outer_iterations + 1} > cap {config.mean_cap}")
            break
        if not run.mean_step(config.alpha):
            break
        report.outer_iterations += 1
        report.total_updates += 1
        for a in config.degrees:
            steps = run.moment_loop(a, config.beta, config.moment_cap)
            report.inner_calls += 1
            report.per_degree_updates[a] += steps
            report.total_updates += steps
            report.max_inner_steps = max(report.max_inner_steps, steps)
    return bundle, report


def regret_terms(trace: Sequence[dict], eta: float) -> tuple[float, float]:
    """``(sum lambda P (mu_bar(S) - mu(S)), 1/(2 eta) + eta/2 sum P)`` over the mean updates of a trace."""
    lhs = 0.0
    mass = 0.0
    for rec in trace:
        if rec["target"] != MEAN:
            continue
        lhs += rec["sign"] * rec["mass"] * rec["gap"]
        mass += rec["mass"]
    return lhs, 1.0 / (2.0 * eta) + eta / 2.0 * mass
