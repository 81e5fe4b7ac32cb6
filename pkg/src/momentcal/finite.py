"""Finite-sample training: every audit runs on a fresh block of n examples.

Blocks come from a :class:`DistributionSource` (seeded draws from a finite
distribution) or a :class:`PoolSource` (a pre-drawn, pre-shuffled pool consumed
in order). Both expose a feature ``table`` shared by all their blocks, so the
engine keeps replayed predictions for the table and refreshes them in place
after each update instead of replaying the log per block.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .auditing import Violation, audit_cells, check_sample_precondition
from .core import MEAN, CellKey, FiniteDistribution, PredictorBundle, ReplayState, Sample, UpdateRecord, iter_cells
from .exact import TrainReport, default_degrees, iteration_cap
from .predicates import GroupFamily

log = logging.getLogger(__name__)


class PoolExhaustedError(RuntimeError):
    """A pool cannot supply the next block; carries the exact deficit."""

    def __init__(self, remaining: int, n: int, blocks_used: int):
        self.remaining = remaining
        self.n = n
        self.blocks_used = blocks_used
        super().__init__(
            f"sample pool exhausted after {blocks_used} blocks: the next block needs {n} examples but only "
            f"{remaining} remain (short by {n - remaining}); supply at least one more block of {n}")


class DistributionSource:
    """Seeded i.i.d. blocks from a finite distribution.

    With ``aggregate`` each block is a multinomial count vector over the
    (point, label) atoms, so block cost does not grow with ``n``.
    """

    def __init__(self, dist: FiniteDistribution, seed: int = 0, aggregate: bool = True):
        self.dist = dist
        self.rng = np.random.default_rng(seed)
        self.aggregate = aggregate
        self.table = dist.X
        self.blocks = 0
        self.examples = 0

    def draw(self, n: int) -> Sample:
        s = self.dist.sample_counts(n, self.rng) if self.aggregate else self.dist.sample(n, self.rng)
        s = Sample(s.table, s.index, s.y, s.counts, s.ids, self.blocks)
        self.blocks += 1
        self.examples += n
        return s


class PoolSource:
    """Consumes a fixed pool of explicit examples in order, ``n`` at a time; never reuses one."""

    def __init__(self, pool: Sample):
        if np.any(pool.counts != 1):
            raise ValueError("a pool must hold one example per row")
        self.pool = pool
        self.table = pool.table
        self.pos = 0
        self.blocks = 0
        self.examples = 0

    @property
    def remaining(self) -> int:
        return len(self.pool) - self.pos

    def draw(self, n: int) -> Sample:
        if self.remaining < n:
            raise PoolExhaustedError(self.remaining, n, self.blocks)
        rows = np.arange(self.pos, self.pos + n)
        s = self.pool.subset(rows)
        s = Sample(s.table, s.index, s.y, s.counts, s.ids, self.blocks)
        self.pos += n
        self.blocks += 1
        self.examples += n
        return s


@dataclass
class SampleTrainConfig:
    alpha: float
    beta: float
    delta: float
    n: int
    m: int
    k: int
    degrees: tuple[int, ...] | None = None
    absolute: bool = False
    seed: int = 0
    safety_factor: int = 10  # hard stop at this multiple of a cap

    def __post_init__(self):
        for name in ("alpha", "beta"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ValueError(f"{name} must lie in (0, 1), got {v}")
        if self.n < 1:
            raise ValueError("block size n must be positive")
        self.degrees = default_degrees(self.k) if self.degrees is None else tuple(int(a) for a in self.degrees)
        check_sample_precondition(self.alpha, self.delta, self.n, "alpha")
        check_sample_precondition(self.beta, self.delta, self.n, "beta")
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


class SampleEngine:
    """Sample-mode audits and updates against a block source.

    Subclasses replace :meth:`mean_audit` and :meth:`moment_audit`; the loop
    structure, update bookkeeping and cap monitoring live here.
    """

    def __init__(self, config: SampleTrainConfig, source, family: GroupFamily,
                 bundle: PredictorBundle | None = None, trace: list | None = None, records: list | None = None):
        self.config = config
        self.source = source
        self.family = family
        self.bundle = bundle if bundle is not None else config.new_bundle(family)
        self.trace = trace
        self.records = records
        self.state = ReplayState(source.table, family, self.bundle.bucket_count, self.bundle.moment_degrees)
        for rec in self.bundle.updates:
            self.state.apply(rec)
        self.groups = self.state.group_masks()
        self.report = TrainReport(per_degree_updates={a: 0 for a in self.bundle.moment_degrees},
                                  mean_cap=config.mean_cap, moment_cap=config.moment_cap,
                                  update_cap=config.update_cap)
        self._warned_empty = False

    # blocks and labels ------------------------------------------------------
    def draw(self) -> Sample:
        block = self.source.draw(self.config.n)
        self.report.blocks_consumed += 1
        self.report.examples_consumed += self.config.n
        if not self._warned_empty:
            empty = [self.family.names[g] for g in range(len(self.family))
                     if not self.groups[g][block.index].any()]
            if empty:
                log.warning("groups with zero empirical mass in block %d: %s", block.block, ", ".join(empty))
                self._warned_empty = True
        return block

    def moment_labels(self, a: int, block: Sample) -> np.ndarray:
        dev = block.y - self.state.mean[block.index]
        if self.bundle.absolute:
            dev = np.abs(dev)
        return dev ** a

    def block_cells(self, block: Sample, degrees, include_mean: bool):
        idx = block.index
        st = self.state
        return iter_cells(self.groups[:, idx], st.mean_buckets()[idx],
                          {a: st.moment_buckets(a)[idx] for a in degrees}, self.bundle.bucket_count,
                          include_mean=include_mean, degrees=list(degrees))

    # audits -----------------------------------------------------------------
    def mean_audit(self) -> Violation | None:
        block = self.draw()
        cells = self.block_cells(block, self.bundle.moment_degrees, True)
        return audit_cells(self.state.mean[block.index], block.y, block.counts, cells,
                           self.config.alpha, self.config.delta, self.records)

    def moment_audit(self, a: int) -> Violation | None:
        block = self.draw()
        cells = self.block_cells(block, (a,), False)
        return audit_cells(self.state.moments[a][block.index], self.moment_labels(a, block), block.counts, cells,
                           self.config.beta, self.config.delta, self.records)

    # updates ----------------------------------------------------------------
    def selector(self, key):
        return key.selector(self.family) if isinstance(key, CellKey) else key

    def apply(self, v: Violation, target: int, rate: float) -> None:
        rec = UpdateRecord(target, rate * v.sign, self.selector(v.key))
        self.bundle.append(rec)
        self.state.apply(rec)
        self.report.total_updates += 1
        if self.trace is not None:
            r = v.record
            label = v.key.label(self.family) if isinstance(v.key, CellKey) else rec.selector.to_json()
            self.trace.append({"target": target, "cell": label, "sign": v.sign,
                               "n_sub": None if r is None else r.n_sub,
                               "pred_avg": None if r is None else r.pred_avg,
                               "obs_avg": None if r is None else r.obs_avg,
                               "statistic": None if r is None else r.statistic,
                               "threshold": None if r is None else r.threshold,
                               "block": self.report.blocks_consumed - 1})

    def _failure(self, kind: str, **info) -> None:
        event = {"kind": kind, "update": self.report.total_updates, **info}
        log.warning("statistical failure event: %s", event)
        self.report.failure_events.append(event)

    # loops ------------------------------------------------------------------
    def moment_loop(self, a: int) -> bool:
        """Run one pseudo-moment loop; False if the safety stop fired."""
        cap = self.config.moment_cap
        steps = 0
        v = self.moment_audit(a)
        while v is not None:
            if steps == cap:
                self._failure("moment_cap_exceeded", degree=a, cap=cap)
            if steps >= self.config.safety_factor * max(cap, 1):
                self.report.halt_reason = "safety_stop"
                return False
            self.apply(v, a, self.config.beta)
            steps += 1
            v = self.moment_audit(a)
        self.report.inner_calls += 1
        self.report.per_degree_updates[a] += steps
        self.report.max_inner_steps = max(self.report.max_inner_steps, steps)
        return True

    def run(self) -> tuple[PredictorBundle, TrainReport]:
        cap = self.config.mean_cap
        v = self.mean_audit()
        while v is not None:
            if self.report.outer_iterations == cap:
                self._failure("mean_cap_exceeded", cap=cap)
            if self.report.outer_iterations >= self.config.safety_factor * max(cap, 1):
                self.report.halt_reason = "safety_stop"
                break
            self.apply(v, MEAN, self.config.alpha)
            self.report.outer_iterations += 1
            if not all(self.moment_loop(a) for a in self.bundle.moment_degrees):
                break
            v = self.mean_audit()
        return self.bundle, self.report


def sample_pseudo_moment_loop(a: int, beta: float, delta: float, bundle: PredictorBundle, source,
                              family: GroupFamily, n: int, trace: list | None = None) -> PredictorBundle:
    """One finite-sample pseudo-moment loop for degree ``a``; the mean stays fixed."""
    if a not in bundle.moment_degrees:
        raise ValueError(f"degree {a} is not among the bundle's moment degrees {bundle.moment_degrees}")
    alpha = bundle.mean_rate if bundle.mean_rate is not None else beta
    config = SampleTrainConfig(alpha, beta, delta, n, bundle.bucket_count, bundle.max_degree,
                               bundle.moment_degrees, bundle.absolute)
    out = bundle.copy()
    out.family = family
    out.moment_rate = beta
    SampleEngine(config, source, family, out, trace).moment_loop(a)
    return out


def sample_alternating_descent(config: SampleTrainConfig, source, family: GroupFamily,
                               trace: list | None = None, records: list | None = None
                               ) -> tuple[PredictorBundle, TrainReport]:
    """Finite-sample alternating descent; cap overruns are logged as failure events, never silent."""
    return SampleEngine(config, source, family, trace=trace, records=records).run()
