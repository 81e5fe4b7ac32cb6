"""Oracle-efficient auditing: a learner over a hypothesis class replaces group enumeration.

For each refinement set ``R`` (a bucket cell over the whole domain) the
oracle is trained on the residuals ``r+ = (lbar - l) * [x in R]`` and
``r- = -r+`` of a training block; the learned sets intersected with ``R`` are
then audited on an independent check block.

Oracle protocol. ``learn(X, r, counts)`` receives the training rows ``X``
(shape ``(rows, d)``), residuals ``r`` in [-1, 1] and integer multiplicities
``counts``, and returns a :class:`~momentcal.predicates.Predicate` ``h``
approximately maximizing ``sum_b counts[b] * h(X[b]) * r[b] / n``.

External oracles run as a subprocess speaking line-delimited JSON over
stdin/stdout, one request and one response per line, UTF-8::

    request   {"d": <int>, "n": <int>, "x": [[float, ...], ...], "r": [float, ...], "count": [int, ...]}
    response  {"predicate": <predicate JSON>}
              {"error": "<message>"}

Floats are written with Python's shortest round-trip repr, so values arrive
bit-exact. The predicate grammar is the one of group family files.
"""
from __future__ import annotations

import json
import math
import subprocess
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from typing import Sequence

import numpy as np

from .auditing import Violation, audit_cells
from .core import MEAN, CellKey, PredictorBundle, ReplayState, SetDescriptor, iter_cells
from .finite import DistributionSource, SampleEngine, SampleTrainConfig
from .predicates import All, GroupFamily, Nothing, Predicate, Ref, predicate_from_json, stump


class OracleError(RuntimeError):
    pass


def residual_labels(pred: np.ndarray, obs: np.ndarray, in_r: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Positive and negative residuals ``lbar - l`` and ``l - lbar`` on ``R``, zero elsewhere."""
    pred = np.asarray(pred, dtype=float)
    obs = np.asarray(obs, dtype=float)
    in_r = np.asarray(in_r, dtype=bool)
    return np.where(in_r, pred - obs, 0.0), np.where(in_r, obs - pred, 0.0)


class ExhaustiveOracle:
    """Exact empirical maximizer over a finite class, with the empty set always admitted.

    Ties go to the lowest hypothesis index, and the empty set ranks after
    every hypothesis. Safe for concurrent use.
    """

    rho = 0.0
    concurrent = True

    def __init__(self, hypotheses: GroupFamily | Sequence[Predicate], family: GroupFamily | None = None):
        if isinstance(hypotheses, GroupFamily):
            self.family = hypotheses
            self.hypotheses = [Ref(n) for n in hypotheses.names]
        else:
            self.family = family
            self.hypotheses = list(hypotheses)
        if not self.hypotheses:
            raise ValueError("an exhaustive oracle needs at least one hypothesis")
        self.name = f"exhaustive({len(self.hypotheses)})"

    def values(self, X, r, counts) -> np.ndarray:
        n = counts.sum()
        w = counts * r
        return np.array([float(w[h.mask(X, self.family)].sum()) / n for h in self.hypotheses])

    def learn(self, X, r, counts) -> Predicate:
        vals = self.values(np.asarray(X, dtype=float), np.asarray(r, dtype=float), np.asarray(counts))
        best = int(np.argmax(vals))
        return self.hypotheses[best] if vals[best] >= 0.0 else Nothing()


class StumpOracle:
    """Empirical risk maximizer over axis-aligned stumps ``x[dim] >= t`` and ``x[dim] < t``.

    Thresholds are midpoints between consecutive distinct training values, so
    the class realized on a block has at most ``2 d (rows + 1)`` members.
    ``rho(n, delta)`` is a Hoeffding plus union-bound estimate of the
    approximation slack over that effective class, stated rather than proven.
    """

    concurrent = True

    def __init__(self, d: int):
        self.d = d
        self.name = "stump"

    @staticmethod
    def rho(n: int, delta: float, d: int = 1) -> float:
        size = 2 * d * (n + 1)
        return 2.0 * math.sqrt(2.0 * math.log(2.0 * size / delta) / n)

    def learn(self, X, r, counts) -> Predicate:
        X = np.asarray(X, dtype=float)
        w = np.asarray(counts) * np.asarray(r, dtype=float)
        total = float(w.sum())
        best_val, best = 0.0, Nothing()
        if total > best_val:
            best_val, best = total, All()
        for dim in range(self.d):
            order = np.argsort(X[:, dim], kind="stable")
            xs = X[order, dim]
            ws = w[order]
            prefix = np.cumsum(ws)
            cut = np.flatnonzero(xs[1:] > xs[:-1])  # split after position c
            for c in cut:
                t = float((xs[c] + xs[c + 1]) / 2.0)
                below = float(prefix[c])
                above = total - below
                if above > best_val:
                    best_val, best = above, stump(dim, t, self.d, upper=True)
                if below > best_val:
                    best_val, best = below, stump(dim, t, self.d, upper=False)
        return best


class SubprocessOracle:
    """External learner behind the line-delimited JSON protocol; calls are serialized."""

    concurrent = False
    rho = float("nan")

    def __init__(self, command: Sequence[str], name: str | None = None):
        self.command = list(command)
        self.name = name or " ".join(self.command)
        self._lock = threading.Lock()
        self._proc = None

    def _start(self):
        if self._proc is None or self._proc.poll() is not None:
            self._proc = subprocess.Popen(self.command, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                                          text=True, encoding="utf-8", bufsize=1)

    def learn(self, X, r, counts) -> Predicate:
        X = np.asarray(X, dtype=float)
        req = {"d": int(X.shape[1]), "n": int(np.sum(counts)), "x": X.tolist(),
               "r": [float(v) for v in r], "count": [int(c) for c in counts]}
        with self._lock:
            self._start()
            self._proc.stdin.write(json.dumps(req) + "\n")
            self._proc.stdin.flush()
            line = self._proc.stdout.readline()
        if not line:
            raise OracleError(f"oracle {self.name!r} closed its output")
        resp = json.loads(line)
        if "error" in resp:
            raise OracleError(f"oracle {self.name!r} failed: {resp['error']}")
        return predicate_from_json(resp["predicate"])

    def close(self):
        if self._proc is not None:
            self._proc.stdin.close()
            self._proc.wait(timeout=10)
            self._proc = None


def refinement_cells(state: ReplayState, rows: np.ndarray, degrees: Sequence[int], include_mean: bool):
    """Domain bucket cells ``X(mu_bar, i)`` and ``X(mu_bar, mbar_a, i, j)`` populated on ``rows``."""
    everyone = np.ones((1, len(rows)), dtype=bool)
    return iter_cells(everyone, state.mean_buckets()[rows],
                      {a: state.moment_buckets(a)[rows] for a in degrees}, state.m,
                      include_mean=include_mean, degrees=list(degrees))


def _cell_descriptor(key: CellKey, pred: Predicate) -> SetDescriptor:
    mom = None if key.degree is None else (key.degree, key.moment_bucket)
    return SetDescriptor(pred, key.mean_bucket, mom)


def oracle_audit_wrapper(train_labels, check_labels, alpha: float, delta: float, train, check,
                         refinements, oracle, check_mask, workers: int | None = None,
                         records: list | None = None, stats: dict | None = None) -> Violation | None:
    """Learn candidate sets on ``train`` for each refinement, then audit them on ``check``.

    ``train_labels``/``check_labels`` are ``(pred, obs)`` row arrays for the two
    blocks; ``refinements`` yields ``(key, train_row_mask)`` in audit order;
    ``check_mask(descriptor)`` returns the check-row membership of a set. The
    verdict's key is the :class:`SetDescriptor` of the violating candidate.
    """
    tp, to = train_labels
    X = train.features
    refs = [(key, mask) for key, mask in refinements if train.counts[mask].sum() > 0]
    lock = threading.Lock()

    def learn(item):
        key, mask = item
        r_plus, r_minus = residual_labels(tp, to, mask)
        out = []
        for r in (r_plus, r_minus):
            t0 = time.perf_counter()
            try:
                h = oracle.learn(X, r, train.counts)
            except Exception as exc:
                raise OracleError(f"oracle failed on refinement {key.label()}: {exc}") from exc
            if stats is not None:
                with lock:
                    stats["calls"] = stats.get("calls", 0) + 1
                    stats["seconds"] = stats.get("seconds", 0.0) + time.perf_counter() - t0
            out.append(h)
        return key, out

    if workers and workers > 1 and getattr(oracle, "concurrent", False):
        with ThreadPoolExecutor(workers) as pool:
            learned = list(pool.map(learn, refs))
    else:
        learned = [learn(item) for item in refs]

    candidates = []
    for key, hs in learned:
        for h in hs:
            if isinstance(h, Nothing):
                continue
            desc = _cell_descriptor(key, h)
            candidates.append((desc, check_mask(desc)))
    cp, co = check_labels
    return audit_cells(np.asarray(cp, float), np.asarray(co, float), check.counts, candidates,
                       alpha, delta, records)


class OracleEngine(SampleEngine):
    """Sample engine whose audits go through an agnostic learning oracle.

    Check blocks come from ``source`` (the stream a plain sample run would
    audit on) and training blocks from ``train_source``.
    """

    def __init__(self, config: SampleTrainConfig, source, family: GroupFamily, oracle, train_source,
                 bundle: PredictorBundle | None = None, trace=None, records=None, workers: int | None = None):
        super().__init__(config, source, family, bundle, trace, records)
        self.oracle = oracle
        self.train_source = train_source
        self.workers = workers
        self.stats: dict = {}
        if train_source.table is source.table:
            self.train_state = self.state
        else:
            self.train_state = ReplayState(train_source.table, family, self.bundle.bucket_count,
                                           self.bundle.moment_degrees)
            for rec in self.bundle.updates:
                self.train_state.apply(rec)

    def draw_train(self):
        block = self.train_source.draw(self.config.n)
        self.report.train_blocks_consumed += 1
        self.report.examples_consumed += self.config.n
        return block

    def _check_mask(self, check):
        def mask(desc: SetDescriptor):
            return self.state.selector_mask(desc)[check.index]
        return mask

    def _labels(self, st: ReplayState, block, target: int):
        idx = block.index
        if target == MEAN:
            return st.mean[idx], block.y
        dev = block.y - st.mean[idx]
        if self.bundle.absolute:
            dev = np.abs(dev)
        return st.moments[target][idx], dev ** target

    def _audit(self, target: int, rate: float, degrees, include_mean: bool):
        train = self.draw_train()
        check = self.draw()
        refs = refinement_cells(self.train_state, train.index, degrees, include_mean)
        v = oracle_audit_wrapper(self._labels(self.train_state, train, target), self._labels(self.state, check, target),
                                 rate, self.config.delta, train, check, refs, self.oracle, self._check_mask(check),
                                 self.workers, self.records, self.stats)
        self.report.oracle_calls = self.stats.get("calls", 0)
        self.report.oracle_seconds = self.stats.get("seconds", 0.0)
        return v

    def mean_audit(self):
        return self._audit(MEAN, self.config.alpha, self.bundle.moment_degrees, True)

    def moment_audit(self, a):
        return self._audit(a, self.config.beta, (a,), False)

    def apply(self, v, target, rate):
        super().apply(v, target, rate)
        if self.train_state is not self.state:
            self.train_state.apply(self.bundle.updates[-1])


def _default_train_source(source, seed: int):
    if isinstance(source, DistributionSource):
        return DistributionSource(source.dist, seed=[seed, 1], aggregate=source.aggregate)
    return source  # a pool interleaves training and check blocks


def oracle_pseudo_moment_loop(a: int, beta: float, delta: float, bundle: PredictorBundle, source, n: int,
                              oracle, family: GroupFamily, train_source=None, trace=None) -> PredictorBundle:
    """Pseudo-moment loop for degree ``a`` with oracle audits; the mean stays fixed."""
    if a not in bundle.moment_degrees:
        raise ValueError(f"degree {a} is not among the bundle's moment degrees {bundle.moment_degrees}")
    alpha = bundle.mean_rate if bundle.mean_rate is not None else beta
    config = SampleTrainConfig(alpha, beta, delta, n, bundle.bucket_count, bundle.max_degree,
                               bundle.moment_degrees, bundle.absolute)
    out = bundle.copy()
    out.family = family
    out.moment_rate = beta
    train_source = train_source if train_source is not None else _default_train_source(source, config.seed)
    OracleEngine(config, source, family, oracle, train_source, out, trace).moment_loop(a)
    return out


def oracle_alternating_descent(config: SampleTrainConfig, source, oracle, family: GroupFamily,
                               train_source=None, trace=None, records=None, workers: int | None = None):
    """Alternating descent with oracle audits in both phases; returns ``(bundle, report)``.

    ``family`` names the groups referenced by learned hypotheses (it should
    contain the audited groups); the oracle's class is what is searched.
    """
    train_source = train_source if train_source is not None else _default_train_source(source, config.seed)
    return OracleEngine(config, source, family, oracle, train_source, trace=trace, records=records,
                        workers=workers).run()
