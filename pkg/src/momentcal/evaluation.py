"""Exact and empirical calibration audits and interval coverage measurement.

Mean-only cells ``G(mu_bar, i)`` are checked against ``alpha/P``. Moment cells
``G(mu_bar, mbar_a, i, j)`` are checked on the mean against ``alpha/P`` and on
the central moment against ``(beta + a*alpha)/P + a/m``, where the true moment
is taken about the cell's own true mean.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .auditing import chernoff_radius
from .core import CellKey, FiniteDistribution, Sample, iter_cells
from .intervals import IntervalParams, width_formula


@dataclass(frozen=True)
class CellRow:
    key: CellKey
    label: str
    mass: float
    count: int | None
    mean_pred: float
    mean_true: float
    mean_gap: float
    mean_budget: float
    moment_pred: float | None = None
    moment_true: float | None = None
    moment_gap: float | None = None
    moment_budget: float | None = None
    uncertainty: float | None = None  # 2 sqrt(ln(2/delta)/(2 n')) for empirical rows
    slack: float = 0.0

    @property
    def ratio(self) -> float:
        """Worst gap/budget ratio over the cell's checks."""
        r = self.mean_gap / self.mean_budget
        if self.moment_gap is not None:
            r = max(r, self.moment_gap / self.moment_budget)
        return r

    @property
    def mean_pass(self) -> bool:
        return self.mean_gap <= self.mean_budget + self.slack

    @property
    def moment_pass(self) -> bool:
        return self.moment_gap is None or self.moment_gap <= self.moment_budget + self.slack

    @property
    def passed(self) -> bool:
        return self.mean_pass and self.moment_pass

    def to_json(self) -> dict:
        out = {f: getattr(self, f) for f in self.__dataclass_fields__ if f != "key"}
        out["cell"] = {"group": self.key.group, "mean_bucket": self.key.mean_bucket,
                       "degree": self.key.degree, "moment_bucket": self.key.moment_bucket}
        out["ratio"] = self.ratio
        out["passed"] = self.passed
        return out


COLUMNS = ["label", "mass", "mean_gap", "mean_budget", "moment_gap", "moment_budget", "ratio", "passed"]


@dataclass
class CalibrationReport:
    rows: list[CellRow] = field(default_factory=list)
    mode: str = "exact"
    alpha: float = 0.0
    beta: float = 0.0

    def __post_init__(self):
        self.rows = sorted(self.rows, key=lambda r: -r.ratio)

    @property
    def violations(self) -> list[CellRow]:
        return [r for r in self.rows if not r.passed]

    @property
    def passed(self) -> bool:
        return not self.violations

    @property
    def worst_mean_ratio(self) -> float:
        return max((r.mean_gap / r.mean_budget for r in self.rows), default=0.0)

    @property
    def worst_moment_ratio(self) -> float:
        return max((r.moment_gap / r.moment_budget for r in self.rows if r.moment_gap is not None), default=0.0)

    def summary(self) -> dict:
        return {"mode": self.mode, "alpha": self.alpha, "beta": self.beta, "cells": len(self.rows),
                "violations": len(self.violations), "passed": self.passed, "worst_mean_ratio": self.worst_mean_ratio,
                "worst_moment_ratio": self.worst_moment_ratio}

    def to_json(self) -> dict:
        return {"summary": self.summary(), "rows": [r.to_json() for r in self.rows]}

    def to_csv(self) -> str:
        buf = io.StringIO()
        fields = list(self.rows[0].to_json()) if self.rows else COLUMNS
        fields = [f for f in fields if f != "cell"]
        w = csv.DictWriter(buf, fieldnames=fields, extrasaction="ignore", lineterminator="\n")
        w.writeheader()
        for r in self.rows:
            w.writerow(r.to_json())
        return buf.getvalue()

    def table(self, limit: int | None = None) -> str:
        def fmt(v):
            if v is None:
                return "-"
            if isinstance(v, bool):
                return "ok" if v else "FAIL"
            if isinstance(v, float):
                return f"{v:.4g}"
            return str(v)
        rows = self.rows if limit is None else self.rows[:limit]
        cells = [COLUMNS] + [[fmt(r.to_json()[c]) for c in COLUMNS] for r in rows]
        widths = [max(len(row[i]) for row in cells) for i in range(len(COLUMNS))]
        lines = ["  ".join(v.ljust(w) for v, w in zip(row, widths)) for row in cells]
        s = self.summary()
        lines.append(f"{s['cells']} cells, {s['violations']} violations, worst mean ratio "
                     f"{s['worst_mean_ratio']:.4g}, worst moment ratio {s['worst_moment_ratio']:.4g}")
        return "\n".join(lines)


def _cells(bundle, family, X, include_mean=True):
    st = bundle.state(X)
    groups = family.masks(X)
    codes = st.mean_buckets()
    mcodes = {a: st.moment_buckets(a) for a in bundle.moment_degrees}
    return st, iter_cells(groups, codes, mcodes, bundle.bucket_count, include_mean=include_mean)


def exact_calibration_audit(bundle, dist: FiniteDistribution, family, alpha: float, beta: float,
                            slack: float = 0.0) -> CalibrationReport:
    """Exhaustive audit of every positive-mass cell against the true distribution."""
    m = bundle.bucket_count
    st, cells = _cells(bundle, family, dist.X)
    rows = []
    for key, mask in cells:
        w = dist.mass * mask
        P = float(w.sum())
        if P <= 0:
            continue
        joint = w[:, None] * dist.probs
        mu = float((joint * dist.values).sum() / P)
        mean_pred = float((w * st.mean).sum() / P)
        kw = dict(key=key, label=key.label(family), mass=P, count=None, mean_pred=mean_pred, mean_true=mu,
                  mean_gap=abs(mean_pred - mu), mean_budget=alpha / P, slack=slack)
        if key.degree is not None:
            a = key.degree
            dev = dist.values - mu
            if bundle.absolute:
                dev = np.abs(dev)
            true_m = float((joint * dev ** a).sum() / P)
            pred_m = float((w * st.moments[a]).sum() / P)
            kw.update(moment_pred=pred_m, moment_true=true_m, moment_gap=abs(pred_m - true_m),
                      moment_budget=(beta + a * alpha) / P + a / m)
        rows.append(CellRow(**kw))
    return CalibrationReport(rows, "exact", alpha, beta)


def empirical_calibration_audit(bundle, sample: Sample, family, alpha: float, beta: float,
                                delta: float = 0.05, slack: float = 0.0) -> CalibrationReport:
    """The exact audit's checks with empirical masses ``n'/n`` and cell averages from ``sample``."""
    if len(sample) == 0:
        return CalibrationReport([], "empirical", alpha, beta)
    m = bundle.bucket_count
    # replay once on the distinct feature rows of the sample
    st, cells = _cells(bundle, family, sample.table)
    idx = sample.index
    counts = sample.counts.astype(float)
    n = counts.sum()
    y = sample.y
    mean_rows = st.mean[idx]
    rows = []
    for key, tmask in cells:
        mask = tmask[idx]
        c = counts[mask]
        n_sub = c.sum()
        if n_sub <= 0:
            continue
        P = n_sub / n
        mu = float((c * y[mask]).sum() / n_sub)
        mean_pred = float((c * mean_rows[mask]).sum() / n_sub)
        kw = dict(key=key, label=key.label(family), mass=P, count=int(n_sub), mean_pred=mean_pred,
                  mean_true=mu, mean_gap=abs(mean_pred - mu), mean_budget=alpha / P,
                  uncertainty=2.0 * chernoff_radius(n_sub, delta), slack=slack)
        if key.degree is not None:
            a = key.degree
            dev = y[mask] - mu
            if bundle.absolute:
                dev = np.abs(dev)
            true_m = float((c * dev ** a).sum() / n_sub)
            pred_m = float((c * st.moments[a][idx][mask]).sum() / n_sub)
            kw.update(moment_pred=pred_m, moment_true=true_m, moment_gap=abs(pred_m - true_m),
                      moment_budget=(beta + a * alpha) / P + a / m)
        rows.append(CellRow(**kw))
    return CalibrationReport(rows, "empirical", alpha, beta)


@dataclass(frozen=True)
class CoverageRow:
    key: CellKey
    label: str
    mass: float
    count: int | None
    coverage: float
    target: float

    @property
    def passed(self) -> bool:
        return self.coverage >= self.target

    def to_json(self) -> dict:
        return {"label": self.label, "mass": self.mass, "count": self.count, "coverage": self.coverage,
                "target": self.target, "passed": self.passed}


def _moment_cells(bundle, family, X, k):
    st = bundle.state(X)
    groups = family.masks(X)
    cells = iter_cells(groups, st.mean_buckets(), {k: st.moment_buckets(k)}, bundle.bucket_count,
                       include_mean=False)
    return st, cells


def exact_coverage(bundle, params: IntervalParams, dist: FiniteDistribution, family) -> list[CoverageRow]:
    """Exact per-cell probability that y lies in the (raw) interval, for cells of mass >= gamma."""
    st, cells = _moment_cells(bundle, family, dist.X, params.k)
    w = width_formula(st.moments[params.k], params, bundle.bucket_count)
    inside = np.abs(dist.values - st.mean[:, None]) <= w[:, None]
    p_in = (dist.probs * inside).sum(axis=1)
    rows = []
    for key, mask in cells:
        P = float(dist.mass[mask].sum())
        if P >= params.gamma:
            cov = float((dist.mass[mask] * p_in[mask]).sum() / P)
            rows.append(CoverageRow(key, key.label(family), P, None, cov, 1.0 - params.delta))
    return rows


def coverage_audit(bundle, params: IntervalParams, sample: Sample, family, tolerance: float = 0.0
                   ) -> list[CoverageRow]:
    """Held-out fraction of labels inside the interval, per cell of empirical mass >= gamma.

    A row passes when its coverage is at least ``1 - delta - tolerance``.
    """
    if len(sample) == 0:
        return []
    st, cells = _moment_cells(bundle, family, sample.table, params.k)
    w = width_formula(st.moments[params.k], params, bundle.bucket_count)
    idx = sample.index
    inside = np.abs(sample.y - st.mean[idx]) <= w[idx]
    counts = sample.counts.astype(float)
    n = counts.sum()
    rows = []
    for key, tmask in cells:
        mask = tmask[idx]
        n_sub = counts[mask].sum()
        if n_sub / n >= params.gamma:
            cov = float((counts[mask] * inside[mask]).sum() / n_sub)
            rows.append(CoverageRow(key, key.label(family), n_sub / n, int(n_sub), cov,
                                    1.0 - params.delta - tolerance))
    return rows


def coverage_csv(rows: list[CoverageRow]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=["label", "mass", "count", "coverage", "target", "passed"],
                       lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow(r.to_json())
    return buf.getvalue()
