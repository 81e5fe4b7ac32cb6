"""Seeded synthetic finite distributions and group families with known moments."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import FiniteDistribution
from .predicates import All, Box, GroupFamily


@dataclass(frozen=True)
class SyntheticSpec:
    """Generator name plus keyword parameters.

    Generators:
      two_point       x in {0, 1} with equal mass, y = x deterministically
      random_grid     ``points`` random features in [0,1]^d, Dirichlet masses,
                      ``labels`` random label atoms per point
      bernoulli       regular grid in [0,1]^d, y ~ Bernoulli(q(x)) with
                      q(x) = lo + (hi - lo) * mean(x)
      beta            regular grid, y on ``levels`` equally spaced atoms with
                      Beta(a(x), b(x)) weights
    """

    name: str
    params: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"name": self.name, "params": dict(self.params)}

    @classmethod
    def from_json(cls, obj) -> "SyntheticSpec":
        return cls(obj["name"], dict(obj.get("params", {})))


def _grid(per_axis: int, d: int) -> np.ndarray:
    axis = (np.arange(per_axis) + 0.5) / per_axis
    mesh = np.meshgrid(*([axis] * d), indexing="ij")
    return np.column_stack([g.ravel() for g in mesh])


def two_point() -> FiniteDistribution:
    return FiniteDistribution.from_support([([0.0], 0.5, [(0.0, 1.0)]), ([1.0], 0.5, [(1.0, 1.0)])])


def random_grid(rng, points: int = 40, d: int = 2, labels: int = 3) -> FiniteDistribution:
    X = rng.random((points, d))
    mass = rng.dirichlet(np.ones(points))
    mass /= mass.sum()
    values = rng.random((points, labels))
    probs = rng.dirichlet(np.ones(labels), size=points)
    probs /= probs.sum(axis=1, keepdims=True)
    return FiniteDistribution(X, mass, values, probs)


def bernoulli_grid(per_axis: int = 5, d: int = 2, lo: float = 0.1, hi: float = 0.9) -> FiniteDistribution:
    if not 0.0 <= lo <= hi <= 1.0:
        raise ValueError("need 0 <= lo <= hi <= 1")
    X = _grid(per_axis, d)
    q = lo + (hi - lo) * X.mean(axis=1)
    mass = np.full(len(X), 1.0 / len(X))
    return FiniteDistribution(X, mass, np.column_stack([np.zeros(len(X)), np.ones(len(X))]),
                              np.column_stack([1.0 - q, q]))


def beta_grid(per_axis: int = 4, d: int = 2, levels: int = 11, concentration: float = 6.0) -> FiniteDistribution:
    X = _grid(per_axis, d)
    mean = 0.15 + 0.7 * X.mean(axis=1)
    conc = concentration * (0.5 + X[:, 0])  # noise level varies along the first axis
    grid = (np.arange(levels) + 0.5) / levels
    a = mean * conc
    b = (1.0 - mean) * conc
    logw = ((a - 1)[:, None] * np.log(grid) + (b - 1)[:, None] * np.log1p(-grid)
            - np.array([math.lgamma(u) + math.lgamma(v) - math.lgamma(u + v) for u, v in zip(a, b)])[:, None])
    w = np.exp(logw - logw.max(axis=1, keepdims=True))
    probs = w / w.sum(axis=1, keepdims=True)
    mass = np.full(len(X), 1.0 / len(X))
    return FiniteDistribution(X, mass, np.tile(grid, (len(X), 1)), probs)


def generate_synthetic(spec: SyntheticSpec, seed: int = 0) -> FiniteDistribution:
    """Deterministic under ``seed``; only ``random_grid`` consumes randomness."""
    p = dict(spec.params)
    if spec.name == "two_point":
        return two_point()
    if spec.name == "random_grid":
        return random_grid(np.random.default_rng(seed), **p)
    if spec.name == "bernoulli":
        return bernoulli_grid(**p)
    if spec.name == "beta":
        return beta_grid(**p)
    raise ValueError(f"unknown synthetic generator {spec.name!r}")


def random_box_family(rng, d: int, count: int, include_all: bool = True, min_width: float = 0.3) -> GroupFamily:
    """``count`` overlapping random axis boxes in [0,1]^d, optionally led by the whole domain."""
    groups = [("all", All())] if include_all else []
    for g in range(count - len(groups)):
        bounds = []
        for dim in range(d):
            width = rng.uniform(min_width, 1.0)
            lo = rng.uniform(0.0, 1.0 - width)
            bounds.append((dim, float(lo), float(lo + width)))
        groups.append((f"box{g}", Box(tuple(bounds))))
    return GroupFamily(groups)


def halves_family(d: int) -> GroupFamily:
    """The whole domain plus the lower and upper half along each axis."""
    groups = [("all", All())]
    for dim in range(d):
        groups.append((f"x{dim}_lo", Box(((dim, None, 0.5),))))
        groups.append((f"x{dim}_hi", Box(((dim, 0.5, None),))))
    return GroupFamily(groups)
