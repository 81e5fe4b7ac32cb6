"""Membership predicates over feature vectors and named group families.

Predicates are vectorized: ``mask(X, family)`` maps an ``(r, d)`` feature
array to an ``(r,)`` boolean array. The JSON grammar (used by group family
files, bundle files and the external oracle protocol) is::

    {"all": true}                      every point
    {"none": true}                     no point
    {"box": [{"dim": 0, "lo": 0.2, "hi": 0.5}, ...]}   lo <= x[dim] <= hi
    {"linear": {"w": [...], "b": 0.3}} w . x >= b
    {"and": [p, ...]}  {"or": [p, ...]}  {"not": p}
    {"ref": "name"}                    a group of the enclosing family

``lo``/``hi`` may be omitted for an unbounded side.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np


class Predicate:
    def mask(self, X: np.ndarray, family: "GroupFamily | None" = None) -> np.ndarray:
        raise NotImplementedError

    def to_json(self) -> dict:
        raise NotImplementedError

    def __call__(self, x) -> bool:
        return bool(self.mask(np.atleast_2d(np.asarray(x, dtype=float)))[0])


@dataclass(frozen=True)
class All(Predicate):
    def mask(self, X, family=None):
        return np.ones(len(X), dtype=bool)

    def to_json(self):
        return {"all": True}


@dataclass(frozen=True)
class Nothing(Predicate):
    def mask(self, X, family=None):
        return np.zeros(len(X), dtype=bool)

    def to_json(self):
        return {"none": True}


@dataclass(frozen=True)
class Box(Predicate):
    # (dim, lo, hi); None for an open side
    bounds: tuple[tuple[int, float | None, float | None], ...]

    def mask(self, X, family=None):
        out = np.ones(len(X), dtype=bool)
        for dim, lo, hi in self.bounds:
            col = X[:, dim]
            if lo is not None:
                out &= col >= lo
            if hi is not None:
                out &= col <= hi
        return out

    def to_json(self):
        items = []
        for dim, lo, hi in self.bounds:
            item = {"dim": dim}
            if lo is not None:
                item["lo"] = lo
            if hi is not None:
                item["hi"] = hi
            items.append(item)
        return {"box": items}


@dataclass(frozen=True)
class Linear(Predicate):
    """Half-space ``w . x >= b``."""

    w: tuple[float, ...]
    b: float

    def mask(self, X, family=None):
        return X @ np.asarray(self.w, dtype=float) >= self.b

    def to_json(self):
        return {"linear": {"w": list(self.w), "b": self.b}}


@dataclass(frozen=True)
class And(Predicate):
    parts: tuple[Predicate, ...]

    def mask(self, X, family=None):
        out = np.ones(len(X), dtype=bool)
        for p in self.parts:
            out &= p.mask(X, family)
        return out

    def to_json(self):
        return {"and": [p.to_json() for p in self.parts]}


@dataclass(frozen=True)
class Or(Predicate):
    parts: tuple[Predicate, ...]

    def mask(self, X, family=None):
        out = np.zeros(len(X), dtype=bool)
        for p in self.parts:
            out |= p.mask(X, family)
        return out

    def to_json(self):
        return {"or": [p.to_json() for p in self.parts]}


@dataclass(frozen=True)
class Not(Predicate):
    part: Predicate

    def mask(self, X, family=None):
        return ~self.part.mask(X, family)

    def to_json(self):
        return {"not": self.part.to_json()}


@dataclass(frozen=True)
class Ref(Predicate):
    """A named group of the family the predicate is evaluated against."""

    name: str

    def mask(self, X, family=None):
        if family is None:
            raise ValueError(f"group reference {self.name!r} needs a group family")
        return family.predicate(self.name).mask(X, family)

    def to_json(self):
        return {"ref": self.name}


@dataclass(frozen=True, eq=False)
class FunctionPredicate(Predicate):
    """Wraps a vectorized callable ``X -> bool array``. Not serializable."""

    fn: Callable[[np.ndarray], np.ndarray]
    label: str = "<function>"

    def mask(self, X, family=None):
        return np.asarray(self.fn(X), dtype=bool).reshape(len(X))

    def to_json(self):
        raise TypeError(f"predicate {self.label} is a Python callable and cannot be serialized")


def _finite(v, what):
    v = float(v)
    if not math.isfinite(v):
        raise ValueError(f"non-finite {what}: {v}")
    return v


def predicate_from_json(obj) -> Predicate:
    if not isinstance(obj, dict) or len(obj) != 1:
        raise ValueError(f"a predicate is a single-key object, got {obj!r}")
    (kind, body), = obj.items()
    if kind == "all":
        return All()
    if kind == "none":
        return Nothing()
    if kind == "box":
        bounds = []
        for item in body:
            lo = item.get("lo")
            hi = item.get("hi")
            bounds.append((
                int(item["dim"]),
                None if lo is None else _finite(lo, "box bound"),
                None if hi is None else _finite(hi, "box bound"),
            ))
        return Box(tuple(bounds))
    if kind == "linear":
        return Linear(tuple(_finite(w, "weight") for w in body["w"]), _finite(body["b"], "threshold"))
    if kind == "and":
        return And(tuple(predicate_from_json(p) for p in body))
    if kind == "or":
        return Or(tuple(predicate_from_json(p) for p in body))
    if kind == "not":
        return Not(predicate_from_json(body))
    if kind == "ref":
        return Ref(str(body))
    raise ValueError(f"unknown predicate form {kind!r}")


class GroupFamily:
    """Ordered collection of uniquely named membership predicates."""

    def __init__(self, groups: Iterable[tuple[str, Predicate | Callable]]):
        self.names: list[str] = []
        self.predicates: list[Predicate] = []
        for name, pred in groups:
            if name in self.names:
                raise ValueError(f"duplicate group name {name!r}")
            if not isinstance(pred, Predicate):
                pred = FunctionPredicate(pred, label=name)
            self.names.append(name)
            self.predicates.append(pred)
        self._index = {n: i for i, n in enumerate(self.names)}
        if not self.names:
            raise ValueError("a group family needs at least one group")

    def __len__(self):
        return len(self.names)

    def __iter__(self):
        return iter(zip(self.names, self.predicates))

    def index(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise KeyError(f"unknown group {name!r}") from None

    def predicate(self, name: str) -> Predicate:
        return self.predicates[self.index(name)]

    def masks(self, X: np.ndarray) -> np.ndarray:
        """Boolean membership matrix of shape ``(len(self), len(X))``."""
        X = np.asarray(X, dtype=float)
        out = np.empty((len(self), len(X)), dtype=bool)
        for g, pred in enumerate(self.predicates):
            out[g] = pred.mask(X, self)
        return out

    def to_json(self) -> dict:
        return {"groups": [{"name": n, "predicate": p.to_json()} for n, p in self]}

    @classmethod
    def from_json(cls, obj) -> "GroupFamily":
        return cls((g["name"], predicate_from_json(g["predicate"])) for g in obj["groups"])

    @classmethod
    def load(cls, path) -> "GroupFamily":
        with open(path) as fh:
            return cls.from_json(json.load(fh))

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=2)

    def serializable(self) -> bool:
        return not any(isinstance(p, FunctionPredicate) for p in self.predicates)

    def __repr__(self):
        return f"GroupFamily({self.names})"


def whole_domain() -> GroupFamily:
    return GroupFamily([("all", All())])


def stump(dim: int, threshold: float, d: int, upper: bool = True) -> Predicate:
    """Axis threshold ``x[dim] >= threshold`` (or its negation)."""
    w = [0.0] * d
    w[dim] = 1.0
    half = Linear(tuple(w), float(threshold))
    return half if upper else Not(half)
