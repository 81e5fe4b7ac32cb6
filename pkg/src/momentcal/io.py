"""File formats: dataset CSV, distribution JSON, JSONL traces and output headers.

Dataset CSV: a header row naming the columns, then one example per row with
the id first, feature columns next and the label last. Lines starting with
``#`` are header comments and are skipped.

Distribution JSON::

    {"support": [{"id": ..., "x": [..], "mass": 0.25, "law": [[label, prob], ...]}, ...]}
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
from pathlib import Path

import numpy as np

from . import __version__
from .core import FiniteDistribution, Sample


class DataFormatError(ValueError):
    """A malformed input file; the message names the file and line."""


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


OUTPUT_KEYS = ("out", "family_out", "sample_out")


def header(command: str, config: dict) -> dict:
    """Output-file header; output locations are left out so reruns elsewhere match byte for byte."""
    config = {k: v for k, v in config.items() if k not in OUTPUT_KEYS}
    return {"tool": "momentcal", "version": __version__, "command": command,
            "config_hash": config_hash(config), "config": config}


def comment_block(head: dict) -> str:
    lines = [f"# momentcal {head['version']} {head['command']}", f"# config_hash {head['config_hash']}"]
    for key in sorted(head["config"]):
        lines.append(f"# {key} = {json.dumps(head['config'][key], default=str)}")
    return "\n".join(lines) + "\n"


def _data_lines(fh):
    for lineno, line in enumerate(fh, start=1):
        if line.startswith("#") or not line.strip():
            continue
        yield lineno, line


def read_dataset_csv(path) -> Sample:
    path = Path(path)
    ids, X, y = [], [], []
    with open(path, newline="") as fh:
        lines = list(_data_lines(fh))
    if not lines:
        raise DataFormatError(f"{path}: no header row")
    rows = csv.reader([ln for _, ln in lines])
    head = next(rows)
    if len(head) < 3:
        raise DataFormatError(f"{path}:{lines[0][0]}: need id, at least one feature and a label column")
    for (lineno, _), row in zip(lines[1:], rows):
        if len(row) != len(head):
            raise DataFormatError(f"{path}:{lineno}: expected {len(head)} fields, found {len(row)}")
        try:
            feats = [float(v) for v in row[1:-1]]
            label = float(row[-1])
        except ValueError as exc:
            raise DataFormatError(f"{path}:{lineno}: {exc}") from None
        if not all(math.isfinite(v) for v in feats):
            raise DataFormatError(f"{path}:{lineno}: non-finite feature value")
        if not 0.0 <= label <= 1.0:
            raise DataFormatError(f"{path}:{lineno}: label {label} outside [0, 1]")
        ids.append(row[0])
        X.append(feats)
        y.append(label)
    d = len(head) - 2
    return Sample.from_arrays(np.array(X, dtype=float).reshape(len(X), d), y, ids=ids)


def write_dataset_csv(path, sample: Sample, head: dict | None = None, feature_names=None) -> None:
    X = sample.features
    d = X.shape[1]
    names = feature_names or [f"x{i}" for i in range(d)]
    ids = sample.ids if sample.ids is not None else np.arange(len(sample))
    with open(path, "w", newline="") as fh:
        if head is not None:
            fh.write(comment_block(head))
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", *names, "y"])
        for b in range(len(sample)):
            for _ in range(int(sample.counts[b])):
                w.writerow([ids[b], *(repr(float(v)) for v in X[b]), repr(float(sample.y[b]))])


def distribution_to_json(dist: FiniteDistribution) -> dict:
    support = []
    for r in range(len(dist)):
        law = [[float(v), float(p)] for v, p in zip(dist.values[r], dist.probs[r]) if p > 0]
        support.append({"id": dist.ids[r], "x": dist.X[r].tolist(), "mass": float(dist.mass[r]), "law": law})
    return {"support": support}


def distribution_from_json(obj, path="<distribution>") -> FiniteDistribution:
    try:
        support = [(s["x"], s["mass"], [tuple(p) for p in s["law"]]) for s in obj["support"]]
        ids = [s.get("id", i) for i, s in enumerate(obj["support"])]
    except (KeyError, TypeError) as exc:
        raise DataFormatError(f"{path}: malformed distribution ({exc})") from None
    return FiniteDistribution.from_support(support, ids)


def read_json(path) -> dict:
    path = Path(path)
    with open(path) as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataFormatError(f"{path}:{exc.lineno}: {exc.msg}") from None


def read_distribution(path) -> FiniteDistribution:
    return distribution_from_json(read_json(path), path)


def write_json(path, obj, head: dict | None = None) -> None:
    out = {"header": head, **obj} if head is not None else obj
    with open(path, "w") as fh:
        json.dump(out, fh, indent=1, default=str)
        fh.write("\n")


def write_jsonl(path, records, head: dict | None = None) -> None:
    with open(path, "w") as fh:
        if head is not None:
            fh.write(json.dumps({"header": head}, default=str) + "\n")
        for rec in records:
            fh.write(json.dumps(rec, default=str) + "\n")


def write_text(path, text: str, head: dict | None = None) -> None:
    with open(path, "w") as fh:
        if head is not None:
            fh.write(comment_block(head))
        fh.write(text)
