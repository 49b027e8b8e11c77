"""Reading score/label/histogram CSV files and writing posterior dumps."""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Optional

import numpy as np

from .core import IntervalEstimate, LabeledSample, PrevalencePosterior, ScoredPopulation


class InputError(ValueError):
    """A malformed input file; the message names the file and line."""

    def __init__(self, path, line: Optional[int], message: str):
        where = f"{path}:{line}" if line is not None else str(path)
        super().__init__(f"{where}: {message}")
        self.path = str(path)
        self.line = line


def _rows(path, required: list[str], optional: tuple[str, ...] = ()):
    path = Path(path)
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise InputError(path, None, exc.strerror or str(exc)) from exc
    with fh:
        reader = csv.DictReader(fh)
        header = [h.strip() for h in (reader.fieldnames or [])]
        missing = [c for c in required if c not in header]
        if missing:
            raise InputError(path, 1, f"missing column(s): {', '.join(missing)}")
        unknown = [c for c in header if c not in required and c not in optional]
        if unknown:
            raise InputError(path, 1, f"unexpected column(s): {', '.join(unknown)}")
        reader.fieldnames = header
        for row in reader:
            yield reader.line_num, {k: (v.strip() if v is not None else "") for k, v in row.items()}


def _number(path, line, name, text, kind=float):
    try:
        value = kind(text)
    except (TypeError, ValueError):
        raise InputError(path, line, f"{name}={text!r} is not a valid {kind.__name__}") from None
    if kind is float and not np.isfinite(value):
        raise InputError(path, line, f"{name}={text!r} is not finite")
    return value


def _score(path, line, text) -> float:
    s = _number(path, line, "score", text)
    if not 0.0 <= s <= 1.0:
        raise InputError(path, line, f"score {s} outside [0, 1]")
    return s


def read_scores_csv(path) -> ScoredPopulation:
    """Population file with a single ``score`` column."""
    scores = [_score(path, line, row["score"]) for line, row in _rows(path, ["score"])]
    if not scores:
        raise InputError(path, None, "no scores")
    return ScoredPopulation.from_scores(scores)


def read_histogram_csv(path) -> ScoredPopulation:
    """Population histogram with columns ``bucket_index,count`` (0-based, all buckets present)."""
    found = {}
    for line, row in _rows(path, ["bucket_index", "count"]):
        k = _number(path, line, "bucket_index", row["bucket_index"], int)
        c = _number(path, line, "count", row["count"], int)
        if k < 0 or c < 0:
            raise InputError(path, line, "bucket_index and count must be non-negative")
        if k in found:
            raise InputError(path, line, f"duplicate bucket_index {k}")
        found[k] = c
    if not found:
        raise InputError(path, None, "empty histogram")
    K = max(found) + 1
    if len(found) != K:
        raise InputError(path, None, f"bucket indices must cover 0..{K - 1}")
    counts = np.array([found[k] for k in range(K)])
    if counts.sum() < 1:
        raise InputError(path, None, "histogram holds no items")
    return ScoredPopulation.from_histogram(counts)


def read_labels_csv(path) -> LabeledSample:
    """Labeled sample with columns ``score,label`` and optional ``weight``, ``day``."""
    scores, labels, weights, days = [], [], [], []
    has_weight = has_day = None
    for line, row in _rows(path, ["score", "label"], optional=("weight", "day")):
        if has_weight is None:
            has_weight, has_day = "weight" in row, "day" in row
        scores.append(_score(path, line, row["score"]))
        if row["label"] not in ("0", "1"):
            raise InputError(path, line, f"label={row['label']!r} must be 0 or 1")
        labels.append(int(row["label"]))
        if has_weight:
            w = _number(path, line, "weight", row["weight"])
            if w <= 0:
                raise InputError(path, line, f"weight {w} must be positive")
            weights.append(w)
        if has_day:
            d = _number(path, line, "day", row["day"], int)
            if d < 0:
                raise InputError(path, line, f"day {d} must be non-negative")
            days.append(d)
    if not scores:
        raise InputError(path, None, "no labeled rows")
    return LabeledSample(
        scores, labels, weights if has_weight else None, days if has_day else None
    )


def write_histogram_csv(path, counts) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["bucket_index", "count"])
        for k, c in enumerate(counts):
            w.writerow([k, int(c)])


def write_pi_samples_csv(path, samples) -> None:
    """Single-column CSV of prevalence draws."""
    with open(path, "w", newline="") as fh:
        fh.write("pi\n")
        for s in np.asarray(samples, dtype=float).tolist():
            fh.write(f"{s!r}\n")


def read_pi_samples_csv(path) -> np.ndarray:
    return np.array([_number(path, line, "pi", row["pi"]) for line, row in _rows(path, ["pi"])])


def interval_record(estimate: IntervalEstimate, posterior: PrevalencePosterior) -> dict:
    """Fields common to every method's JSON output."""
    rec = {
        "method": posterior.method,
        "mean": posterior.mean,
        "variance": posterior.variance,
        **estimate.as_dict(),
    }
    if posterior.rhat is not None:
        rec["rhat"] = posterior.rhat
    if posterior.method == "gp":
        rec["converged"] = bool(posterior.converged)
    return rec


def dumps(obj) -> str:
    """Deterministic JSON encoding (sorted keys, repr-exact floats)."""
    return json.dumps(obj, indent=2, sort_keys=True, default=_jsonable)


def _jsonable(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"{type(obj).__name__} is not JSON serializable")
