"""Domain types, score bucketing and interval summaries shared by all estimators."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.stats import norm

DEFAULT_SEED = 20210

# two-sided 95% normal quantile
Z975 = float(norm.ppf(0.975))


def _frozen(values, dtype) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


def bucket_index(scores, K: int) -> np.ndarray:
    """Zero-based bucket of each score for K equal-width buckets on [0, 1].

    Bucket k covers [k/K, (k+1)/K); the score 1.0 goes to the last bucket.
    """
    scores = np.asarray(scores, dtype=float)
    idx = np.floor(scores * K).astype(np.int64)
    return np.minimum(idx, K - 1)


def _check_scores(scores: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(scores)):
        raise ValueError(f"{what} contain non-finite values")
    if scores.size and (scores.min() < 0.0 or scores.max() > 1.0):
        raise ValueError(f"{what} must lie in [0, 1]")


@dataclass(frozen=True)
class ScoredPopulation:
    """Classifier scores of the full population, or their bucket histogram.

    Build with :meth:`from_scores` or :meth:`from_histogram`.
    """

    scores: Optional[np.ndarray] = None
    bucket_counts: Optional[np.ndarray] = None

    def __post_init__(self):
        if (self.scores is None) == (self.bucket_counts is None):
            raise ValueError("give exactly one of scores or bucket_counts")
        if self.scores is not None:
            scores = _frozen(self.scores, float).ravel()
            _check_scores(scores, "population scores")
            if scores.size == 0:
                raise ValueError("population is empty")
            object.__setattr__(self, "scores", scores)
        else:
            counts = np.asarray(self.bucket_counts)
            if counts.ndim != 1 or counts.size == 0:
                raise ValueError("bucket_counts must be a non-empty 1-d sequence")
            if np.any(counts < 0) or np.any(counts != np.round(counts)):
                raise ValueError("bucket_counts must be non-negative integers")
            counts = _frozen(counts, np.int64)
            if counts.sum() < 1:
                raise ValueError("population is empty")
            object.__setattr__(self, "bucket_counts", counts)

    @classmethod
    def from_scores(cls, scores) -> "ScoredPopulation":
        return cls(scores=scores)

    @classmethod
    def from_histogram(cls, counts) -> "ScoredPopulation":
        return cls(bucket_counts=counts)

    @property
    def size(self) -> int:
        if self.scores is not None:
            return int(self.scores.size)
        return int(self.bucket_counts.sum())

    def histogram(self, K: int) -> np.ndarray:
        """Item counts per bucket for K buckets.

        A stored histogram with K_h bins can be coarsened to any K dividing K_h.
        """
        if self.scores is not None:
            return np.bincount(bucket_index(self.scores, K), minlength=K)
        K_h = self.bucket_counts.size
        if K_h == K:
            return self.bucket_counts.copy()
        if K_h % K != 0:
            raise ValueError(f"histogram with {K_h} bins cannot be re-bucketed to K={K}")
        return self.bucket_counts.reshape(K, K_h // K).sum(axis=1)


@dataclass(frozen=True)
class LabeledSample:
    """Labeled subset of the population.

    ``weights`` are inclusion weights (1 / inclusion probability, up to scale)
    and default to 1. ``days`` optionally tags each entry with a day index.
    """

    scores: np.ndarray
    labels: np.ndarray
    weights: Optional[np.ndarray] = None
    days: Optional[np.ndarray] = None

    def __post_init__(self):
        scores = _frozen(self.scores, float).ravel()
        labels = np.asarray(self.labels).ravel()
        if scores.size == 0:
            raise ValueError("labeled sample is empty")
        if labels.shape != scores.shape:
            raise ValueError("scores and labels differ in length")
        _check_scores(scores, "sample scores")
        if not np.all((labels == 0) | (labels == 1)):
            raise ValueError("labels must be 0 or 1")
        object.__setattr__(self, "scores", scores)
        object.__setattr__(self, "labels", _frozen(labels, np.int8))

        weights = np.ones_like(scores) if self.weights is None else np.asarray(self.weights, float).ravel()
        if weights.shape != scores.shape:
            raise ValueError("weights and scores differ in length")
        if not np.all(np.isfinite(weights)) or np.any(weights <= 0):
            raise ValueError("inclusion weights must be positive and finite")
        object.__setattr__(self, "weights", _frozen(weights, float))

        if self.days is not None:
            days = np.asarray(self.days).ravel()
            if days.shape != scores.shape:
                raise ValueError("days and scores differ in length")
            if np.any(days < 0) or np.any(days != np.round(days)):
                raise ValueError("days must be non-negative integers")
            object.__setattr__(self, "days", _frozen(days, np.int64))

    def __len__(self) -> int:
        return int(self.scores.size)

    @property
    def n_positive(self) -> int:
        return int(self.labels.sum())

    def select(self, mask) -> "LabeledSample":
        mask = np.asarray(mask)
        return LabeledSample(
            self.scores[mask],
            self.labels[mask],
            self.weights[mask],
            None if self.days is None else self.days[mask],
        )


@dataclass(frozen=True)
class BucketConfig:
    K: int

    def __post_init__(self):
        if int(self.K) != self.K or self.K < 1:
            raise ValueError("K must be a positive integer")

    @property
    def edges(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.K + 1)


@dataclass(frozen=True)
class BucketSummary:
    """Per-bucket population weights and labeled counts.

    ``population_size`` is the number of population items behind ``weights``;
    it is needed only when summaries from several days are combined.
    """

    weights: np.ndarray
    n_pos: np.ndarray
    n_neg: np.ndarray
    population_size: Optional[int] = None

    def __post_init__(self):
        w = _frozen(self.weights, float).ravel()
        pos = _frozen(self.n_pos, np.int64).ravel()
        neg = _frozen(self.n_neg, np.int64).ravel()
        if not (w.size == pos.size == neg.size) or w.size == 0:
            raise ValueError("weights and counts must share one non-zero length")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("bucket weights must be non-negative and sum to 1")
        if np.any(pos < 0) or np.any(neg < 0):
            raise ValueError("label counts must be non-negative")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "n_pos", pos)
        object.__setattr__(self, "n_neg", neg)

    @property
    def K(self) -> int:
        return int(self.weights.size)

    @property
    def n(self) -> np.ndarray:
        return self.n_pos + self.n_neg


def bucketize(population: ScoredPopulation, sample: LabeledSample, config: BucketConfig) -> BucketSummary:
    """Bucket weights from the full population and label counts from the sample."""
    K = config.K
    counts = population.histogram(K)
    M = int(counts.sum())
    idx = bucket_index(sample.scores, K)
    n_pos = np.bincount(idx, weights=sample.labels, minlength=K)
    n_all = np.bincount(idx, minlength=K)
    return BucketSummary(
        weights=counts / M,
        n_pos=np.rint(n_pos).astype(np.int64),
        n_neg=n_all - np.rint(n_pos).astype(np.int64),
        population_size=M,
    )


@dataclass(frozen=True)
class PrevalencePosterior:
    """Posterior over the prevalence produced by one estimator.

    ``samples`` holds draws of the prevalence when the method is sample based.
    ``bucket_samples`` (draws x K) holds per-bucket prevalence draws for GP.
    """

    method: str
    mean: float
    variance: float
    samples: Optional[np.ndarray] = None
    bucket_samples: Optional[np.ndarray] = None
    rhat: Optional[float] = None
    converged: bool = True
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0.0 <= self.mean <= 1.0:
            raise ValueError(f"posterior mean {self.mean} outside [0, 1]")
        if self.variance < 0:
            raise ValueError("posterior variance must be non-negative")
        if self.samples is not None:
            s = _frozen(self.samples, float).ravel()
            if s.size and (s.min() < 0.0 or s.max() > 1.0):
                raise ValueError("prevalence samples must lie in [0, 1]")
            object.__setattr__(self, "samples", s)


@dataclass(frozen=True)
class IntervalEstimate:
    """Point estimate with 95% interval; ``upper`` doubles as the 97.5% upper bound."""

    point: float
    lower: float
    upper: float

    def __post_init__(self):
        if not (0.0 <= self.lower <= self.upper <= 1.0):
            raise ValueError(f"invalid interval [{self.lower}, {self.upper}]")
        if not 0.0 <= self.point <= 1.0:
            raise ValueError(f"point estimate {self.point} outside [0, 1]")

    @property
    def width(self) -> float:
        return self.upper - self.lower

    def as_dict(self) -> dict:
        return {"point": self.point, "lower": self.lower, "upper": self.upper}


def interval_from_moments(mean: float, variance: float) -> IntervalEstimate:
    """Normal-approximation 95% interval, clamped to [0, 1]."""
    if variance < 0:
        raise ValueError("variance must be non-negative")
    half = Z975 * float(np.sqrt(variance))
    mean = float(mean)
    return IntervalEstimate(
        point=min(max(mean, 0.0), 1.0),
        lower=min(max(mean - half, 0.0), 1.0),
        upper=min(max(mean + half, 0.0), 1.0),
    )


def interval_from_samples(samples: Sequence[float]) -> IntervalEstimate:
    """Sample mean with empirical 2.5/97.5 percentiles (linear interpolation)."""
    s = np.asarray(samples, dtype=float).ravel()
    if s.size < 2:
        raise ValueError("need at least two samples")
    if s.min() < 0.0 or s.max() > 1.0:
        raise ValueError("samples must lie in [0, 1]")
    lower, upper = np.percentile(s, [2.5, 97.5], method="linear")
    point = min(max(float(s.mean()), 0.0), 1.0)
    return IntervalEstimate(point=point, lower=float(lower), upper=float(upper))
