"""Bucketed Beta-Binomial prevalence estimator.

Each bucket's calibration value p_k gets an independent Beta(a, b) prior and a
Binomial likelihood, so its posterior is Beta(a + n_k^+, b + n_k^-).  The
prevalence is treated as the weighted sum of these independent Betas, giving
closed-form mean and variance and a normal-approximation upper bound.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import (
    BucketConfig,
    BucketSummary,
    IntervalEstimate,
    LabeledSample,
    PrevalencePosterior,
    ScoredPopulation,
    bucketize,
    interval_from_moments,
)


@dataclass(frozen=True)
class BBBConfig:
    """Bucket count and Beta prior; ``a`` and ``b`` default to 1/K.

    Splitting one Beta(1, 1) across the K buckets keeps the total pseudo-count
    at one positive and one negative observation.  K between 5 and 10 is the
    recommended range.
    """

    K: int = 5
    a: Optional[float] = None
    b: Optional[float] = None

    def __post_init__(self):
        BucketConfig(self.K)
        if self.a is None:
            object.__setattr__(self, "a", 1.0 / self.K)
        if self.b is None:
            object.__setattr__(self, "b", 1.0 / self.K)
        if not (self.a > 0 and self.b > 0):
            raise ValueError("Beta prior parameters a and b must be positive")


@dataclass(frozen=True)
class BetaPosterior:
    alpha: np.ndarray
    beta: np.ndarray

    @property
    def K(self) -> int:
        return int(self.alpha.size)

    @property
    def mean(self) -> np.ndarray:
        return self.alpha / (self.alpha + self.beta)

    @property
    def variance(self) -> np.ndarray:
        s = self.alpha + self.beta
        return self.alpha * self.beta / (s * s * (s + 1.0))


def bbb_posterior(summary: BucketSummary, config: BBBConfig) -> BetaPosterior:
    if summary.K != config.K:
        raise ValueError(f"summary has {summary.K} buckets, config expects {config.K}")
    return BetaPosterior(
        alpha=config.a + summary.n_pos.astype(float),
        beta=config.b + summary.n_neg.astype(float),
    )


def _weighted_sum_moments(weights, posterior: BetaPosterior) -> tuple[float, float]:
    mean = float(np.dot(weights, posterior.mean))
    var = float(np.dot(weights * weights, posterior.variance))
    return min(max(mean, 0.0), 1.0), var


def bbb_prevalence(posterior: BetaPosterior, summary: BucketSummary) -> PrevalencePosterior:
    """Mean and variance of sum_k w_k p_k with independent Beta p_k."""
    if posterior.K != summary.K:
        raise ValueError("posterior and summary differ in bucket count")
    mean, var = _weighted_sum_moments(summary.weights, posterior)
    return PrevalencePosterior(method="bbb", mean=mean, variance=var)


def bbb_estimate(
    population: ScoredPopulation, sample: LabeledSample, config: BBBConfig = BBBConfig()
) -> IntervalEstimate:
    summary = bucketize(population, sample, BucketConfig(config.K))
    post = bbb_prevalence(bbb_posterior(summary, config), summary)
    return interval_from_moments(post.mean, post.variance)


def bbb_record(summary: BucketSummary, config: BBBConfig) -> dict:
    """JSON-ready dump: per-bucket (alpha, beta, w) plus the interval."""
    posterior = bbb_posterior(summary, config)
    prev = bbb_prevalence(posterior, summary)
    interval = interval_from_moments(prev.mean, prev.variance)
    return {
        "method": "bbb",
        "K": config.K,
        "a": config.a,
        "b": config.b,
        "buckets": [
            {"k": k, "alpha": float(al), "beta": float(be), "w": float(w)}
            for k, (al, be, w) in enumerate(zip(posterior.alpha, posterior.beta, summary.weights))
        ],
        "mean": prev.mean,
        "variance": prev.variance,
        **interval.as_dict(),
    }


# -- time-partitioned (per-day) bucketing ------------------------------------


def bucketize_days(
    populations: Sequence[ScoredPopulation], sample: LabeledSample, config: BucketConfig
) -> list[BucketSummary]:
    """One summary per day; ``populations[d]`` pairs with sample entries of day d."""
    if sample.days is None:
        raise ValueError("labeled sample carries no day column")
    if sample.days.max() >= len(populations):
        raise ValueError("sample refers to a day without a population")
    out = []
    for d, pop in enumerate(populations):
        mask = sample.days == d
        if mask.any():
            out.append(bucketize(pop, sample.select(mask), config))
        else:
            counts = pop.histogram(config.K)
            zeros = np.zeros(config.K, dtype=np.int64)
            out.append(BucketSummary(counts / counts.sum(), zeros, zeros, int(counts.sum())))
    return out


def _day_sizes(day_summaries: Sequence[BucketSummary]) -> np.ndarray:
    if not day_summaries:
        raise ValueError("no day summaries given")
    sizes = [s.population_size for s in day_summaries]
    if any(m is None or m < 1 for m in sizes):
        raise ValueError("every day summary needs a positive population_size")
    K = {s.K for s in day_summaries}
    if len(K) != 1:
        raise ValueError("day summaries differ in bucket count")
    return np.array(sizes, dtype=float)


def merge_days(day_summaries: Sequence[BucketSummary]) -> BucketSummary:
    """Coarse bucketing: pool all days' counts, weights w_j = sum_i S_ji / S."""
    sizes = _day_sizes(day_summaries)
    cell_counts = np.array([s.weights * m for s, m in zip(day_summaries, sizes)])
    total = sizes.sum()
    return BucketSummary(
        weights=cell_counts.sum(axis=0) / total,
        n_pos=np.sum([s.n_pos for s in day_summaries], axis=0),
        n_neg=np.sum([s.n_neg for s in day_summaries], axis=0),
        population_size=int(round(total)),
    )


def bbb_time_partitioned(day_summaries: Sequence[BucketSummary], config: BBBConfig) -> PrevalencePosterior:
    """Fine bucketing: one Beta per (bucket, day) cell.

    The per-bucket prior ``config.a``/``config.b`` is split evenly over the D
    days, so each cell gets a/D and b/D (1/(K D) with the default prior) and
    the total pseudo-count matches the pooled model.  Cell weights are
    w_ji = S_ji / S.
    """
    sizes = _day_sizes(day_summaries)
    D = len(day_summaries)
    if day_summaries[0].K != config.K:
        raise ValueError(f"summaries have {day_summaries[0].K} buckets, config expects {config.K}")
    total = sizes.sum()
    mean = var = 0.0
    for summary, m in zip(day_summaries, sizes):
        post = BetaPosterior(
            alpha=config.a / D + summary.n_pos.astype(float),
            beta=config.b / D + summary.n_neg.astype(float),
        )
        w = summary.weights * (m / total)
        mean += float(np.dot(w, post.mean))
        var += float(np.dot(w * w, post.variance))
    return PrevalencePosterior(
        method="bbb", mean=min(max(mean, 0.0), 1.0), variance=var, extra={"days": D}
    )
