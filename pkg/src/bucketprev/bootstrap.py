"""Percentile bootstrap baseline over the labeled sample.

Each resample draws N entries with replacement and computes the Hajek
(weight-normalised) prevalence sum(w y) / sum(w).  With no positive labels
every resample is 0 and so is the upper bound, which is the failure mode the
Bayesian estimators are meant to avoid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import DEFAULT_SEED, IntervalEstimate, LabeledSample, PrevalencePosterior, interval_from_samples

# bounds memory of one block of resample indices
_BLOCK_ITEMS = 4_000_000


@dataclass(frozen=True)
class BootstrapConfig:
    resamples: int = 1000
    seed: int = DEFAULT_SEED

    def __post_init__(self):
        if self.resamples < 2:
            raise ValueError("need at least two resamples")


def hajek_prevalence(labels, weights) -> float:
    weights = np.asarray(weights, dtype=float)
    return float(np.dot(weights, labels) / weights.sum())


def bootstrap_resamples(sample: LabeledSample, config: BootstrapConfig) -> np.ndarray:
    """Prevalence of each resample, in draw order."""
    rng = np.random.default_rng(config.seed)
    N = len(sample)
    w = sample.weights
    wy = w * sample.labels
    unit = bool(np.all(w == w[0]))
    block = max(1, _BLOCK_ITEMS // N)
    out = np.empty(config.resamples)
    for start in range(0, config.resamples, block):
        stop = min(start + block, config.resamples)
        idx = rng.integers(0, N, size=(stop - start, N))
        num = wy[idx].sum(axis=1)
        out[start:stop] = num / (N * w[0]) if unit else num / w[idx].sum(axis=1)
    return np.clip(out, 0.0, 1.0)


def bootstrap_estimate(
    sample: LabeledSample, config: BootstrapConfig = BootstrapConfig()
) -> tuple[PrevalencePosterior, IntervalEstimate]:
    draws = bootstrap_resamples(sample, config)
    posterior = PrevalencePosterior(
        method="bootstrap",
        mean=float(draws.mean()),
        variance=float(draws.var(ddof=1)),
        samples=draws,
    )
    return posterior, interval_from_samples(draws)
