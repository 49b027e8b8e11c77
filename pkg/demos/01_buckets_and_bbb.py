"""Bucketing a scored population and the Beta-Binomial upper bound."""

import numpy as np

from bucketprev import BBBConfig, BucketConfig, LabeledSample, ScoredPopulation, bbb_posterior, bbb_prevalence, bucketize
from bucketprev.core import interval_from_moments

rng = np.random.default_rng(0)

# A million scores, heavily piled up near zero, like a classifier run over
# mostly benign content.
rate = 10.0
scores = -np.log1p(rng.random(1_000_000) * np.expm1(-rate)) / rate
population = ScoredPopulation.from_scores(scores)

# The truth: P(violating | score) grows with the score.
f = 0.02 * scores**2
print("true prevalence", f.mean())

# Label 20k items picked uniformly at random.
idx = rng.choice(scores.size, 20_000, replace=False)
sample = LabeledSample(scores[idx], rng.random(idx.size) < f[idx])
print("labeled positives", sample.n_positive)

# Five equal-width buckets.  Weights come from the whole population, the
# counts only from the labeled sample.
summary = bucketize(population, sample, BucketConfig(5))
for k in range(5):
    print(f"bucket {k}: w={summary.weights[k]:.4f} n+={summary.n_pos[k]} n-={summary.n_neg[k]}")

# Each bucket gets Beta(1/K + n+, 1/K + n-); the prevalence is their weighted sum.
post = bbb_posterior(summary, BBBConfig(K=5))
prev = bbb_prevalence(post, summary)
est = interval_from_moments(prev.mean, prev.variance)
print(f"posterior mean {prev.mean:.3e}, 95% interval [{est.lower:.3e}, {est.upper:.3e}]")
print("upper bound covers the truth:", est.upper >= f.mean())

# More buckets resolve the curve better but leave each bucket fewer labels.
for K in (1, 2, 10, 20):
    s = bucketize(population, sample, BucketConfig(K))
    p = bbb_prevalence(bbb_posterior(s, BBBConfig(K=K)), s)
    print(K, "buckets -> upper", interval_from_moments(p.mean, p.variance).upper)
