"""Why resampling the labeled set is not enough when positives are rare."""

import numpy as np

from bucketprev import BootstrapConfig, LabeledSample, ScoredPopulation, bbb_estimate, bootstrap_estimate, gp_estimate

rng = np.random.default_rng(2)
scores = rng.beta(1, 20, 500_000)
population = ScoredPopulation.from_scores(scores)

# True prevalence 1e-5: a 2000-item sample almost never contains a positive.
truth = 1e-5
sample_scores = rng.choice(scores, 2000, replace=False)
labels = rng.random(2000) < truth
print("positives in sample:", labels.sum())

sample = LabeledSample(sample_scores, labels)
_, boot = bootstrap_estimate(sample, BootstrapConfig(resamples=1000))
print("bootstrap upper bound", boot.upper)  # every resample is all negative

# The Bayesian estimators keep prior mass on non-zero prevalence.
print("BBB upper bound      ", bbb_estimate(population, sample).upper)
print("GP upper bound       ", gp_estimate(population, sample).upper)
