"""Smooth calibration with the bucketed Gaussian process."""

import numpy as np

from bucketprev import BucketConfig, GPConfig, bucketize, gp_sample
from bucketprev.core import interval_from_samples
from bucketprev.simulate import CalibrationCurve, PopulationSpec, SamplingStrategy, draw_sample, generate_population

# A million exponential scores and a logistic calibration curve that dips at
# the very top, rescaled so the true prevalence is 0.2%.
synth = generate_population(
    PopulationSpec(CalibrationCurve.logistic_drop(), M=1_000_000, rate=10.0, seed=1, target_prevalence=2e-3)
)
print("true prevalence", synth.ground_truth)

# Sample with inclusion probability proportional to exp(3 * score), so the
# rare high scores get labels; each item carries weight 1 / inclusion.
sample = draw_sample(synth, SamplingStrategy(tilt=3.0), 10_000, seed=1)

# 100 narrow buckets: far too few labels per bucket for independent Betas,
# but the GP borrows strength from neighbours through the length-scale rho.
cfg = GPConfig(K=100, rho=0.1, alpha=1.0)
summary = bucketize(synth.population, sample, BucketConfig(cfg.K))
post = gp_sample(summary, cfg)
est = interval_from_samples(post.samples)
print(f"pi: mean {post.mean:.4e}, interval [{est.lower:.4e}, {est.upper:.4e}], R-hat {post.rhat:.3f}")

# Estimated calibration curve against the truth at a few bucket midpoints.
p_med = np.median(post.bucket_samples, axis=0)
for k in (5, 30, 60, 70, 80, 95):
    mid = (k + 0.5) / cfg.K
    print(f"s={mid:.3f} labeled={summary.n[k]:4d} p_hat={p_med[k]:.4f} true={float(synth.curve(mid)):.4f}")
