"""What prevalence does the GP believe before seeing any labels?"""

import numpy as np

from bucketprev.gp import GPConfig, gp_prior_samples, prior_check
from bucketprev.simulate import exponential_bucket_weights

w = exponential_bucket_weights(10.0, 100)

# With mu ~ N(0, 1), Phi(mu) alone is exactly uniform.  The field on top
# spreads bucket probabilities around that and pulls the weighted sum
# towards the middle, so the distance to uniform grows with alpha.
result = prior_check(w, alphas=(0.25, 0.5, 1.0, 2.0, 4.0), n_samples=4000)
for r in result["results"]:
    print(f"alpha={r['alpha']:<5} KS={r['ks']:.3f} 95% range [{r['p2.5']:.3f}, {r['p97.5']:.3f}]")
print("closest to uniform: alpha =", result["best_alpha"])

# A histogram of prior prevalence draws at the default alpha = 1.
pi = gp_prior_samples(w, GPConfig(), 20_000, np.random.default_rng(0))
counts, _ = np.histogram(pi, bins=10, range=(0, 1))
for i, c in enumerate(counts):
    print(f"[{i / 10:.1f}, {(i + 1) / 10:.1f}) " + "#" * (c // 100))
