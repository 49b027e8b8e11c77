"""Bucketed Gaussian-process prevalence estimator.

Model, for buckets k = 1..K::

    mu ~ Normal(0, 1)
    (q_1..q_K) ~ Normal(mu * 1, Sigma),  Sigma_ij = alpha^2 exp(-((i - j)/K)^2 / (2 rho^2))
    p_k = Phi(q_k)
    n_k^+ ~ Binomial(n_k, p_k)

and the prevalence is pi = sum_k w_k p_k.  Posterior draws come from elliptical
slice sampling on the joint Gaussian vector (mu, q - mu), which needs no step
size and keeps the strongly coupled mean and field moving together.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from numba import njit
from scipy.linalg import solve_triangular
from scipy.special import erfc, erfcx
from scipy.stats import kstest

from .core import (
    DEFAULT_SEED,
    BucketConfig,
    BucketSummary,
    IntervalEstimate,
    LabeledSample,
    PrevalencePosterior,
    ScoredPopulation,
    bucketize,
    interval_from_samples,
)

_SQRT2 = math.sqrt(2.0)
_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)
_TWO_PI = 2.0 * math.pi
RHAT_THRESHOLD = 1.05


class CoarseGridWarning(UserWarning):
    """Bucket width is not small relative to the length-scale."""


@dataclass(frozen=True)
class GPConfig:
    K: int = 100
    rho: float = 0.1
    alpha: float = 1.0
    jitter: Optional[float] = None
    chains: int = 4
    warmup_iters: int = 1000
    kept_iters: int = 1000
    seed: int = DEFAULT_SEED

    def __post_init__(self):
        BucketConfig(self.K)
        if not (self.rho > 0 and self.alpha > 0):
            raise ValueError("rho and alpha must be positive")
        if self.jitter is None:
            object.__setattr__(self, "jitter", 1e-9 * self.alpha**2)
        if self.jitter <= 0:
            raise ValueError("jitter must be positive")
        if self.chains < 1 or self.warmup_iters < 0 or self.kept_iters < 2:
            raise ValueError("need chains >= 1, warmup_iters >= 0 and kept_iters >= 2")
        if 1.0 / self.K > self.rho / 2:
            warnings.warn(
                f"bucket width 1/{self.K} is large against rho={self.rho}", CoarseGridWarning, stacklevel=3
            )


@dataclass(frozen=True)
class LatentState:
    mu: float
    q: np.ndarray

    @property
    def p(self) -> np.ndarray:
        return probit(self.q)


def bucket_covariance(config: GPConfig) -> np.ndarray:
    i = np.arange(config.K, dtype=float)
    d = ((i[:, None] - i[None, :]) / config.K) ** 2
    cov = config.alpha**2 * np.exp(-d / (2.0 * config.rho**2))
    cov[np.diag_indices_from(cov)] += config.jitter
    return cov


def probit(q):
    """Standard normal CDF via the complementary error function."""
    return 0.5 * erfc(-np.asarray(q, dtype=float) / _SQRT2)


def log_probit(q):
    """log Phi(q), accurate in both tails.

    For q < 0 the scaled erfcx keeps the value finite far into the tail;
    for q >= 0 log1p avoids cancellation near zero.
    """
    q = np.asarray(q, dtype=float)
    neg = np.minimum(q, 0.0)
    pos = np.maximum(q, 0.0)
    left = np.log(0.5 * erfcx(-neg / _SQRT2)) - 0.5 * neg * neg
    right = np.log1p(-0.5 * erfc(pos / _SQRT2))
    return np.where(q < 0.0, left, right)


def _log_normal_pdf(q):
    return -0.5 * q * q - _LOG_SQRT_2PI


def _binomial_loglik(q, n_pos, n_neg):
    """Sum over buckets of n+ log Phi(q) + n- log Phi(-q); q may be (..., K)."""
    ll = np.sum(n_pos * log_probit(q) + n_neg * log_probit(-q), axis=-1)
    return np.where(np.isfinite(ll), ll, -np.inf)


def gp_log_posterior(
    state: LatentState, summary: BucketSummary, config: GPConfig, chol: Optional[np.ndarray] = None
) -> float:
    """Unnormalised log posterior density of (mu, q)."""
    if chol is None:
        chol = np.linalg.cholesky(bucket_covariance(config))
    q = np.asarray(state.q, dtype=float)
    r = solve_triangular(chol, q - state.mu, lower=True)
    log_prior = (
        _log_normal_pdf(state.mu)
        - 0.5 * float(r @ r)
        - float(np.log(np.diag(chol)).sum())
        - q.size * _LOG_SQRT_2PI
    )
    return float(log_prior + _binomial_loglik(q, summary.n_pos, summary.n_neg))


def gp_log_posterior_grad(
    state: LatentState, summary: BucketSummary, config: GPConfig, chol: Optional[np.ndarray] = None
) -> tuple[float, np.ndarray]:
    """Gradient of :func:`gp_log_posterior` with respect to (mu, q)."""
    if chol is None:
        chol = np.linalg.cholesky(bucket_covariance(config))
    q = np.asarray(state.q, dtype=float)
    prec_resid = solve_triangular(chol.T, solve_triangular(chol, q - state.mu, lower=True), lower=False)
    log_pdf = _log_normal_pdf(q)
    # phi/Phi ratios in log space stay finite in the tails
    up = np.exp(log_pdf - log_probit(q))
    down = np.exp(log_pdf - log_probit(-q))
    d_q = -prec_resid + summary.n_pos * up - summary.n_neg * down
    d_mu = -state.mu + float(prec_resid.sum())
    return d_mu, d_q


def split_rhat(chains) -> float:
    """Split potential scale reduction factor for draws shaped (chains, iterations)."""
    x = np.asarray(chains, dtype=float)
    n = x.shape[1] // 2
    if n < 2:
        return float("nan")
    halves = np.concatenate([x[:, :n], x[:, -n:]], axis=0)
    within = halves.var(axis=1, ddof=1).mean()
    between = n * halves.mean(axis=1).var(ddof=1)
    if within <= 0:
        return 1.0 if between <= 0 else float("inf")
    var_plus = (n - 1) / n * within + between / n
    return float(np.sqrt(var_plus / within))


def chain_rngs(seed: int, chains: int) -> list[np.random.Generator]:
    """One independent generator per chain, keyed by (seed, chain index)."""
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(chains)]


@njit(cache=True, nogil=True)
def _log_phi_scalar(q):
    """Scalar log Phi(q); asymptotic Mills-ratio series below q = -20."""
    if q >= 0.0:
        return math.log1p(-0.5 * math.erfc(q / _SQRT2))
    if q > -20.0:
        return math.log(0.5 * math.erfc(-q / _SQRT2))
    inv_q2 = 1.0 / (q * q)
    term = 1.0
    series = 1.0
    for k in range(1, 10):
        term *= -(2 * k - 1) * inv_q2
        series += term
    return -0.5 * q * q - _LOG_SQRT_2PI - math.log(-q) + math.log(series)


@njit(cache=True, nogil=True)
def _state_loglik(x, cols, n_pos, n_neg):
    total = 0.0
    for j in range(cols.size):
        q = x[0] + x[cols[j]]
        if n_pos[j] > 0:
            total += n_pos[j] * _log_phi_scalar(q)
        if n_neg[j] > 0:
            total += n_neg[j] * _log_phi_scalar(-q)
    return total


@njit(cache=True, nogil=True)
def _ess_chain(chol, cols, n_pos, n_neg, rng, n_warmup, out):
    """One elliptical slice chain from the origin; kept states are written to ``out``.

    State index 0 is mu, indices 1..K the centred field q - mu; the prior on
    the state is Normal(0, diag(1, Sigma)).
    """
    K = chol.shape[0]
    n_kept = out.shape[0]
    x = np.zeros(K + 1)
    nu = np.empty(K + 1)
    prop = np.empty(K + 1)
    ll = _state_loglik(x, cols, n_pos, n_neg)
    for it in range(n_warmup + n_kept):
        z = rng.standard_normal(K + 1)
        nu[0] = z[0]
        for i in range(K):
            acc = 0.0
            for j in range(i + 1):
                acc += chol[i, j] * z[1 + j]
            nu[1 + i] = acc
        log_y = ll + math.log1p(-rng.random())
        theta = rng.uniform(0.0, _TWO_PI)
        lo = theta - _TWO_PI
        hi = theta
        while True:
            c = math.cos(theta)
            s = math.sin(theta)
            for i in range(K + 1):
                prop[i] = x[i] * c + nu[i] * s
            llp = _state_loglik(prop, cols, n_pos, n_neg)
            # NaN compares False and is rejected like -inf
            if llp > log_y:
                x[:] = prop
                ll = llp
                break
            if theta < 0.0:
                lo = theta
            else:
                hi = theta
            theta = rng.uniform(lo, hi)
        if it >= n_warmup:
            out[it - n_warmup, :] = x


def _run_chains(chol, summary, rngs, n_warmup, n_kept, threads=1):
    """Kept states shaped (chains, kept, K + 1); independent of ``threads``."""
    active = np.flatnonzero(summary.n)
    cols = (1 + active).astype(np.int64)
    n_pos = summary.n_pos[active].astype(float)
    n_neg = summary.n_neg[active].astype(float)
    out = np.empty((len(rngs), n_kept, chol.shape[0] + 1))

    def run(c):
        _ess_chain(chol, cols, n_pos, n_neg, rngs[c], n_warmup, out[c])

    if threads > 1 and len(rngs) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(run, range(len(rngs))))
    else:
        for c in range(len(rngs)):
            run(c)
    return out


def gp_sample(summary: BucketSummary, config: GPConfig = GPConfig(), threads: int = 1) -> PrevalencePosterior:
    """Posterior prevalence draws pooled over ``config.chains`` chains.

    Chains may run on ``threads`` threads; the draws do not depend on it.
    Non-convergence (split R-hat of pi above 1.05) is flagged through
    ``converged=False`` rather than raised.
    """
    if summary.K != config.K:
        raise ValueError(f"summary has {summary.K} buckets, config expects {config.K}")
    chol = np.linalg.cholesky(bucket_covariance(config))
    kept = _run_chains(
        chol, summary, chain_rngs(config.seed, config.chains), config.warmup_iters, config.kept_iters, threads
    )
    mu = kept[:, :, 0]
    p = probit(mu[:, :, None] + kept[:, :, 1:])
    pi = np.clip(p @ summary.weights, 0.0, 1.0)
    rhat = split_rhat(pi)
    samples = pi.ravel()
    return PrevalencePosterior(
        method="gp",
        mean=float(samples.mean()),
        variance=float(samples.var(ddof=1)),
        samples=samples,
        bucket_samples=p.reshape(-1, config.K),
        rhat=rhat,
        converged=bool(rhat <= RHAT_THRESHOLD),
        extra={"rhat_mu": split_rhat(mu)},
    )


def gp_estimate(
    population: ScoredPopulation, sample: LabeledSample, config: GPConfig = GPConfig(), threads: int = 1
) -> IntervalEstimate:
    summary = bucketize(population, sample, BucketConfig(config.K))
    return interval_from_samples(gp_sample(summary, config, threads).samples)


def gp_record(posterior: PrevalencePosterior, summary: BucketSummary, config: GPConfig) -> dict:
    """JSON-ready dump with per-bucket calibration quantiles (2.5/50/97.5)."""
    interval = interval_from_samples(posterior.samples)
    qs = np.percentile(posterior.bucket_samples, [2.5, 50.0, 97.5], axis=0)
    edges = BucketConfig(config.K).edges
    return {
        "method": "gp",
        "K": config.K,
        "rho": config.rho,
        "alpha": config.alpha,
        "chains": config.chains,
        "warmup_iters": config.warmup_iters,
        "kept_iters": config.kept_iters,
        "seed": config.seed,
        "buckets": [
            {
                "k": k,
                "lo_edge": float(edges[k]),
                "hi_edge": float(edges[k + 1]),
                "w": float(summary.weights[k]),
                "p2.5": float(qs[0, k]),
                "p50": float(qs[1, k]),
                "p97.5": float(qs[2, k]),
            }
            for k in range(config.K)
        ],
        "mean": posterior.mean,
        "variance": posterior.variance,
        "rhat": posterior.rhat,
        "converged": posterior.converged,
        **interval.as_dict(),
    }


# -- prior diagnostics --------------------------------------------------------


def gp_prior_samples(weights, config: GPConfig, n: int, rng: np.random.Generator) -> np.ndarray:
    """Exact independent draws of pi from the prior (no data)."""
    weights = np.asarray(weights, dtype=float)
    chol = np.linalg.cholesky(bucket_covariance(config))
    mu = rng.standard_normal((n, 1))
    q = mu + rng.standard_normal((n, config.K)) @ chol.T
    return np.clip(probit(q) @ weights, 0.0, 1.0)


def prior_check(
    weights,
    alphas: Sequence[float] = (0.25, 0.5, 1.0, 2.0, 4.0),
    config: GPConfig = GPConfig(),
    n_samples: int = 4000,
    seed: int = DEFAULT_SEED,
) -> dict:
    """Kolmogorov-Smirnov distance of the prior prevalence to Uniform[0, 1] per alpha.

    Every alpha reuses the same random numbers so differences reflect alpha alone.
    """
    rows = []
    for a in alphas:
        cfg = GPConfig(K=config.K, rho=config.rho, alpha=float(a), seed=config.seed)
        pi = gp_prior_samples(weights, cfg, n_samples, np.random.default_rng(seed))
        ks = kstest(pi, "uniform")
        rows.append(
            {
                "alpha": float(a),
                "ks": float(ks.statistic),
                "p_value": float(ks.pvalue),
                "mean": float(pi.mean()),
                "p2.5": float(np.percentile(pi, 2.5)),
                "p97.5": float(np.percentile(pi, 97.5)),
            }
        )
    best = min(rows, key=lambda r: r["ks"])
    return {
        "K": config.K,
        "rho": config.rho,
        "n_samples": n_samples,
        "seed": seed,
        "results": rows,
        "best_alpha": best["alpha"],
    }
