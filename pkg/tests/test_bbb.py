import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bucketprev.bbb import (
    BBBConfig,
    BetaPosterior,
    bbb_estimate,
    bbb_posterior,
    bbb_prevalence,
    bbb_record,
    bbb_time_partitioned,
    bucketize_days,
    merge_days,
)
from bucketprev.core import BucketConfig, BucketSummary, LabeledSample, ScoredPopulation, bucketize
from bucketprev.io import dumps


def summary(w, pos, neg, M=None):
    return BucketSummary(np.asarray(w, float), pos, neg, M)


def monte_carlo_moments(weights, alpha, beta, n, rng):
    """Independent-Beta oracle: mean/variance of sum_k w_k p_k and their standard errors."""
    draws = np.zeros(n)
    for w, a, b in zip(weights, alpha, beta):
        draws += w * rng.beta(a, b, n)
    m = draws.mean()
    dev2 = (draws - m) ** 2
    return m, dev2.mean(), draws.std() / np.sqrt(n), dev2.std() / np.sqrt(n)


def test_default_prior_splits_pseudo_counts():
    cfg = BBBConfig(K=5)
    assert cfg.a == cfg.b == 0.2
    assert BBBConfig(K=10).a == 0.1
    with pytest.raises(ValueError):
        BBBConfig(K=5, a=0.0)


def test_conjugate_update():
    post = bbb_posterior(summary([0.5, 0.5, 0, 0, 0], [2, 0, 0, 0, 0], [98, 0, 0, 0, 0]), BBBConfig(K=5))
    assert (post.alpha[0], post.beta[0]) == pytest.approx((2.2, 98.2))
    assert (post.alpha[1], post.beta[1]) == (0.2, 0.2)
    assert post.mean[1] == 0.5


def test_large_negative_bucket():
    post = bbb_posterior(summary([1.0] + [0] * 9, [0] * 10, [3000] + [0] * 9), BBBConfig(K=10))
    assert (post.alpha[0], post.beta[0]) == pytest.approx((0.1, 3000.1))
    assert post.mean[0] == pytest.approx(3.333e-5, rel=1e-3)


def test_bucket_count_mismatch():
    with pytest.raises(ValueError):
        bbb_posterior(summary([1.0], [0], [0]), BBBConfig(K=5))


def test_uniform_single_bucket_moments():
    s = summary([1.0], [0], [0])
    prev = bbb_prevalence(bbb_posterior(s, BBBConfig(K=1, a=1, b=1)), s)
    assert prev.mean == 0.5
    assert prev.variance == pytest.approx(1 / 12)


def test_two_bucket_closed_form():
    post = BetaPosterior(alpha=np.array([1.0, 9.0]), beta=np.array([9.0, 1.0]))
    prev = bbb_prevalence(post, summary([0.5, 0.5], [0, 0], [0, 0]))
    assert prev.mean == pytest.approx(0.5)
    # Var[Beta(1, 9)] = 9 / (100 * 11); weights squared = 0.25
    assert prev.variance == pytest.approx(0.004090909090909091, rel=1e-12)


def test_moments_match_monte_carlo_on_synthetic_counts():
    rng = np.random.default_rng(5)
    w = np.array([0.86, 0.11, 0.02, 0.008, 0.002])
    n = np.array([3800, 900, 200, 70, 30])
    pos = rng.binomial(n, [2e-4, 1e-3, 4e-3, 1e-2, 3e-2])
    s = summary(w, pos, n - pos)
    post = bbb_posterior(s, BBBConfig(K=5))
    prev = bbb_prevalence(post, s)
    m, v, se_m, se_v = monte_carlo_moments(w, post.alpha, post.beta, 10**6, rng)
    assert abs(prev.mean - m) < 3 * se_m
    assert abs(prev.variance - v) < 3 * se_v


def test_no_data_falls_back_to_prior():
    pop = ScoredPopulation.from_scores(np.linspace(0, 1, 101))
    # all labeled items share one score, so four buckets stay empty; make the fifth empty too
    sample = LabeledSample([0.5], [0])
    s = bucketize(pop, sample, BucketConfig(5))
    empty = BucketSummary(s.weights, np.zeros(5, int), np.zeros(5, int))
    prev = bbb_prevalence(bbb_posterior(empty, BBBConfig()), empty)
    assert prev.mean == pytest.approx(0.5)
    assert prev.variance > 0.01


def test_estimate_symmetric_single_bucket():
    pop = ScoredPopulation.from_scores([0.2, 0.7])
    sample = LabeledSample([0.5] * 100, [1] * 50 + [0] * 50)
    est = bbb_estimate(pop, sample, BBBConfig(K=1, a=1, b=1))
    assert est.point == pytest.approx(51 / 102)
    assert est.lower < 0.5 < est.upper


def test_estimate_low_prevalence_order_of_magnitude():
    rng = np.random.default_rng(8)
    rate = 10.0
    scores = -np.log1p(rng.random(10**6) * np.expm1(-rate)) / rate
    f = 3e-4 * np.exp(3 * scores) / np.mean(np.exp(3 * scores))
    idx = rng.choice(10**6, 30_000, replace=False)
    labels = rng.random(idx.size) < f[idx]
    est = bbb_estimate(ScoredPopulation.from_scores(scores), LabeledSample(scores[idx], labels), BBBConfig())
    assert 1e-4 < est.upper < 1e-3
    assert 1e-4 < est.width < 1e-3


@settings(max_examples=60, deadline=None)
@given(
    st.lists(st.tuples(st.integers(0, 50), st.integers(0, 500)), min_size=1, max_size=10),
    st.data(),
)
def test_posterior_mean_bounds_and_positive_label_monotonicity(counts, data):
    K = len(counts)
    pos = np.array([c[0] for c in counts])
    neg = np.array([c[1] for c in counts])
    cfg = BBBConfig(K=K)
    raw = np.array(data.draw(st.lists(st.floats(0.01, 1), min_size=K, max_size=K)))
    w = raw / raw.sum()
    s = BucketSummary(w, pos, neg)
    post = bbb_posterior(s, cfg)
    n = pos + neg
    assert np.all(post.mean >= cfg.a / (cfg.a + cfg.b + n) - 1e-15)
    assert np.all(post.mean <= (cfg.a + n) / (cfg.a + cfg.b + n) + 1e-15)
    assert np.all(post.alpha >= cfg.a) and np.all(post.beta >= cfg.b)

    k = data.draw(st.integers(0, K - 1))
    more = pos.copy()
    more[k] += 1
    s2 = BucketSummary(w, more, neg)
    assert bbb_prevalence(bbb_posterior(s2, cfg), s2).mean > bbb_prevalence(post, s).mean


def test_variance_shrinks_with_data():
    w = [0.7, 0.3]
    small = summary(w, [1, 10], [999, 990])
    big = summary(w, [1000, 10_000], [999_000, 990_000])
    cfg = BBBConfig(K=2)
    v_small = bbb_prevalence(bbb_posterior(small, cfg), small).variance
    v_big = bbb_prevalence(bbb_posterior(big, cfg), big).variance
    assert v_big < v_small / 100


def test_bucket_order_permutation_is_bit_identical():
    w = np.array([0.5, 0.3, 0.2])
    pos, neg = np.array([1, 4, 9]), np.array([100, 50, 20])
    cfg = BBBConfig(K=3)
    a = bbb_prevalence(bbb_posterior(summary(w, pos, neg), cfg), summary(w, pos, neg))
    # reversing bucket order changes summation order, so compare at rounding level
    r = slice(None, None, -1)
    b = bbb_prevalence(bbb_posterior(summary(w[r], pos[r], neg[r]), cfg), summary(w[r], pos[r], neg[r]))
    assert a.mean == pytest.approx(b.mean, rel=1e-15)
    assert a.variance == pytest.approx(b.variance, rel=1e-14)


def test_label_order_is_bit_identical():
    rng = np.random.default_rng(2)
    pop = ScoredPopulation.from_scores(rng.random(1000))
    scores, labels = rng.random(300), rng.random(300) < 0.1
    perm = rng.permutation(300)
    a = bbb_estimate(pop, LabeledSample(scores, labels))
    b = bbb_estimate(pop, LabeledSample(scores[perm], labels[perm]))
    assert a == b


def test_record_round_trips_through_json():
    s = summary([0.6, 0.4], [1, 2], [30, 20])
    rec = json.loads(dumps(bbb_record(s, BBBConfig(K=2))))
    assert [b["alpha"] for b in rec["buckets"]] == [1.5, 2.5]
    assert [b["w"] for b in rec["buckets"]] == [0.6, 0.4]
    assert rec["lower"] <= rec["mean"] <= rec["upper"]


# -- day-partitioned (coarse vs fine) bucketing ---------------------------------

# two days, two buckets, with the composition shifting between days
DAY1 = dict(S=[700, 300], pos=[2, 6], neg=[48, 14])
DAY2 = dict(S=[500, 500], pos=[10, 1], neg=[30, 39])


def _day_summaries():
    out = []
    for d in (DAY1, DAY2):
        S = np.array(d["S"], float)
        out.append(BucketSummary(S / S.sum(), d["pos"], d["neg"], int(S.sum())))
    return out


def _beta_moments(a, b):
    return a / (a + b), a * b / ((a + b) ** 2 * (a + b + 1))


def test_fine_bucketing_matches_direct_beta_moments():
    # oracle written out cell by cell: a_ji = n_ji^+ + 1/4, b_ji = n_ji^- + 1/4, w_ji = S_ji / S
    S = 2000.0
    mean = var = 0.0
    for d in (DAY1, DAY2):
        for j in range(2):
            m, v = _beta_moments(d["pos"][j] + 0.25, d["neg"][j] + 0.25)
            w = d["S"][j] / S
            mean += m * w
            var += v * w * w
    fine = bbb_time_partitioned(_day_summaries(), BBBConfig(K=2))
    assert abs(fine.mean - mean) < 1e-12
    assert abs(fine.variance - var) < 1e-12


def test_coarse_bucketing_matches_direct_beta_moments():
    # coarse: a_j = n_j1^+ + n_j2^+ + 1/2, w_j = (S_j1 + S_j2) / S
    mean = var = 0.0
    for j in range(2):
        m, v = _beta_moments(DAY1["pos"][j] + DAY2["pos"][j] + 0.5, DAY1["neg"][j] + DAY2["neg"][j] + 0.5)
        w = (DAY1["S"][j] + DAY2["S"][j]) / 2000.0
        mean += m * w
        var += v * w * w
    merged = merge_days(_day_summaries())
    coarse = bbb_prevalence(bbb_posterior(merged, BBBConfig(K=2)), merged)
    assert abs(coarse.mean - mean) < 1e-12
    assert abs(coarse.variance - var) < 1e-12
    fine = bbb_time_partitioned(_day_summaries(), BBBConfig(K=2))
    assert abs(fine.mean - coarse.mean) > 1e-4


def test_single_day_collapses_to_pooled():
    s = _day_summaries()[0]
    cfg = BBBConfig(K=2)
    fine = bbb_time_partitioned([s], cfg)
    pooled = bbb_prevalence(bbb_posterior(s, cfg), s)
    assert fine.mean == pooled.mean
    assert fine.variance == pooled.variance


def test_homogeneous_days_give_identical_means():
    day = BucketSummary([0.6, 0.4], [3, 8], [97, 92], 1000)
    cfg = BBBConfig(K=2)
    fine = bbb_time_partitioned([day, day], cfg)
    merged = merge_days([day, day])
    coarse = bbb_prevalence(bbb_posterior(merged, cfg), merged)
    assert fine.mean == pytest.approx(coarse.mean, abs=1e-15)


def test_bucketize_days_splits_by_day_column():
    pops = [ScoredPopulation.from_scores([0.1, 0.2, 0.8]), ScoredPopulation.from_scores([0.9, 0.6])]
    sample = LabeledSample([0.1, 0.9, 0.7], [0, 1, 1], days=[0, 1, 1])
    days = bucketize_days(pops, sample, BucketConfig(2))
    np.testing.assert_array_equal(days[0].n_neg, [1, 0])
    np.testing.assert_array_equal(days[1].n_pos, [0, 2])
    assert [d.population_size for d in days] == [3, 2]
    np.testing.assert_allclose(merge_days(days).weights, [0.4, 0.6])


def test_time_partitioned_rejects_empty():
    with pytest.raises(ValueError):
        bbb_time_partitioned([], BBBConfig())
    with pytest.raises(ValueError):
        bbb_time_partitioned([BucketSummary([1.0], [0], [1])], BBBConfig(K=1))
