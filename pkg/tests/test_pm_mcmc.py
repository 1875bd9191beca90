import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from roulette_mcmc.errors import ChainAborted, DegenerateSign, EstimatorOverflow
from roulette_mcmc.estimators import SignedValue
from roulette_mcmc.experiments import UniformPrior
from roulette_mcmc.ising import IsingParams, brute_force_logZ, unnorm_loglik
from roulette_mcmc.pm_mcmc import (ChainRecord, autocorrelation, ess, exchange_kernel,
                                   gaussian_rw, init_record, lag_window_sum, pm_kernel,
                                   pm_mh_step, run_chain, sign_corrected_expectation)

FLAT = lambda theta: 0.0


def fixed(log_mag, sign=1):
    return lambda theta, rng: SignedValue(log_mag, sign)


def stay(theta, rng):
    return np.asarray(theta, dtype=float) + 0.1, 0.0


def record(log_mag=0.0, sign=1):
    return ChainRecord((0.0,), log_mag, sign, True)


def exact_3x3(data):
    def estimator(theta, rng):
        p = IsingParams(0.0, float(theta[0]))
        return SignedValue(unnorm_loglik(data, p) - brute_force_logZ(3, p), 1)
    return estimator


def grid_posterior(data, low=0.0, high=1.0, n=20001):
    g = np.linspace(low, high, n)
    lp = np.array([unnorm_loglik(data, IsingParams(0.0, b)) - brute_force_logZ(3, IsingParams(0.0, b))
                   for b in g])
    w = np.exp(lp - lp.max())
    w /= np.trapezoid(w, g)
    m = np.trapezoid(w * g, g)
    return m, math.sqrt(np.trapezoid(w * (g - m) ** 2, g))


# --- single step -------------------------------------------------------------


def test_equal_magnitude_always_accepts():
    rng = np.random.default_rng(0)
    cur = record(1.3)
    for _ in range(200):
        nxt = pm_mh_step(cur, stay, FLAT, fixed(1.3, -1), rng)
        assert nxt.accepted and nxt.sign == -1


def test_half_magnitude_accepts_half_the_time():
    rng = np.random.default_rng(1)
    cur = record(0.0)
    acc = np.array([pm_mh_step(cur, stay, FLAT, fixed(-math.log(2)), rng).accepted
                    for _ in range(100_000)], dtype=float)
    assert abs(acc.mean() - 0.5) < 3 * math.sqrt(0.25 / acc.size)


def test_rejection_propagates_retained_estimate():
    rng = np.random.default_rng(2)
    cur = ChainRecord((0.5,), 3.25, -1, True, 7, 11)
    nxt = pm_mh_step(cur, stay, FLAT, fixed(-50.0), rng)
    assert not nxt.accepted
    assert nxt.log_abs_estimate == cur.log_abs_estimate and nxt.sign == cur.sign
    assert nxt.theta == cur.theta


def test_prior_outside_support_skips_estimate():
    calls = []

    def est(theta, rng):
        calls.append(theta)
        return SignedValue(0.0, 1)

    nxt = pm_mh_step(record(), stay, lambda t: -math.inf, est, np.random.default_rng(0))
    assert not nxt.accepted and calls == []


def test_zero_estimate_is_resampled_once():
    seq = iter([SignedValue.from_real(0.0), SignedValue(5.0, 1)])
    stats = {}
    nxt = pm_mh_step(record(), stay, FLAT, lambda t, r: next(seq), np.random.default_rng(0),
                     stats)
    assert nxt.accepted and stats["zero_resamples"] == 1


def test_auxiliary_density_enters_ratio():
    # magnitudes equal, but the fresh draw's auxiliary density is e^2 times larger
    cur = ChainRecord((0.0,), 0.0, 1, True, log_aux_density=0.0)
    est = lambda t, r: SignedValue(0.0, 1, log_aux_density=2.0)
    rng = np.random.default_rng(3)
    acc = np.mean([pm_mh_step(cur, stay, FLAT, est, rng).accepted for _ in range(40_000)])
    assert abs(acc - math.exp(-2.0)) < 4 * math.sqrt(math.exp(-2) / 40_000)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_sign_does_not_affect_acceptance(seed):
    def est(theta, rng):
        return SignedValue(rng.normal(), 1 if rng.random() < 0.7 else -1)

    def flipped(theta, rng):
        v = est(theta, rng)
        return SignedValue(v.log_magnitude, -v.sign)

    k1, k2 = pm_kernel(est, FLAT), pm_kernel(flipped, FLAT)
    a = run_chain([0.0], 200, 50, k1, np.random.default_rng(seed))
    b = run_chain([0.0], 200, 50, k2, np.random.default_rng(seed))
    assert [r.accepted for r in a.records] == [r.accepted for r in b.records]
    assert [r.theta for r in a.records] == [r.theta for r in b.records]
    assert [r.sign for r in a.records] == [-r.sign for r in b.records]


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_rejections_copy_previous_record(seed):
    est = lambda theta, rng: SignedValue(rng.normal(), 1 if rng.random() < 0.8 else -1)
    res = run_chain([0.0], 100, 10, pm_kernel(est, FLAT), np.random.default_rng(seed))
    for prev, cur in zip(res.records, res.records[1:]):
        if not cur.accepted:
            assert (cur.log_abs_estimate, cur.sign, cur.theta) == (
                prev.log_abs_estimate, prev.sign, prev.theta)


# --- chains -----------------------------------------------------------------


def test_empty_chain():
    res = run_chain([0.2], 0, 0, pm_kernel(fixed(0.0), FLAT), np.random.default_rng(0))
    assert res.records == [] and res.metadata["acceptance_rate"] is None
    assert res.metadata["negative_count"] == 0


def test_chain_argument_checks():
    with pytest.raises(ValueError):
        run_chain([0.0], 10, 10, pm_kernel(fixed(0.0), FLAT), np.random.default_rng(0))


def test_exact_estimator_chain_matches_grid_posterior(data3):
    m, sd = grid_posterior(data3)
    rng = np.random.default_rng(20)
    res = run_chain([0.2], 50_000, 5_000, pm_kernel(exact_3x3(data3), UniformPrior(0.0, 1.0)),
                    rng, scale=0.3)
    th = np.array([r.theta[0] for r in res.records[5_000:]])
    assert abs(th.mean() - m) < 0.005
    assert abs(th.std() - sd) < 0.003
    assert 0.3 <= res.metadata["acceptance_rate"] <= 0.5
    assert res.metadata["negative_count"] == 0


def test_adaptation_hits_target_and_freezes():
    est = lambda theta, rng: SignedValue(-0.5 * float(theta[0]) ** 2, 1)
    res = run_chain([0.0], 6000, 3000, pm_kernel(est, FLAT), np.random.default_rng(4),
                    scale=20.0)
    assert 0.3 <= res.metadata["acceptance_rate"] <= 0.5
    th = np.array([r.theta[0] for r in res.records[3000:]])
    assert abs(th.mean()) < 0.2 and abs(th.std() - 1) < 0.15


def test_overflow_aborts_with_resumable_checkpoint():
    state = {"n": 0}

    def est(theta, rng):
        state["n"] += 1
        if state["n"] == 30:
            raise EstimatorOverflow("boom")
        return SignedValue(-0.5 * float(theta[0]) ** 2, 1)

    kernel = pm_kernel(est, FLAT)
    with pytest.raises(ChainAborted) as err:
        run_chain([0.0], 50, 10, kernel, np.random.default_rng(5))
    assert err.value.iteration == 29
    ckpt = err.value.checkpoint
    assert len(ckpt["records"]) == 29
    res = run_chain([0.0], 50, 10, kernel, np.random.default_rng(99), checkpoint=ckpt)
    assert len(res.records) == 50
    assert res.records[:29] == ckpt["records"]


def test_metadata_counts_and_callback():
    seen = []
    est = lambda theta, rng: SignedValue(0.0, -1, n_draws=3)
    res = run_chain([0.0], 20, 5, pm_kernel(est, FLAT), np.random.default_rng(6), seed=17,
                    on_record=lambda i, r: seen.append(i))
    assert seen == list(range(20))
    md = res.metadata
    assert md["seed"] == 17 and md["negative_count"] == 20
    assert md["total_normalizer_draws"] == 60
    assert md["wall_time"] >= 0


def test_init_record():
    rec = init_record([0.3], fixed(-2.0, -1), np.random.default_rng(0))
    assert rec.theta == (0.3,) and rec.sign == -1 and rec.log_abs_estimate == -2.0


def test_gaussian_rw_symmetric():
    prop, lq = gaussian_rw(0.5)(np.array([1.0, 2.0]), np.random.default_rng(0))
    assert prop.shape == (2,) and lq == 0.0


# --- exchange ----------------------------------------------------------------


def test_exchange_on_gaussian_mean():
    # data ~ N(theta, 1) with flat prior: posterior of the mean is N(mean(y), 1/n)
    y = np.random.default_rng(0).normal(1.5, 1.0, size=20)
    loglik = lambda x, th: -0.5 * float(np.sum((x - th[0]) ** 2))
    sampler = lambda th, r: r.normal(th[0], 1.0, size=y.size)
    res = run_chain([0.0], 20_000, 2_000, exchange_kernel(y, loglik, sampler, FLAT),
                    np.random.default_rng(1), scale=0.3)
    th = np.array([r.theta[0] for r in res.records[2000:]])
    assert abs(th.mean() - y.mean()) < 0.03
    assert abs(th.std() - 1 / math.sqrt(y.size)) < 0.03
    assert all(r.sign == 1 for r in res.records)


# --- diagnostics ---------------------------------------------------------------


def test_sign_corrected_hand_example():
    s = sign_corrected_expectation([1.0, 2.0, 3.0], [1, -1, 1])
    assert s.estimate == pytest.approx(2.0)
    assert s.r_hat == pytest.approx(1 / 3)
    assert s.negative_fraction == pytest.approx(1 / 3)


def test_sign_corrected_all_positive_is_sample_mean():
    x = np.random.default_rng(0).normal(size=500)
    s = sign_corrected_expectation(x, np.ones(500))
    assert s.estimate == pytest.approx(x.mean())
    assert s.r_hat == 1.0 and s.negative_fraction == 0.0
    assert s.variance > 0


def test_sign_corrected_degenerate():
    with pytest.raises(DegenerateSign):
        sign_corrected_expectation([1.0, 2.0], [1, -1])
    with pytest.raises(ValueError):
        sign_corrected_expectation([1.0], [1, 1])


def test_sign_corrected_matches_weighted_ratio_oracle():
    # |pi| sampled i.i.d.; sign -1 with probability 0.05 + 0.05 * [x > 1]
    rng = np.random.default_rng(7)
    n = 200_000
    x = rng.normal(size=n)
    p_neg = 0.05 + 0.05 * (x > 1)
    s = np.where(rng.random(n) < p_neg, -1.0, 1.0)
    out = sign_corrected_expectation(x, s)
    # oracle: E[x (1 - 2 p)] / E[1 - 2 p] by direct Monte Carlo on a fresh sample
    z = np.random.default_rng(8).normal(size=4_000_000)
    wz = 1 - 2 * (0.05 + 0.05 * (z > 1))
    oracle = np.sum(z * wz) / np.sum(wz)
    assert abs(out.estimate - oracle) < 4 * math.sqrt(out.variance)
    assert 0.05 < out.negative_fraction < 0.07


def test_sign_corrected_variance_grows_as_r_shrinks():
    rng = np.random.default_rng(9)
    x = rng.normal(size=20_000)
    a = sign_corrected_expectation(x, np.where(rng.random(x.size) < 0.05, -1, 1))
    b = sign_corrected_expectation(x, np.where(rng.random(x.size) < 0.3, -1, 1))
    assert b.variance > a.variance


def test_ess_iid():
    x = np.random.default_rng(0).normal(size=10_000)
    assert 0.9 * x.size <= ess(x) <= 1.1 * x.size


def test_ess_ar1():
    rng = np.random.default_rng(1)
    n = 100_000
    e = rng.normal(size=n)
    x = np.empty(n)
    x[0] = e[0]
    for i in range(1, n):
        x[i] = 0.5 * x[i - 1] + e[i]
    assert ess(x) / n == pytest.approx(1 / 3, rel=0.1)


def test_ess_edge_cases():
    assert ess(np.ones(50)) == 50
    with pytest.raises(ValueError):
        ess(np.arange(5.0))


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=10, max_size=200))
def test_ess_clamped(values):
    e = ess(values)
    assert 1 <= e <= len(values)


def test_lag_window_sum_ar1():
    rng = np.random.default_rng(2)
    n = 100_000
    e = rng.normal(size=n)
    x = np.empty(n)
    x[0] = e[0]
    for i in range(1, n):
        x[i] = 0.5 * x[i - 1] + e[i]
    assert lag_window_sum(x) == pytest.approx(3.0, rel=0.15)
    assert lag_window_sum(rng.normal(size=n)) == pytest.approx(1.0, abs=0.1)


def test_autocorrelation_lag_zero():
    rho = autocorrelation(np.random.default_rng(0).normal(size=100), max_lag=5)
    assert rho.shape == (6,) and rho[0] == pytest.approx(1.0)
    assert np.all(autocorrelation(np.ones(10), 3) == 1.0)
