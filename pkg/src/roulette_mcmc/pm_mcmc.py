"""
Signed pseudo-marginal Metropolis-Hastings and chain diagnostics.

The chain targets the absolute value of the (possibly negative) likelihood
estimate times the prior. Signs are recorded alongside each retained
estimate and only enter through :func:`sign_corrected_expectation`.

Estimators are callables ``estimator(theta, rng) -> SignedValue``. When an
estimator also refreshes an auxiliary variable drawn from a proposal that
depends on ``theta`` (the exponential series does), the log density of that
draw is carried in ``SignedValue.log_aux_density`` and divided out of the
acceptance ratio.
"""

import logging
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ChainAborted, DegenerateSign, EstimatorOverflow

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ChainRecord:
    """State of the chain after one iteration.

    ``log_abs_estimate`` and ``sign`` always describe the retained
    estimate; on rejection they are copied from the previous record.
    """

    theta: tuple
    log_abs_estimate: float
    sign: int
    accepted: bool = False
    n_terms: int = 0
    n_normalizer_draws: int = 0
    aux_nu: float = None
    log_aux_density: float = 0.0
    capped: bool = field(default=False, compare=False)

    @classmethod
    def from_estimate(cls, theta, est, accepted):
        return cls(tuple(float(t) for t in np.ravel(theta)), float(est.log_magnitude),
                   int(est.sign), bool(accepted), int(est.n_terms), int(est.n_draws),
                   est.aux, float(est.log_aux_density), bool(est.capped))


def gaussian_rw(scale):
    """Symmetric Gaussian random-walk proposal with per-coordinate ``scale``."""
    scale = np.asarray(scale, dtype=float)

    def propose(theta, rng):
        theta = np.asarray(theta, dtype=float)
        return theta + scale * rng.standard_normal(theta.shape), 0.0
    return propose


def _estimate(estimator, theta, rng):
    est = estimator(np.asarray(theta, dtype=float), rng)
    resampled = False
    if est.sign == 0:
        log.warning("zero likelihood estimate at theta=%s; resampling once", theta)
        est = estimator(np.asarray(theta, dtype=float), rng)
        resampled = True
    return est, resampled


def init_record(theta, estimator, rng):
    """First record of a chain, estimating the likelihood at ``theta``."""
    est, _ = _estimate(estimator, theta, rng)
    return ChainRecord.from_estimate(theta, est, True)


def pm_mh_step(current, propose, log_prior, estimator, rng, stats=None):
    """One pseudo-marginal Metropolis-Hastings update on the absolute measure.

    Parameters
    ----------
    current : ChainRecord
    propose : callable
        ``propose(theta, rng) -> (theta_new, log q(theta|theta_new) - log q(theta_new|theta))``.
    log_prior : callable
    estimator : callable
        ``estimator(theta, rng) -> SignedValue``.
    rng : numpy.random.Generator
    stats : dict, optional
        Incremented in place: ``zero_resamples``, ``estimates``.

    Returns
    -------
    ChainRecord
        Holding the proposal and its fresh estimate if accepted, otherwise a
        copy of ``current`` flagged as rejected.
    """
    prop, log_q_ratio = propose(np.asarray(current.theta, dtype=float), rng)
    lp_new = log_prior(prop)
    if not np.isfinite(lp_new):
        return replace(current, accepted=False)
    est, resampled = _estimate(estimator, prop, rng)
    if stats is not None:
        stats["estimates"] = stats.get("estimates", 0) + 1
        stats["zero_resamples"] = stats.get("zero_resamples", 0) + int(resampled)
    if est.sign == 0:
        return replace(current, accepted=False)
    log_alpha = ((est.log_magnitude - est.log_aux_density)
                 - (current.log_abs_estimate - current.log_aux_density)
                 + lp_new - log_prior(np.asarray(current.theta)) + log_q_ratio)
    if log_alpha >= 0 or rng.random() < math.exp(log_alpha):
        return ChainRecord.from_estimate(prop, est, True)
    return replace(current, accepted=False)


def pm_kernel(estimator, log_prior):
    """Adapt :func:`pm_mh_step` to the ``kernel(record, scale, rng, stats)`` form."""
    def kernel(current, scale, rng, stats):
        return pm_mh_step(current, gaussian_rw(scale), log_prior, estimator, rng, stats)

    def start(theta, rng):
        return init_record(theta, estimator, rng)
    kernel.start = start
    return kernel


@dataclass
class ChainResult:
    records: list
    metadata: dict


def _adapt(log_scale, accepted, i, target):
    return log_scale + (float(accepted) - target) / (1.0 + i) ** 0.6


def run_chain(init, n_iters, burn_in, kernel, rng, scale=0.1, target_accept=0.4,
              adapt=True, seed=None, checkpoint=None, on_record=None):
    """Run ``n_iters`` iterations of ``kernel``.

    Parameters
    ----------
    init : array_like
        Starting parameter vector.
    kernel : callable
        ``kernel(record, scale, rng, stats) -> ChainRecord`` with a
        ``start(theta, rng)`` attribute building the first record.
    scale : float or array_like
        Random-walk scale. While ``adapt`` is on it is tuned during the first
        ``burn_in`` iterations towards ``target_accept`` and frozen after.
    seed : int, optional
        Stored in the metadata only.
    checkpoint : dict, optional
        From a :class:`ChainAborted`; resumes the aborted run.
    on_record : callable, optional
        Called with ``(iteration, record)`` as records are produced.

    Raises
    ------
    ChainAborted
        When the estimator overflows; carries the iteration index and a
        checkpoint holding the records so far, the RNG state and the scale.
    """
    if n_iters < 0 or burn_in < 0 or (n_iters > 0 and burn_in >= n_iters):
        raise ValueError("need n_iters > burn_in >= 0")
    t0 = time.perf_counter()
    stats = {"estimates": 0, "zero_resamples": 0}
    if checkpoint is not None:
        records = list(checkpoint["records"])
        rng.bit_generator.state = checkpoint["rng_state"]
        log_scale = np.log(np.asarray(checkpoint["scale"], dtype=float))
        stats.update(checkpoint.get("stats", {}))
        current = records[-1] if records else None
    else:
        records = []
        log_scale = np.log(np.broadcast_to(np.asarray(scale, dtype=float),
                                           np.shape(np.ravel(init))).copy())
        current = None
    i = len(records)
    try:
        if n_iters > 0 and current is None:
            current = kernel.start(np.ravel(np.asarray(init, dtype=float)), rng)
        while i < n_iters:
            if i > 0:
                current = kernel(current, np.exp(log_scale), rng, stats)
            records.append(current)
            if on_record is not None:
                on_record(i, current)
            if adapt and i < burn_in and i > 0:
                log_scale = _adapt(log_scale, current.accepted, i, target_accept)
            i += 1
    except EstimatorOverflow as err:
        ckpt = {"records": records, "rng_state": rng.bit_generator.state,
                "scale": np.exp(log_scale), "stats": dict(stats)}
        raise ChainAborted(f"estimator overflow at iteration {i}: {err}", i, ckpt) from err

    post = records[burn_in:]
    meta = {
        "n_iters": n_iters,
        "burn_in": burn_in,
        "seed": seed,
        "scale": np.exp(log_scale).tolist(),
        "acceptance_rate": float(np.mean([r.accepted for r in post])) if post else None,
        "negative_count": int(sum(r.sign < 0 for r in records)),
        "capped_count": int(sum(r.capped for r in records)),
        "total_normalizer_draws": int(sum(r.n_normalizer_draws for r in records)),
        "zero_sign_resamples": int(stats["zero_resamples"]),
        "wall_time": time.perf_counter() - t0,
    }
    return ChainResult(records, meta)


# ---------------------------------------------------------------------------
# diagnostics


def autocorrelation(x, max_lag=None):
    """Sample autocorrelation via FFT, ``rho[0] = 1``."""
    x = np.asarray(x, dtype=float)
    n = x.size
    d = x - x.mean()
    f = np.fft.rfft(d, 2 * n)
    acov = np.fft.irfft(f * np.conj(f))[:n] / n
    if acov[0] == 0:
        return np.ones(1 if max_lag is None else max_lag + 1)
    rho = acov / acov[0]
    return rho if max_lag is None else rho[: max_lag + 1]


def ess(series):
    """Effective sample size using Geyer's initial monotone sequence.

    Autocorrelations are summed in consecutive pairs until a pair sum turns
    negative, with pair sums forced to be non-increasing. The result is
    clamped to ``[1, n]``; a constant series returns ``n``.
    """
    x = np.asarray(series, dtype=float)
    n = x.size
    if n < 10:
        raise ValueError("ess needs at least 10 values")
    if np.all(x == x[0]):
        log.info("constant series; ess set to n")
        return float(n)
    rho = autocorrelation(x)
    pairs = rho[0 : n - 1 : 2][: (n - 1) // 2] + rho[1:n:2][: (n - 1) // 2]
    total = 0.0
    prev = math.inf
    for g in pairs:
        if g <= 0:
            break
        g = min(g, prev)
        total += g
        prev = g
    tau = 2.0 * total - 1.0
    return float(np.clip(n / tau, 1.0, n)) if tau > 0 else float(n)


def lag_window_sum(x, threshold=0.05):
    """Tukey-Hanning lag-window estimate of ``1 + 2 sum_k rho_k``.

    The window width is twice the first lag at which the sample
    autocorrelation falls below ``threshold``.
    """
    rho = autocorrelation(x)
    n = rho.size
    below = np.flatnonzero(rho[1:] < threshold)
    first = int(below[0]) + 1 if below.size else n - 1
    width = min(2 * first, n - 1)
    if width < 1:
        return 1.0
    k = np.arange(1, width + 1)
    w = 0.5 * (1.0 + np.cos(np.pi * k / width))
    return float(max(1.0 + 2.0 * np.sum(w * rho[1 : width + 1]), 1e-12))


@dataclass(frozen=True)
class SignCorrectedSummary:
    estimate: float
    r_hat: float
    v_hat: float
    variance: float
    ess: float
    negative_fraction: float


def sign_corrected_expectation(h_values, signs):
    """Sign-weighted posterior expectation ``sum(s h) / sum(s)`` with diagnostics.

    The variance uses the importance-sampling approximation
    ``(pi_s(h^2) - I^2) V / (n r^2)`` where ``pi_s`` is the sign-weighted
    average, ``r`` the mean sign and ``V`` the lag-window autocorrelation
    sum of ``h * s``. Small ``|r|`` inflates the variance.

    Raises
    ------
    DegenerateSign
        If the signs sum to zero.
    """
    h = np.asarray(h_values, dtype=float)
    s = np.asarray(signs, dtype=float)
    if h.shape != s.shape or h.size == 0:
        raise ValueError("h_values and signs must be non-empty and the same length")
    n = h.size
    ssum = s.sum()
    if ssum == 0:
        raise DegenerateSign("signs sum to zero; sign-corrected estimate undefined")
    est = float(np.sum(s * h) / ssum)
    r = float(ssum / n)
    second = float(np.sum(s * h * h) / ssum)
    spread = max(second - est * est, 0.0)
    v = lag_window_sum(h * s) if n > 2 else 1.0
    var = spread * v / (n * r * r)
    plain = float(h.var())
    if var > 0:
        e = float(np.clip(plain / var, 1.0, n))
    else:
        e = float(n)
    return SignCorrectedSummary(est, r, v, var, e, float(np.mean(s < 0)))


# ---------------------------------------------------------------------------
# exchange algorithm


def exchange_update(theta, data, loglik, sampler, propose, log_prior, rng):
    """One exchange-algorithm update.

    A synthetic dataset ``x ~ p(. | theta')`` is drawn by ``sampler(theta',
    rng)`` and the swap of ``(data, x)`` between the two parameter values is
    accepted with the usual Metropolis-Hastings ratio, in which both
    normalizing constants cancel. ``loglik(x, theta)`` is the unnormalised
    log density.

    Returns
    -------
    theta_new, accepted, log_alpha
    """
    theta = np.asarray(theta, dtype=float)
    prop, log_q_ratio = propose(theta, rng)
    lp_new = log_prior(prop)
    if not np.isfinite(lp_new):
        return theta, False, -math.inf
    aux = sampler(prop, rng)
    log_alpha = (loglik(data, prop) + loglik(aux, theta)
                 - loglik(data, theta) - loglik(aux, prop)
                 + lp_new - log_prior(theta) + log_q_ratio)
    if log_alpha >= 0 or rng.random() < math.exp(log_alpha):
        return prop, True, log_alpha
    return theta, False, log_alpha


def exchange_kernel(data, loglik, sampler, log_prior):
    """Exchange updates in the ``kernel(record, scale, rng, stats)`` form.

    Records carry a unit estimate with sign +1 so the same summaries apply.
    """
    def kernel(current, scale, rng, stats):
        th, acc, _ = exchange_update(current.theta, data, loglik, sampler,
                                     gaussian_rw(scale), log_prior, rng)
        return ChainRecord(tuple(float(t) for t in th), 0.0, 1, bool(acc))

    def start(theta, rng):
        return ChainRecord(tuple(float(t) for t in np.ravel(theta)), 0.0, 1, True)
    kernel.start = start
    return kernel
