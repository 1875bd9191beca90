"""
Unbiased positive estimators of partition functions, returned as logs.

Annealing estimators work on any *annealable model* exposing

* ``log_z0``: log normalizer of the base measure,
* ``init_particles(n, rng)``: exact draws from the base measure,
* ``log_f(particles, params)``: log target density per particle,
* ``move(particles, params, frac, n_updates, rng)``: a kernel leaving
  ``f^frac`` (times the base) invariant,
* ``copy_particles(particles, idx)``.

A model may also provide a fused ``anneal`` method (the Ising backend does);
it is used automatically and implements the same estimator.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .errors import DegenerateWeights, EstimatorOverflow

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class AnnealingLadder:
    """Equally spaced tempering fractions ``0, 1/T, ..., 1``.

    ``sweeps_per_temp`` counts single-site updates per intermediate
    temperature (one per temperature reproduces the classic random-scan
    AIS scheme).
    """

    n_temps: int
    n_samples: int = 100
    sweeps_per_temp: int = 1

    def __post_init__(self):
        if self.n_temps < 1:
            raise ValueError("n_temps must be at least 1")
        if self.n_samples < 1:
            raise ValueError("n_samples must be at least 1")
        if self.sweeps_per_temp < 0:
            raise ValueError("sweeps_per_temp must be non-negative")

    @property
    def betas(self):
        return np.linspace(0.0, 1.0, self.n_temps + 1)


def _generic_anneal(model, params, fracs, n_particles, n_updates, threshold, rng):
    parts = model.init_particles(n_particles, rng)
    logw = np.zeros(n_particles)
    log_z = 0.0
    n_resample = 0
    n_temps = len(fracs) - 1
    for t in range(1, n_temps + 1):
        lf = model.log_f(parts, params)
        logw += (fracs[t] - fracs[t - 1]) * lf
        bad = np.flatnonzero(~np.isfinite(logw))
        if bad.size:
            raise DegenerateWeights(
                f"non-finite weight at particle {bad[0]}, temperature {t}")
        if t < n_temps:
            if threshold > 0:
                w = np.exp(logw - logw.max())
                ess = w.sum() ** 2 / np.sum(w * w)
                if ess < threshold * n_particles:
                    log_z += float(logsumexp(logw) - math.log(n_particles))
                    idx = rng.choice(n_particles, size=n_particles, p=w / w.sum())
                    parts = model.copy_particles(parts, idx)
                    logw[:] = 0.0
                    n_resample += 1
            parts = model.move(parts, params, fracs[t], n_updates, rng)
    log_z += float(logsumexp(logw) - math.log(n_particles))
    return log_z + model.log_z0, n_resample


def _anneal(model, params, ladder, n_particles, threshold, rng):
    fracs = ladder.betas
    if hasattr(model, "anneal"):
        return model.anneal(params, fracs, n_particles, ladder.sweeps_per_temp, threshold, rng)
    return _generic_anneal(model, params, fracs, n_particles, ladder.sweeps_per_temp,
                           threshold, rng)


def ais_partition_estimate(model, params, ladder, rng):
    """Annealed importance sampling estimate of ``log Z(params)``.

    Each of ``ladder.n_samples`` particles starts from the base measure,
    accumulates ``(b_t - b_{t-1}) log f(x_{t-1})`` and is moved by a kernel
    invariant for ``f^{b_t}``. The log of the mean weight plus ``log_z0`` is
    returned; its exponential is unbiased for ``Z``.
    """
    return _anneal(model, params, ladder, ladder.n_samples, 0.0, rng)[0]


def smc_partition_estimate(model, params, n_particles, ladder, resample_threshold, rng,
                           return_resamples=False):
    """Tempered SMC estimate of ``log Z(params)`` with multinomial resampling.

    Particles are resampled whenever their effective sample size drops below
    ``resample_threshold * n_particles``; the estimate is the product of the
    stage-wise mean weights. A threshold of 0 never resamples and gives the
    AIS estimator with the same random-number layout.
    """
    if n_particles < 2:
        raise ValueError("SMC needs at least two particles")
    val, n_res = _anneal(model, params, ladder, n_particles, float(resample_threshold), rng)
    return (val, n_res) if return_resamples else val


def is_partition_estimate(unnorm_logdensity, proposal, n, rng):
    """Plain importance-sampling estimate of ``log Z``.

    Parameters
    ----------
    unnorm_logdensity : callable
        Vectorised over the leading axis of the sample array.
    proposal : object
        With ``sample(n, rng)`` and vectorised ``logpdf(x)``.
    n : int
    rng : numpy.random.Generator
    """
    x = proposal.sample(n, rng)
    lr = np.asarray(unnorm_logdensity(x), dtype=float) - np.asarray(proposal.logpdf(x))
    bad = np.flatnonzero(~np.isfinite(lr))
    if bad.size:
        raise EstimatorOverflow(f"non-finite importance ratio at sample {bad[0]}",
                                index=int(bad[0]))
    return float(logsumexp(lr) - math.log(n))


class AISSource:
    """Normalizer source ``theta -> log Z_hat`` backed by AIS or SMC.

    ``to_params`` maps the parameter vector to model parameters. With a
    positive ``resample_threshold`` the SMC variant is used.
    """

    def __init__(self, model, to_params, ladder, resample_threshold=0.0):
        self.model, self.to_params = model, to_params
        self.ladder = ladder
        self.resample_threshold = resample_threshold

    def __call__(self, theta, rng):
        params = self.to_params(theta)
        if self.resample_threshold > 0:
            return smc_partition_estimate(self.model, params, self.ladder.n_samples,
                                          self.ladder, self.resample_threshold, rng)
        return ais_partition_estimate(self.model, params, self.ladder, rng)
