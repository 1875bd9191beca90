"""
Signed unbiased likelihood estimators built from unbiased normalizer draws.

A *normalizer source* is any callable ``source(theta, rng) -> log Z_hat``
whose draws are i.i.d. and unbiased for ``Z(theta)`` in linear space. The
estimators below turn such draws into unbiased, possibly negative,
estimates of ``f(y; theta) / Z(theta)`` (geometric tilting) or of
``f(y; theta) exp(-nu Z(theta))`` (exponential auxiliary variable). Every
magnitude is carried as a natural log with a separate sign; the series
themselves are expressed in terms of ``X_i = Z_hat_i / Z_tilde`` so the
truncated sums stay O(1).
"""

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .errors import DegenerateSource, EstimatorOverflow, InvalidSchedule
from .truncation import RouletteSchedule, truncate

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SignedValue:
    """A real number stored as ``sign * exp(log_magnitude)``.

    Cost counters and auxiliary-variable bookkeeping ride along but do not
    take part in equality.
    """

    log_magnitude: float
    sign: int
    n_terms: int = field(default=0, compare=False)
    n_draws: int = field(default=0, compare=False)
    capped: bool = field(default=False, compare=False)
    aux: float = field(default=None, compare=False)
    log_aux_density: float = field(default=0.0, compare=False)

    def __post_init__(self):
        if self.sign not in (-1, 0, 1):
            raise ValueError(f"sign must be -1, 0 or 1, got {self.sign}")
        if self.sign == 0:
            object.__setattr__(self, "log_magnitude", -math.inf)
        elif not math.isfinite(self.log_magnitude):
            raise EstimatorOverflow(f"non-finite log magnitude {self.log_magnitude}")

    @classmethod
    def from_real(cls, x, **meta):
        x = float(x)
        if x == 0.0:
            return cls(-math.inf, 0, **meta)
        return cls(math.log(abs(x)), 1 if x > 0 else -1, **meta)

    def __mul__(self, other):
        if not isinstance(other, SignedValue):
            other = SignedValue.from_real(other)
        if self.sign == 0 or other.sign == 0:
            return SignedValue(-math.inf, 0)
        return SignedValue(self.log_magnitude + other.log_magnitude, self.sign * other.sign)

    __rmul__ = __mul__

    def __float__(self):
        return self.sign * math.exp(self.log_magnitude) if self.sign else 0.0

    @property
    def value(self):
        return float(self)


@dataclass(frozen=True)
class TiltingPlan:
    """Reference normalizer, tilting multiplier and truncation settings.

    Parameters
    ----------
    log_z_tilde : float
        Log of the reference normalizer ``Z_tilde``.
    c : float
        Multiplier in ``1 - c Z_hat / Z_tilde``.
    exponent_split : int
        Number ``E`` of factors the exponential is split into.
    shift : float
        Log-space shift ``U`` used together with splitting.
    q : float, optional
        Roulette continuation probability chosen from the pilot.
    mean_x, mean_x2, kappa : float, optional
        Pilot moments of ``X = Z_hat / Z_tilde`` and ``kappa = 1 - c mean(X)``.
    """

    log_z_tilde: float
    c: float = 1.0
    exponent_split: int = 1
    shift: float = 0.0
    q: float = None
    mean_x: float = None
    mean_x2: float = None
    kappa: float = None

    def __post_init__(self):
        if not math.isfinite(self.log_z_tilde):
            raise ValueError("log_z_tilde must be finite")
        if not self.c > 0:
            raise ValueError("c must be positive")
        if int(self.exponent_split) != self.exponent_split or self.exponent_split < 1:
            raise ValueError("exponent_split must be a positive integer")

    @property
    def z_tilde(self):
        return math.exp(self.log_z_tilde)

    def schedule(self, safety_cap=10_000):
        if self.q is None:
            raise InvalidSchedule("plan carries no roulette q")
        return RouletteSchedule.constant(self.q, safety_cap)


def _outcome_to_signed(log_prefactor, outcome, n_draws, **meta):
    s = outcome.value
    if s == 0.0:
        log.warning("series estimate is exactly zero")
        return SignedValue(-math.inf, 0, outcome.terms_used, n_draws, outcome.capped, **meta)
    lm = log_prefactor + math.log(abs(s))
    if not math.isfinite(lm):
        raise EstimatorOverflow("estimate magnitude overflowed", index=outcome.terms_used)
    return SignedValue(lm, 1 if s > 0 else -1, outcome.terms_used, n_draws,
                       outcome.capped, **meta)


class _ProductStream:
    """Terms ``prod_{i<=j} g(X_i, i)`` with ``X_i`` fresh normalizer ratios."""

    def __init__(self, theta, source, log_z_tilde, factor):
        self.theta, self.source = theta, source
        self.log_z_tilde = log_z_tilde
        self.factor = factor
        self.prod = 1.0
        self.n_draws = 0

    def next_term(self, j, rng):
        if j == 0:
            return 1.0
        try:
            x = math.exp(self.source(self.theta, rng) - self.log_z_tilde)
        except OverflowError:
            raise EstimatorOverflow("normalizer ratio overflowed", index=j) from None
        self.n_draws += 1
        self.prod *= self.factor(x, j)
        return self.prod


def geometric_estimate(theta, unnorm_loglik, plan, source, scheme, rng):
    """Signed unbiased estimate of ``f(y; theta) / Z(theta)``.

    Uses ``f / Z = (c f / Z_tilde) sum_n kappa^n`` with each power of
    ``kappa`` replaced by the product ``prod_i (1 - c X_i)`` of independent
    draws, and the sum truncated by ``scheme`` (a roulette schedule or an
    index distribution). Unbiased whenever the series converges in
    expectation, i.e. ``|1 - c Z / Z_tilde| < 1``.

    Returns
    -------
    SignedValue
        With ``n_terms`` the truncation count and ``n_draws`` the number of
        normalizer draws consumed.
    """
    c = plan.c
    stream = _ProductStream(theta, source, plan.log_z_tilde, lambda x, j: 1.0 - c * x)
    out = truncate(stream, scheme, rng)
    log_pre = unnorm_loglik - plan.log_z_tilde + math.log(c)
    return _outcome_to_signed(log_pre, out, stream.n_draws)


@dataclass(frozen=True)
class ExponentialAuxiliary:
    """Auxiliary variable ``nu > 0`` of the exponential series estimator."""

    nu: float

    def __post_init__(self):
        if not self.nu > 0:
            raise ValueError("nu must be positive")

    @classmethod
    def draw(cls, log_z_tilde, rng):
        """``nu ~ Exponential(rate Z_tilde)`` together with its log density."""
        nu = rng.exponential() * math.exp(-log_z_tilde)
        return cls(nu), log_z_tilde - nu * math.exp(log_z_tilde)


def exponential_estimate(theta, unnorm_loglik, aux, plan, source, scheme, rng,
                         log_aux_density=0.0):
    """Signed unbiased estimate of ``f(y; theta) exp(-nu Z(theta))``.

    Expands ``exp(-nu Z) = exp(-nu Z_tilde) exp(nu (Z_tilde - Z))`` and
    replaces ``(Z_tilde - Z)^n`` by ``prod_i (Z_tilde - Z_hat_i)``. When
    every draw lies below ``Z_tilde`` all terms are non-negative.
    """
    nz = aux.nu * math.exp(plan.log_z_tilde)
    stream = _ProductStream(theta, source, plan.log_z_tilde,
                            lambda x, j: nz * (1.0 - x) / j)
    out = truncate(stream, scheme, rng)
    return _outcome_to_signed(unnorm_loglik - nz, out, stream.n_draws,
                              aux=aux.nu, log_aux_density=log_aux_density)


def scaled_exponential_estimate(theta, shifted_source, exponent_split, scheme, rng):
    """Unbiased estimate of ``exp(L(theta) - U)`` as a product of ``E`` factors.

    ``shifted_source(theta, rng)`` returns unbiased estimates of
    ``L(theta) - U``. Each factor estimates ``exp((L - U) / E)`` through its
    own truncated exponential series with fresh inputs, so factors are
    independent and the product stays unbiased while each series only has
    to cover an exponent of size ``(L - U) / E``.

    Raises
    ------
    EstimatorOverflow
        Carrying ``factor``, the index of the failing factor.
    """
    if int(exponent_split) != exponent_split or exponent_split < 1:
        raise ValueError("exponent_split must be a positive integer")
    E = int(exponent_split)
    total = SignedValue(0.0, 1)
    n_terms = 0
    n_draws = 0
    capped = False

    for e in range(E):
        state = {"prod": 1.0}

        def term(j, r):
            nonlocal n_draws
            if j == 0:
                return 1.0
            n_draws += 1
            state["prod"] *= float(shifted_source(theta, r)) / (E * j)
            return state["prod"]

        try:
            out = truncate(term, scheme, rng)
        except EstimatorOverflow as err:
            raise EstimatorOverflow(f"factor {e}: {err}", index=err.index,
                                    survival=err.survival, factor=e) from err
        n_terms += out.terms_used
        capped |= out.capped
        total = total * SignedValue.from_real(out.value)
        if total.sign == 0:
            break
    return SignedValue(total.log_magnitude, total.sign, n_terms, n_draws, capped)


def choose_tilting(theta, source, pilot_draws, kappa_target, rng, split=False,
                   positivity_sd=None, q_min=0.05, q_max=0.95, shrink=0.9):
    """Pilot-based tilting plan for one parameter value.

    ``Z_tilde`` is the pilot mean of the draws and ``c`` starts at 1 (or at
    ``1 / (1 + positivity_sd * sd(X))`` when a positivity margin is asked
    for, which keeps ``1 - c X`` non-negative for draws up to that many pilot
    standard deviations above the mean). ``c`` is then shrunk by ``shrink``
    until ``c < 2 mean(X) / mean(X^2)``, the moment condition under which
    ``E[(1 - c X)^2] < 1``.

    The roulette probability is ``q = max(q_min, |kappa|, rms(1 - c X))``
    clipped to ``q_max``. Using the root-mean-square term ratio keeps
    ``q > rms^2``, which is what finite variance of the geometric series
    needs; ``|kappa|`` alone is zero whenever ``c = 1``.

    Raises
    ------
    DegenerateSource
        If the pilot draws are not usable or no ``c`` meets both the moment
        condition and ``|kappa| <= kappa_target``.
    """
    if pilot_draws < 2:
        raise ValueError("pilot_draws must be at least 2")
    if not 0 < kappa_target < 1:
        raise ValueError("kappa_target must lie in (0, 1)")
    logs = np.array([source(theta, rng) for _ in range(pilot_draws)], dtype=float)
    return plan_from_pilot(logs, kappa_target, split=split, positivity_sd=positivity_sd,
                           q_min=q_min, q_max=q_max, shrink=shrink)


def plan_from_pilot(logs, kappa_target, split=False, positivity_sd=None,
                    q_min=0.05, q_max=0.95, shrink=0.9):
    """Build a :class:`TiltingPlan` from pilot log-draws (see :func:`choose_tilting`)."""
    logs = np.asarray(logs, dtype=float)
    if logs.size < 2 or not np.all(np.isfinite(logs)):
        raise DegenerateSource("pilot draws must be at least two finite log values")
    log_zt = float(logsumexp(logs) - math.log(logs.size))
    x = np.exp(logs - log_zt)
    m1, m2 = float(x.mean()), float(np.mean(x * x))
    c = 1.0
    if positivity_sd is not None:
        c = 1.0 / (1.0 + positivity_sd * float(x.std(ddof=1)))
    bound = 2.0 * m1 / m2
    for _ in range(1000):
        if c < bound:
            break
        c *= shrink
    kappa = 1.0 - c * m1
    if abs(kappa) > kappa_target:
        raise DegenerateSource(
            f"pilot |kappa| = {abs(kappa):.3f} exceeds target {kappa_target} "
            f"(c = {c:.3f}, moment bound {bound:.3f})")
    rms = math.sqrt(float(np.mean((1.0 - c * x) ** 2)))
    q = min(q_max, max(q_min, abs(kappa), rms))
    E = max(1, math.ceil(abs(log_zt))) if split else 1
    return TiltingPlan(log_zt, c, E, 0.0, q, m1, m2, kappa)


def _pilot_node(args):
    source, theta, pilot_draws, seed = args
    rng = np.random.default_rng(seed)
    return np.array([source(theta, rng) for _ in range(pilot_draws)], dtype=float)


class PilotTable:
    """Tilting plans on a 1-D grid of parameter values.

    ``log Z_tilde`` is linearly interpolated between node pilot means, while
    ``c`` and ``q`` are taken from the nearest node. A node whose pilot
    cannot meet ``kappa_target`` falls back to ``relaxed_kappa``; the
    affected nodes are listed in ``relaxed``.

    Parameters
    ----------
    nodes : array_like
        Increasing grid of scalar parameter values.
    source : callable
        Normalizer source taking a length-1 parameter vector.
    pilot_draws : int
    rng : numpy.random.Generator
        One seed per node is drawn from it, so node results do not depend on
        ``workers``.
    workers : int
        Process-pool size for the pilot runs (1 runs in-process).
    """

    def __init__(self, nodes, source, pilot_draws, kappa_target, rng, positivity_sd=None,
                 q_min=0.05, q_max=0.95, relaxed_kappa=0.99, workers=1):
        self.nodes = np.asarray(nodes, dtype=float)
        if self.nodes.ndim != 1 or self.nodes.size < 1 or np.any(np.diff(self.nodes) <= 0):
            raise ValueError("nodes must be a strictly increasing 1-D grid")
        seeds = rng.integers(2**63 - 1, size=self.nodes.size)
        jobs = [(source, np.array([t]), pilot_draws, int(s)) for t, s in zip(self.nodes, seeds)]
        if workers > 1:
            with ProcessPoolExecutor(workers) as pool:
                pilots = list(pool.map(_pilot_node, jobs))
        else:
            pilots = [_pilot_node(j) for j in jobs]
        self.plans = []
        self.relaxed = []
        for t, logs in zip(self.nodes, pilots):
            kw = dict(positivity_sd=positivity_sd, q_min=q_min, q_max=q_max)
            try:
                plan = plan_from_pilot(logs, kappa_target, **kw)
            except DegenerateSource:
                plan = plan_from_pilot(logs, relaxed_kappa, **kw)
                self.relaxed.append(float(t))
            self.plans.append(plan)
        if self.relaxed:
            log.info("relaxed kappa target at %d pilot nodes", len(self.relaxed))
        self.log_z = np.array([p.log_z_tilde for p in self.plans])

    def __call__(self, theta):
        t = float(np.ravel(theta)[0])
        if t < self.nodes[0] or t > self.nodes[-1]:
            raise ValueError(f"parameter {t} outside pilot grid")
        k = int(np.argmin(np.abs(self.nodes - t)))
        node = self.plans[k]
        lz = float(np.interp(t, self.nodes, self.log_z))
        return TiltingPlan(lz, node.c, node.exponent_split, node.shift, node.q,
                           node.mean_x, node.mean_x2, node.kappa)
