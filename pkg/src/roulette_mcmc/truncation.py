"""
Unbiased stochastic truncation of infinite series.

A series ``S = sum_j phi_j`` is read through a *term stream*: either an
object with a ``next_term(j, rng)`` method or a plain callable
``stream(j, rng)``. Streams are always advanced in increasing index order
starting at 0, so a stream may keep running products internally (the
likelihood estimators rely on this).

Russian roulette draws ``U_1, U_2, ...`` and stops at the first ``j`` with
``U_j >= q_j``. Term ``j`` survives with probability ``P_j = q_1 ... q_j``,
so weighting it by ``1 / P_j`` gives an unbiased estimate of ``S``.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import EstimatorOverflow, InvalidSchedule

log = logging.getLogger(__name__)

DEFAULT_SAFETY_CAP = 10_000
SCHEDULE_KINDS = ("constant_q", "per_step_q", "geometric_index")


def _term_fn(stream):
    fn = getattr(stream, "next_term", None)
    if fn is not None:
        return fn
    if callable(stream):
        return stream
    raise TypeError("term stream must be callable or define next_term(j, rng)")


@dataclass(frozen=True)
class RouletteSchedule:
    """Continuation probabilities for Russian roulette.

    Parameters
    ----------
    kind : {"constant_q", "per_step_q", "geometric_index"}
        ``constant_q`` uses ``q[0]`` at every step. ``per_step_q`` uses
        ``q[j-1]`` at step ``j`` and repeats the last entry once the list
        runs out. ``geometric_index`` takes ``q = (q1, r)`` and continues
        with probability ``q1 * r**(j-1)``, which suits series whose terms
        decay faster than geometrically.
    q : tuple of float
        Values in (0, 1].
    safety_cap : int
        Maximum number of weighted terms before a forced (biased, flagged)
        stop.
    """

    kind: str
    q: tuple
    safety_cap: int = DEFAULT_SAFETY_CAP

    def __post_init__(self):
        if self.kind not in SCHEDULE_KINDS:
            raise InvalidSchedule(f"unknown schedule kind {self.kind!r}")
        q = tuple(float(v) for v in np.atleast_1d(self.q))
        object.__setattr__(self, "q", q)
        if not q:
            raise InvalidSchedule("schedule needs at least one q value")
        if self.kind == "constant_q" and len(q) != 1:
            raise InvalidSchedule("constant_q stores exactly one value")
        if self.kind == "geometric_index":
            if len(q) != 2 or not 0.0 < q[1] <= 1.0:
                raise InvalidSchedule("geometric_index needs (q1, ratio) with ratio in (0, 1]")
            q = q[:1]
        for v in q:
            if not 0.0 < v <= 1.0:
                raise InvalidSchedule(f"continuation probability {v} outside (0, 1]")
        if int(self.safety_cap) != self.safety_cap or self.safety_cap < 1:
            raise InvalidSchedule("safety_cap must be a positive integer")

    @classmethod
    def constant(cls, q, safety_cap=DEFAULT_SAFETY_CAP):
        return cls("constant_q", (q,), safety_cap)

    @classmethod
    def per_step(cls, qs, safety_cap=DEFAULT_SAFETY_CAP):
        return cls("per_step_q", tuple(qs), safety_cap)

    @classmethod
    def geometric(cls, q1, ratio, safety_cap=DEFAULT_SAFETY_CAP):
        return cls("geometric_index", (q1, ratio), safety_cap)

    def q_at(self, j):
        """Continuation probability at step ``j >= 1``."""
        if self.kind == "constant_q":
            return self.q[0]
        if self.kind == "per_step_q":
            return self.q[min(j, len(self.q)) - 1]
        return self.q[0] * self.q[1] ** (j - 1)

    def survival(self, n):
        """``p_n = P(tau >= n) = q_1 ... q_{n-1}``; ``p_1 = 1``."""
        p = 1.0
        for j in range(1, n):
            p *= self.q_at(j)
        return p


@dataclass(frozen=True)
class TruncationOutcome:
    """Result of one stochastic truncation.

    ``terms_used`` counts weighted terms beyond ``phi_0`` for roulette and is
    the sampled index for single-term truncation.
    """

    value: float
    terms_used: int
    capped: bool = False
    term_values: tuple = field(default=None, compare=False)

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise EstimatorOverflow(f"non-finite truncation value {self.value}")


def roulette_truncate(stream, schedule, rng, keep_terms=False):
    """Russian-roulette estimate of ``sum_j phi_j``.

    Parameters
    ----------
    stream : callable or object with ``next_term``
        Term ``j`` is requested only after the roulette has decided to keep
        it, in order ``j = 0, 1, 2, ...``.
    schedule : RouletteSchedule
    rng : numpy.random.Generator
    keep_terms : bool
        Store the raw ``phi_j`` in the outcome.

    Returns
    -------
    TruncationOutcome

    Raises
    ------
    EstimatorOverflow
        If a weighted term ``phi_j / (q_1 ... q_j)`` is not finite.
    """
    term = _term_fn(stream)
    phi = float(term(0, rng))
    if not math.isfinite(phi):
        raise EstimatorOverflow("non-finite leading term", index=0, survival=1.0)
    parts = [phi]
    raw = [phi] if keep_terms else None
    kept = 1.0
    j = 1
    capped = False
    while True:
        if j > schedule.safety_cap:
            capped = True
            log.warning("roulette hit safety cap of %d terms; estimate is biased",
                        schedule.safety_cap)
            break
        q = schedule.q_at(j)
        if rng.random() >= q:
            break
        kept *= q
        phi = float(term(j, rng))
        w = phi / kept
        if not math.isfinite(w):
            raise EstimatorOverflow(f"weighted term {j} is not finite",
                                    index=j, survival=kept)
        parts.append(w)
        if keep_terms:
            raw.append(phi)
        j += 1
    return TruncationOutcome(math.fsum(parts), j - 1, capped,
                             tuple(raw) if keep_terms else None)


class PoissonIndex:
    """Poisson(lam) law on the non-negative integers."""

    def __init__(self, lam=1.0):
        if not lam > 0:
            raise InvalidSchedule("Poisson rate must be positive")
        self.lam = float(lam)

    def sample(self, rng):
        return int(rng.poisson(self.lam))

    def pmf(self, k):
        return math.exp(k * math.log(self.lam) - self.lam - math.lgamma(k + 1))


class GeometricIndex:
    """``q_k = (1 - p) p^k`` for ``k = 0, 1, ...``."""

    def __init__(self, p):
        if not 0.0 < p < 1.0:
            raise InvalidSchedule("geometric index parameter must lie in (0, 1)")
        self.p = float(p)

    def sample(self, rng):
        return int(rng.geometric(1.0 - self.p)) - 1

    def pmf(self, k):
        return (1.0 - self.p) * self.p**k


class FiniteIndex:
    """Explicit mass function on ``0..len(probs)-1``."""

    def __init__(self, probs):
        probs = np.asarray(probs, dtype=float)
        if probs.ndim != 1 or np.any(probs < 0) or not np.isclose(probs.sum(), 1.0):
            raise InvalidSchedule("index probabilities must be non-negative and sum to 1")
        self.probs = probs

    def sample(self, rng):
        return int(rng.choice(len(self.probs), p=self.probs))

    def pmf(self, k):
        return float(self.probs[k]) if 0 <= k < len(self.probs) else 0.0


def single_term_truncate(stream, index_dist, rng, keep_terms=False):
    """Unbiased single-term estimate ``phi_k / q_k`` with ``k ~ index_dist``.

    The stream is advanced through indices ``0..k`` so stateful streams see
    the same call pattern as under roulette.
    """
    k = index_dist.sample(rng)
    qk = index_dist.pmf(k)
    if not qk > 0:
        raise InvalidSchedule(f"sampled index {k} has zero probability")
    term = _term_fn(stream)
    raw = []
    for j in range(k + 1):
        phi = float(term(j, rng))
        if keep_terms:
            raw.append(phi)
    value = phi / qk
    if not math.isfinite(value):
        raise EstimatorOverflow(f"weighted term {k} is not finite", index=k, survival=qk)
    return TruncationOutcome(value, k, False, tuple(raw) if keep_terms else None)


def truncate(stream, scheme, rng, keep_terms=False):
    """Dispatch on ``scheme``: a RouletteSchedule or an index distribution."""
    if isinstance(scheme, RouletteSchedule):
        return roulette_truncate(stream, scheme, rng, keep_terms)
    return single_term_truncate(stream, scheme, rng, keep_terms)


def expected_cost(schedule, horizon):
    """``sum_{n=1}^{horizon} p_n``, the mean of ``min(tau, horizon)``."""
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    terms = []
    p = 1.0
    for n in range(1, horizon + 1):
        terms.append(p)
        p *= schedule.q_at(n)
    return math.fsum(terms)
