"""
Ising model on an N x N torus.

The edge set is fixed everywhere in this package as ``(site, right
neighbour)`` and ``(site, down neighbour)`` with wraparound, giving 2N^2
bonds. For N = 2 this counts each physical bond twice and for N = 1 both
edges are self-loops; every sampler and every exact method shares the rule,
so the quirk is harmless.

Heavy loops (heat-bath updates, annealing, coupling from the past) run in
numba kernels. Those kernels draw from numba's internal generator, seeded
per call from the caller's ``numpy.random.Generator`` so results stay a
deterministic function of the caller's stream.
"""

import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numba
import numpy as np
from scipy.special import logsumexp

from .errors import CoalescenceError, DegenerateWeights, SizeError, UnsupportedRegime
from .pm_mcmc import exchange_update

log = logging.getLogger(__name__)

LOG2 = math.log(2.0)
_SEED_HIGH = 2**63 - 1


def _seed_from(rng):
    return int(rng.integers(_SEED_HIGH))


@dataclass(frozen=True)
class IsingParams:
    """External field ``alpha`` and coupling ``beta``."""

    alpha: float = 0.0
    beta: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.alpha) and math.isfinite(self.beta)):
            raise ValueError(f"non-finite Ising parameters {self}")


# ---------------------------------------------------------------------------
# numba kernels


@numba.njit(cache=True)
def _stats(spins):
    n = spins.shape[0]
    mag = 0
    bonds = 0
    for i in range(n):
        for j in range(n):
            s = spins[i, j]
            mag += s
            bonds += s * (spins[i, (j + 1) % n] + spins[(i + 1) % n, j])
    return mag, bonds


@numba.njit(cache=True, inline="always")
def _neighbour_sum(spins, i, j, n):
    if n == 1:
        # both edges are self-loops; the bond term never changes
        return 0
    jr = j + 1 if j + 1 < n else 0
    jl = j - 1 if j > 0 else n - 1
    idn = i + 1 if i + 1 < n else 0
    iup = i - 1 if i > 0 else n - 1
    return spins[i, jr] + spins[i, jl] + spins[idn, j] + spins[iup, j]


@numba.njit(cache=True)
def _up_table(alpha, beta):
    """P(spin = +1 | neighbour sum 2k - 4) for k = 0..4."""
    table = np.empty(5)
    for k in range(5):
        table[k] = 1.0 / (1.0 + math.exp(-2.0 * (alpha + beta * (2 * k - 4))))
    return table


@numba.njit(cache=True, inline="always")
def _heat_bath(spins, table, n_updates):
    """Random-site heat-bath updates; returns (delta_mag, delta_bonds)."""
    n = spins.shape[0]
    nn = n * n
    dmag = 0
    dbond = 0
    for _ in range(n_updates):
        site = int(np.random.random() * nn)
        i = site // n
        j = site - i * n
        nb = _neighbour_sum(spins, i, j, n)
        new = 1 if np.random.random() < table[(nb + 4) // 2] else -1
        old = spins[i, j]
        if new != old:
            spins[i, j] = new
            dmag += new - old
            dbond += (new - old) * nb
    return dmag, dbond


@numba.njit(cache=True)
def _heat_bath_seeded(spins, alpha, beta, n_updates, seed):
    np.random.seed(seed)
    return _heat_bath(spins, _up_table(alpha, beta), n_updates)


@numba.njit(cache=True)
def _log_mean_exp(a):
    m = a.max()
    if not np.isfinite(m):
        return m
    return m + math.log(np.mean(np.exp(a - m)))


@numba.njit(cache=True)
def _random_spins(spins):
    n = spins.shape[0]
    for i in range(n):
        for j in range(n):
            spins[i, j] = 1 if np.random.random() < 0.5 else -1


@numba.njit(cache=True)
def _anneal(n, alpha, beta, fracs, n_particles, updates_per_temp,
            resample_threshold, seed):
    """Tempered importance sampling from the uniform configuration measure.

    With ``resample_threshold <= 0`` this is annealed importance sampling
    and particles are run one after another; otherwise all particles move
    through each temperature together and are multinomially resampled
    whenever the effective sample size drops below
    ``resample_threshold * n_particles``.

    Returns (log Z estimate, number of resampling events, bad_particle,
    bad_temperature); the last two are -1 unless a weight became non-finite.
    """
    np.random.seed(seed)
    n_temps = fracs.shape[0] - 1
    tables = np.empty((n_temps + 1, 5))
    for t in range(n_temps + 1):
        tables[t] = _up_table(fracs[t] * alpha, fracs[t] * beta)
    logw = np.zeros(n_particles)
    log_z = 0.0
    n_resample = 0

    if resample_threshold <= 0.0:
        spins = np.empty((n, n), dtype=np.int64)
        for p in range(n_particles):
            _random_spins(spins)
            mag, bonds = _stats(spins)
            lw = 0.0
            for t in range(1, n_temps + 1):
                lw += (fracs[t] - fracs[t - 1]) * (alpha * mag + beta * bonds)
                if t < n_temps:
                    dm, db = _heat_bath(spins, tables[t], updates_per_temp)
                    mag += dm
                    bonds += db
            if not np.isfinite(lw):
                return np.nan, 0, p, n_temps
            logw[p] = lw
        return _log_mean_exp(logw) + n * n * math.log(2.0), 0, -1, -1

    spins3 = np.empty((n_particles, n, n), dtype=np.int64)
    mags = np.empty(n_particles, dtype=np.int64)
    bonds3 = np.empty(n_particles, dtype=np.int64)
    for p in range(n_particles):
        _random_spins(spins3[p])
        m, b = _stats(spins3[p])
        mags[p] = m
        bonds3[p] = b
    for t in range(1, n_temps + 1):
        d = fracs[t] - fracs[t - 1]
        for p in range(n_particles):
            logw[p] += d * (alpha * mags[p] + beta * bonds3[p])
            if not np.isfinite(logw[p]):
                return np.nan, n_resample, p, t
        if t < n_temps:
            m = logw.max()
            w = np.exp(logw - m)
            ess = w.sum() ** 2 / (w * w).sum()
            if ess < resample_threshold * n_particles:
                log_z += m + math.log(w.mean())
                cdf = np.cumsum(w)
                cdf /= cdf[-1]
                idx = np.searchsorted(cdf, np.random.random(n_particles))
                spins3 = spins3[idx].copy()
                mags = mags[idx].copy()
                bonds3 = bonds3[idx].copy()
                logw[:] = 0.0
                n_resample += 1
            for p in range(n_particles):
                dm, db = _heat_bath(spins3[p], tables[t], updates_per_temp)
                mags[p] += dm
                bonds3[p] += db
    log_z += _log_mean_exp(logw)
    return log_z + n * n * math.log(2.0), n_resample, -1, -1


@numba.njit(cache=True)
def _cftp_pass(n, alpha, beta, block_seeds, block_lengths):
    """Run top and bottom chains from the oldest block to time zero."""
    top = np.ones((n, n), dtype=np.int64)
    bot = -np.ones((n, n), dtype=np.int64)
    table = _up_table(alpha, beta)
    nn = n * n
    for b in range(block_seeds.shape[0] - 1, -1, -1):
        np.random.seed(block_seeds[b])
        for _ in range(block_lengths[b]):
            site = int(np.random.random() * nn)
            i = site // n
            j = site - i * n
            u = np.random.random()
            top[i, j] = 1 if u < table[(_neighbour_sum(top, i, j, n) + 4) // 2] else -1
            bot[i, j] = 1 if u < table[(_neighbour_sum(bot, i, j, n) + 4) // 2] else -1
    coalesced = True
    for i in range(n):
        for j in range(n):
            if top[i, j] != bot[i, j]:
                coalesced = False
    return coalesced, top


@numba.njit(cache=True)
def _fk_connected(right, down, n, si, sj, ti, tj, kind, ei, ej, visited, stamp, stack):
    """Is (si, sj) joined to (ti, tj) by open edges other than edge (kind, ei, ej)?"""
    if si == ti and sj == tj:
        return True
    top = 0
    stack[0] = si * n + sj
    visited[si * n + sj] = stamp
    target = ti * n + tj
    while top >= 0:
        node = stack[top]
        top -= 1
        i = node // n
        j = node - i * n
        jl = j - 1 if j > 0 else n - 1
        iu = i - 1 if i > 0 else n - 1
        jr = j + 1 if j + 1 < n else 0
        idn = i + 1 if i + 1 < n else 0
        for c in range(4):
            if c == 0:
                ok = right[i, j] and not (kind == 0 and ei == i and ej == j)
                nxt = i * n + jr
            elif c == 1:
                ok = right[i, jl] and not (kind == 0 and ei == i and ej == jl)
                nxt = i * n + jl
            elif c == 2:
                ok = down[i, j] and not (kind == 1 and ei == i and ej == j)
                nxt = idn * n + j
            else:
                ok = down[iu, j] and not (kind == 1 and ei == iu and ej == j)
                nxt = iu * n + j
            if ok and visited[nxt] != stamp:
                if nxt == target:
                    return True
                visited[nxt] = stamp
                top += 1
                stack[top] = nxt
    return False


@numba.njit(cache=True)
def _fk_cftp_pass(n, p_open, block_seeds, block_lengths):
    """Random-cluster (q = 2) CFTP pass from all-open and all-closed states."""
    p_closed_cut = p_open / (2.0 - p_open)
    r_top = np.ones((n, n), dtype=np.bool_)
    d_top = np.ones((n, n), dtype=np.bool_)
    r_bot = np.zeros((n, n), dtype=np.bool_)
    d_bot = np.zeros((n, n), dtype=np.bool_)
    nn = n * n
    visited = np.zeros(nn, dtype=np.int64)
    stack = np.empty(nn + 1, dtype=np.int64)
    stamp = 0
    for b in range(block_seeds.shape[0] - 1, -1, -1):
        np.random.seed(block_seeds[b])
        for _ in range(block_lengths[b]):
            e = int(np.random.random() * 2 * nn)
            u = np.random.random()
            kind = e // nn
            site = e - kind * nn
            i = site // n
            j = site - i * n
            if kind == 0:
                ti, tj = i, (j + 1 if j + 1 < n else 0)
            else:
                ti, tj = (i + 1 if i + 1 < n else 0), j
            stamp += 1
            conn = _fk_connected(r_top, d_top, n, i, j, ti, tj, kind, i, j, visited, stamp, stack)
            val = u < (p_open if conn else p_closed_cut)
            if kind == 0:
                r_top[i, j] = val
            else:
                d_top[i, j] = val
            stamp += 1
            conn = _fk_connected(r_bot, d_bot, n, i, j, ti, tj, kind, i, j, visited, stamp, stack)
            val = u < (p_open if conn else p_closed_cut)
            if kind == 0:
                r_bot[i, j] = val
            else:
                d_bot[i, j] = val
    for i in range(n):
        for j in range(n):
            if r_top[i, j] != r_bot[i, j] or d_top[i, j] != d_bot[i, j]:
                return False, r_top, d_top
    return True, r_top, d_top


@numba.njit(cache=True)
def _fk_to_spins(right, down, seed):
    """Give every open cluster an independent uniform +/-1 spin."""
    np.random.seed(seed)
    n = right.shape[0]
    nn = n * n
    label = -np.ones(nn, dtype=np.int64)
    stack = np.empty(nn + 1, dtype=np.int64)
    spins = np.empty((n, n), dtype=np.int64)
    for start in range(nn):
        if label[start] >= 0:
            continue
        s = 1 if np.random.random() < 0.5 else -1
        label[start] = start
        top = 0
        stack[0] = start
        while top >= 0:
            node = stack[top]
            top -= 1
            i = node // n
            j = node - i * n
            spins[i, j] = s
            jl = j - 1 if j > 0 else n - 1
            iu = i - 1 if i > 0 else n - 1
            jr = j + 1 if j + 1 < n else 0
            idn = i + 1 if i + 1 < n else 0
            for c in range(4):
                if c == 0:
                    ok, nxt = right[i, j], i * n + jr
                elif c == 1:
                    ok, nxt = right[i, jl], i * n + jl
                elif c == 2:
                    ok, nxt = down[i, j], idn * n + j
                else:
                    ok, nxt = down[iu, j], iu * n + j
                if ok and label[nxt] < 0:
                    label[nxt] = start
                    top += 1
                    stack[top] = nxt
    return spins


# ---------------------------------------------------------------------------
# lattice


class IsingLattice:
    """An N x N grid of +/-1 spins with cached sufficient statistics.

    ``magnetization`` is the sum of spins and ``bond_sum`` the sum of
    ``y_i * y_j`` over the 2N^2 edges. Both are kept in sync by every
    mutating method.
    """

    def __init__(self, spins):
        spins = np.array(spins, dtype=np.int64)
        if spins.ndim != 2 or spins.shape[0] != spins.shape[1]:
            raise ValueError(f"spins must be square, got shape {spins.shape}")
        if spins.shape[0] < 1 or not np.all(np.abs(spins) == 1):
            raise ValueError("spins must be a non-empty array of +1/-1")
        self.spins = spins
        self.recompute()

    @property
    def n(self):
        return self.spins.shape[0]

    @classmethod
    def aligned(cls, n, sign=1):
        return cls(np.full((n, n), sign, dtype=np.int64))

    @classmethod
    def random(cls, n, rng):
        return cls(rng.choice(np.array([-1, 1]), size=(n, n)))

    def recompute(self):
        m, b = _stats(self.spins)
        self.magnetization = int(m)
        self.bond_sum = int(b)

    def sufficient_stats(self):
        return self.magnetization, self.bond_sum

    def flip(self, i, j):
        n = self.n
        nb = _neighbour_sum(self.spins, i, j, n)
        old = self.spins[i, j]
        self.spins[i, j] = -old
        self.magnetization -= 2 * old
        self.bond_sum -= 2 * old * nb

    def copy(self):
        return IsingLattice(self.spins.copy())

    def __eq__(self, other):
        return isinstance(other, IsingLattice) and np.array_equal(self.spins, other.spins)

    def __repr__(self):
        return (f"IsingLattice(n={self.n}, magnetization={self.magnetization}, "
                f"bond_sum={self.bond_sum})")

    def to_text(self):
        rows = ["".join("+" if s > 0 else "-" for s in row) for row in self.spins]
        return "\n".join([str(self.n)] + rows) + "\n"

    @classmethod
    def from_text(cls, text):
        lines = [ln.strip() for ln in text.strip().splitlines() if ln.strip()]
        n = int(lines[0])
        rows = lines[1:]
        if len(rows) != n or any(len(r) != n for r in rows):
            raise ValueError(f"lattice text does not describe a {n}x{n} grid")
        table = {"+": 1, "-": -1}
        try:
            spins = [[table[c] for c in r] for r in rows]
        except KeyError as exc:
            raise ValueError(f"bad spin character {exc}") from None
        return cls(spins)

    def save(self, path):
        Path(path).write_text(self.to_text())

    @classmethod
    def load(cls, path):
        return cls.from_text(Path(path).read_text())


def unnorm_loglik(lattice, params):
    """``alpha * sum(y) + beta * sum_{i~j} y_i y_j``."""
    return params.alpha * lattice.magnetization + params.beta * lattice.bond_sum


def gibbs_sweep(lattice, params, n_updates, rng):
    """Apply ``n_updates`` heat-bath updates at uniformly chosen sites, in place."""
    if n_updates < 0:
        raise ValueError("n_updates must be non-negative")
    if n_updates:
        dm, db = _heat_bath_seeded(lattice.spins, float(params.alpha),
                                   float(params.beta), int(n_updates), _seed_from(rng))
        lattice.magnetization += int(dm)
        lattice.bond_sum += int(db)
    return lattice


def cftp_sample(n, params, rng, max_sweeps=2**20, method="auto"):
    """Exact draw via monotone coupling from the past.

    ``method="spin"`` couples single-site heat-bath chains started from the
    all-up and all-down states with common random numbers, pushing the start
    time back by doubling (in units of N^2 updates) until they meet at time
    zero. Above the critical coupling the two phases make this hopeless on
    a torus, so for zero field ``method="auto"`` switches to the same
    construction on the Fortuin-Kasteleyn random-cluster representation
    (single-edge heat-bath from all-open / all-closed, sweeps of 2N^2
    updates), then colours each cluster with an independent fair spin.
    Exceeding ``max_sweeps`` raises :class:`CoalescenceError`; there is no
    approximate fallback.
    """
    if params.beta < 0:
        raise UnsupportedRegime("monotone CFTP requires beta >= 0")
    if method == "auto":
        method = "cluster" if params.alpha == 0 and params.beta >= 0.4 else "spin"
    if method == "cluster":
        if params.alpha != 0:
            raise UnsupportedRegime("random-cluster CFTP requires alpha == 0")
        sweep = 2 * n * n
        p_open = -math.expm1(-2.0 * params.beta)
        run = lambda seeds, lengths: _fk_cftp_pass(n, p_open, seeds, lengths)
    elif method == "spin":
        sweep = n * n
        run = lambda seeds, lengths: _cftp_pass(n, float(params.alpha),
                                                float(params.beta), seeds, lengths)
    else:
        raise ValueError(f"unknown CFTP method {method!r}")
    seeds = [_seed_from(rng)]
    lengths = [sweep]
    horizon = 1
    while True:
        out = run(np.array(seeds, dtype=np.int64), np.array(lengths, dtype=np.int64))
        if out[0]:
            if method == "cluster":
                return IsingLattice(_fk_to_spins(out[1], out[2], _seed_from(rng)))
            return IsingLattice(out[1])
        if 2 * horizon > max_sweeps:
            raise CoalescenceError(
                f"no coalescence within {horizon} sweeps for n={n}, {params}")
        seeds.append(_seed_from(rng))
        lengths.append(horizon * sweep)
        horizon *= 2


# ---------------------------------------------------------------------------
# exact partition functions


def brute_force_logZ(n, params):
    """Log partition function by enumerating all 2^(N^2) configurations."""
    if n > 4:
        raise SizeError(f"brute force enumeration limited to n <= 4, got {n}")
    if n < 1:
        raise SizeError("n must be positive")
    k = n * n
    codes = np.arange(2**k, dtype=np.int64)
    bits = (codes[:, None] >> np.arange(k)) & 1
    spins = (2 * bits - 1).reshape(-1, n, n)
    mag = spins.sum(axis=(1, 2))
    bonds = (spins * np.roll(spins, -1, axis=2)).sum(axis=(1, 2)) \
        + (spins * np.roll(spins, -1, axis=1)).sum(axis=(1, 2))
    return float(logsumexp(params.alpha * mag + params.beta * bonds))


def _row_tables(n):
    codes = np.arange(2**n)
    rows = 2 * ((codes[:, None] >> np.arange(n)) & 1) - 1
    mag = rows.sum(axis=1)
    horiz = (rows * np.roll(rows, -1, axis=1)).sum(axis=1)
    vert = rows @ rows.T
    return mag, horiz, vert


def transfer_matrix_logZ(n, params, method="eig", cap=12):
    """Log partition function via the row-to-row transfer operator.

    ``Z = trace(T^N)`` with ``T[s, s'] = exp(a(s)/2 + b*V(s, s') + a(s')/2)``
    where ``a(s) = alpha*M(s) + beta*H(s)`` collects the in-row terms. The
    default ``method="eig"`` sums ``lambda_i^N`` over the spectrum of the
    symmetric matrix; ``method="power"`` forms the N-th power by repeated
    squaring, renormalising after every product and carrying the scale in
    log space. The dense 2^N x 2^N matrix bounds ``n`` by ``cap``.
    """
    if n < 1:
        raise SizeError("n must be positive")
    if n > cap:
        raise SizeError(f"transfer matrix limited to n <= {cap}, got {n}")
    mag, horiz, vert = _row_tables(n)
    a = params.alpha * mag + params.beta * horiz
    log_t = 0.5 * a[:, None] + params.beta * vert + 0.5 * a[None, :]
    shift = log_t.max()
    t = np.exp(log_t - shift)
    if method == "eig":
        lam = np.linalg.eigvalsh(t)
        mags = np.abs(lam)
        keep = mags > 0
        if n % 2 == 0:
            signs = np.ones(keep.sum())
        else:
            signs = np.sign(lam[keep])
        val, sgn = logsumexp(n * np.log(mags[keep]), b=signs, return_sign=True)
        if sgn <= 0:
            raise ArithmeticError("non-positive trace from spectrum")
        return float(val + n * shift)
    if method == "power":
        log_scale = 0.0
        result = None
        result_scale = 0.0
        base = t
        e = n
        while e:
            if e & 1:
                if result is None:
                    result, result_scale = base.copy(), log_scale
                else:
                    result = result @ base
                    s = np.abs(result).max()
                    result /= s
                    result_scale += log_scale + math.log(s)
            e >>= 1
            if e:
                base = base @ base
                s = np.abs(base).max()
                base /= s
                log_scale = 2 * log_scale + math.log(s)
        tr = np.trace(result)
        return float(math.log(tr) + result_scale + n * shift)
    raise ValueError(f"unknown method {method!r}")


class ChebyshevLogZ:
    """Chebyshev interpolant of ``beta -> log Z(alpha, beta)`` on an interval.

    log Z is analytic in beta on a finite lattice, so a modest number of
    nodes reaches near machine precision. ``max_error`` records the largest
    discrepancy against direct transfer-matrix evaluations at the midpoints
    between nodes.
    """

    def __init__(self, n, alpha, lower, upper, degree=96, method="eig"):
        self.n, self.alpha = n, alpha
        self.lower, self.upper = lower, upper
        k = np.arange(degree + 1)
        x = np.cos(np.pi * (k + 0.5) / (degree + 1))
        betas = self._from_unit(x)
        vals = [transfer_matrix_logZ(n, IsingParams(alpha, b), method=method) for b in betas]
        self.coef = np.polynomial.chebyshev.chebfit(x, vals, degree)
        mid = self._from_unit(np.cos(np.pi * (k[:-1] + 1.0) / (degree + 1)))
        check = np.array([transfer_matrix_logZ(n, IsingParams(alpha, b), method=method)
                          for b in mid[::max(1, degree // 8)]])
        self.max_error = float(np.max(np.abs(self(mid[::max(1, degree // 8)]) - check)))

    def _from_unit(self, x):
        return self.lower + 0.5 * (x + 1.0) * (self.upper - self.lower)

    def __call__(self, beta):
        beta = np.asarray(beta, dtype=float)
        if np.any(beta < self.lower) or np.any(beta > self.upper):
            raise ValueError(f"beta outside interpolation range [{self.lower}, {self.upper}]")
        x = 2.0 * (beta - self.lower) / (self.upper - self.lower) - 1.0
        out = np.polynomial.chebyshev.chebval(x, self.coef)
        return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# annealing target for the normalizer estimators


class IsingModel:
    """Annealable Ising target on an N x N torus.

    The base measure is uniform over spins (``log Z_0 = N^2 log 2``) and the
    path is geometric, ``f_t = f^{b_t}``, tempering field and coupling
    together. ``anneal`` is the fused fast path used by the normalizer
    estimators; the vectorised hooks serve the generic driver.
    """

    def __init__(self, n):
        self.n = n

    @property
    def log_z0(self):
        return self.n * self.n * LOG2

    def anneal(self, params, fracs, n_particles, updates_per_temp, resample_threshold, rng):
        val, n_res, bad_p, bad_t = _anneal(
            self.n, float(params.alpha), float(params.beta),
            np.asarray(fracs, dtype=float), int(n_particles), int(updates_per_temp),
            float(resample_threshold), _seed_from(rng))
        if bad_p >= 0:
            raise DegenerateWeights(
                f"non-finite AIS weight at particle {bad_p}, temperature {bad_t}")
        return float(val), int(n_res)

    # generic-driver hooks ------------------------------------------------

    def init_particles(self, n_particles, rng):
        return [IsingLattice.random(self.n, rng) for _ in range(n_particles)]

    def log_f(self, particles, params):
        return np.array([unnorm_loglik(x, params) for x in particles], dtype=float)

    def move(self, particles, params, frac, n_updates, rng):
        tempered = IsingParams(frac * params.alpha, frac * params.beta)
        for x in particles:
            gibbs_sweep(x, tempered, n_updates, rng)
        return particles

    def copy_particles(self, particles, idx):
        return [particles[i].copy() for i in idx]


# ---------------------------------------------------------------------------
# exchange algorithm


def exchange_step(theta, data, sampler, propose, log_prior, to_params, rng):
    """One exchange-algorithm update of ``theta`` given a data lattice.

    ``sampler(params, rng)`` returns an auxiliary lattice drawn exactly (or
    approximately) from the model at ``params``. Returns
    ``(theta_new, accepted, log_alpha)``.
    """
    return exchange_update(theta, data, lambda x, th: unnorm_loglik(x, to_params(th)),
                           lambda th, r: sampler(to_params(th), r), propose, log_prior, rng)


def exact_sampler(n, max_sweeps=2**20):
    """Sampler for :func:`exchange_step` backed by :func:`cftp_sample`."""
    def draw(params, rng):
        return cftp_sample(n, params, rng, max_sweeps=max_sweeps)
    return draw


def gibbs_sampler(start, n_steps):
    """Approximate sampler: ``n_steps`` heat-bath updates started from ``start``."""
    def draw(params, rng):
        return gibbs_sweep(start.copy(), params, n_steps, rng)
    return draw
