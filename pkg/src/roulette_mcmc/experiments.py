"""
End-to-end experiment runs: data, estimators, chains, artifacts.

Every random quantity comes from a named substream of the run seed
(``data``, ``pilot``, ``chain``), so changing e.g. the pilot settings never
perturbs the simulated dataset.
"""

import csv
import hashlib
import json
import logging
import math
import time
from pathlib import Path

import numpy as np
from scipy.optimize import minimize_scalar

from . import bingham as bg
from . import ising as im
from .errors import ConfigError, DatasetMismatch
from .estimators import (ExponentialAuxiliary, PilotTable, SignedValue, TiltingPlan,
                         exponential_estimate, geometric_estimate)
from .normalizers import AISSource, AnnealingLadder
from .pm_mcmc import (ess, exchange_kernel, pm_kernel, run_chain,
                      sign_corrected_expectation)
from .truncation import PoissonIndex, RouletteSchedule

log = logging.getLogger(__name__)

SCHEMA = 1
CSV_TAIL = ["sign", "log_abs_estimate", "accepted", "n_terms", "n_normalizer_draws"]


def substream(seed, label, index=0):
    """Generator for the named stream ``(label, index)`` of a root seed."""
    key = int.from_bytes(hashlib.sha256(label.encode()).digest()[:8], "little")
    return np.random.default_rng(np.random.SeedSequence([int(seed), key, int(index)]))


def sha256_bytes(data):
    return hashlib.sha256(data).hexdigest()


class IsingBeta:
    """Map ``theta = [beta]`` to Ising parameters with a fixed field."""

    def __init__(self, alpha=0.0):
        self.alpha = float(alpha)

    def __call__(self, theta):
        return im.IsingParams(self.alpha, float(np.ravel(theta)[0]))


class UniformPrior:
    """Log density of Uniform[low, high] for a scalar parameter."""

    def __init__(self, low, high):
        self.low, self.high = float(low), float(high)
        self._lp = -math.log(self.high - self.low)

    def __call__(self, theta):
        t = float(np.ravel(theta)[0])
        return self._lp if self.low <= t <= self.high else -math.inf


def _combine(parts, log_extra=0.0):
    """Product of independent signed estimates with summed cost counters."""
    lm, sign = log_extra, 1
    for p in parts:
        if p.sign == 0:
            return SignedValue(-math.inf, 0, sum(q.n_terms for q in parts),
                               sum(q.n_draws for q in parts))
        lm += p.log_magnitude
        sign *= p.sign
    return SignedValue(lm, sign, sum(p.n_terms for p in parts),
                       sum(p.n_draws for p in parts), any(p.capped for p in parts),
                       parts[0].aux if parts else None,
                       sum(p.log_aux_density for p in parts))


def pseudo_likelihood_beta(lattice, alpha, low, high):
    """Maximum pseudo-likelihood coupling, used only as a chain start."""
    s = lattice.spins
    nb = (np.roll(s, 1, 0) + np.roll(s, -1, 0) + np.roll(s, 1, 1) + np.roll(s, -1, 1)).ravel()
    if lattice.n == 1:
        nb = np.zeros(1)
    y = s.ravel()

    def neg(b):
        eta = alpha + b * nb
        return -float(np.sum(y * eta - np.logaddexp(eta, -eta)))
    return float(minimize_scalar(neg, bounds=(low, high), method="bounded").x)


# ---------------------------------------------------------------------------
# data


def ising_data(cfg, out_dir):
    """Load or simulate the data lattice; returns (lattice, digest)."""
    c = cfg.ising
    if c.data:
        path = Path(c.data)
        try:
            raw = path.read_bytes()
        except OSError as err:
            raise ConfigError(f"cannot read ising data {path}: {err}") from err
        lat = im.IsingLattice.from_text(raw.decode())
        if lat.n != c.n:
            raise ConfigError(f"data lattice is {lat.n}x{lat.n}, config says n = {c.n}")
        return lat, sha256_bytes(raw)
    lat = im.cftp_sample(c.n, im.IsingParams(c.alpha, c.beta_true),
                         substream(cfg.run.seed, "data"), max_sweeps=cfg.exchange.max_sweeps)
    text = lat.to_text()
    (out_dir / "data.txt").write_text(text)
    return lat, sha256_bytes(text.encode())


def bingham_data(cfg, out_dir):
    """Load or simulate the point set; returns (points, digest)."""
    c = cfg.bingham
    if c.data:
        path = Path(c.data)
        try:
            raw = path.read_bytes()
        except OSError as err:
            raise ConfigError(f"cannot read bingham data {path}: {err}") from err
        return bg.load_points(path), sha256_bytes(raw)
    pts = bg.simulate_bingham_data(bg.BinghamParams.from_lambda3(c.lambda3_true), c.n_points,
                                   substream(cfg.run.seed, "data"), thin=c.thin)
    path = out_dir / "data.csv"
    bg.save_points(pts, path)
    return bg.load_points(path), sha256_bytes(path.read_bytes())


# ---------------------------------------------------------------------------
# kernels


def _pilot_nodes(low, high, step):
    k = int(round((high - low) / step))
    return np.linspace(low, high, k + 1)


def ising_kernel(cfg, data):
    """Kernel and extra metadata for an Ising run."""
    c, e, method = cfg.ising, cfg.estimator, cfg.run.method
    to_params = IsingBeta(c.alpha)
    prior = UniformPrior(*c.prior)

    def log_f(theta):
        return im.unnorm_loglik(data, to_params(theta))

    if method in ("exchange_exact", "exchange_approx"):
        if method == "exchange_exact":
            def sampler(theta, rng):
                return im.cftp_sample(c.n, to_params(theta), rng,
                                      max_sweeps=cfg.exchange.max_sweeps)
        else:
            def sampler(theta, rng):
                return im.gibbs_sweep(data.copy(), to_params(theta),
                                      cfg.exchange.gibbs_steps, rng)
        return exchange_kernel(data, lambda x, th: im.unnorm_loglik(x, to_params(th)),
                               sampler, prior), {}

    if method == "exact_reference":
        if c.n <= 4:
            def log_z(t):
                return im.brute_force_logZ(c.n, to_params(t))
            extra = {"log_z_method": "enumeration"}
        else:
            cheb = im.ChebyshevLogZ(c.n, c.alpha, c.prior[0], c.prior[1])
            log_z = cheb
            extra = {"log_z_method": "transfer_matrix_chebyshev",
                     "log_z_max_error": cheb.max_error}

        def estimator(theta, rng):
            return SignedValue(log_f(theta) - float(log_z(float(theta[0]))), 1)
        return pm_kernel(estimator, prior), extra

    model = im.IsingModel(c.n)
    ladder = AnnealingLadder(e.n_temps, e.n_samples, e.sweeps_per_temp)
    source = AISSource(model, to_params, ladder, e.resample_threshold)
    table = PilotTable(_pilot_nodes(c.prior[0], c.prior[1], e.pilot_step), source,
                       e.pilot_draws, e.kappa_target, substream(cfg.run.seed, "pilot"),
                       positivity_sd=e.positivity_sd, q_min=e.q_min, q_max=e.q_max,
                       relaxed_kappa=e.relaxed_kappa, workers=cfg.run.workers)
    extra = {"pilot_nodes": int(table.nodes.size), "pilot_relaxed_nodes": table.relaxed}
    return _series_kernel(method, e, table, source, log_f, prior), extra


def _series_kernel(method, e, table, source, log_f, prior):
    poisson = PoissonIndex(e.poisson_lambda)

    def schedule(plan):
        return RouletteSchedule.constant(e.q if e.q is not None else plan.q, e.safety_cap)

    if method == "roulette_geometric":
        def estimator(theta, rng):
            plan = table(theta)
            return geometric_estimate(theta, log_f(theta), plan, source, schedule(plan), rng)
    elif method == "poisson_geometric":
        def estimator(theta, rng):
            return geometric_estimate(theta, log_f(theta), table(theta), source, poisson, rng)
    elif method == "exponential_series":
        def estimator(theta, rng):
            plan = table(theta)
            # reference Z_tilde / c keeps 1 - Z_hat / reference mostly non-negative
            ref = TiltingPlan(plan.log_z_tilde - math.log(plan.c), 1.0, q=plan.q)
            aux, lad = ExponentialAuxiliary.draw(ref.log_z_tilde, rng)
            return exponential_estimate(theta, log_f(theta), aux, ref, source,
                                        schedule(plan), rng, log_aux_density=lad)
    else:
        raise ConfigError(f"unsupported method {method!r}")
    return pm_kernel(estimator, prior)


def bingham_kernel(cfg, data):
    c, e, method = cfg.bingham, cfg.estimator, cfg.run.method
    prior = UniformPrior(*c.prior)
    s3 = float(np.sum(data[:, 2] ** 2))
    n = data.shape[0]

    def log_f(theta):
        return float(np.ravel(theta)[0]) * s3

    if method in ("exchange_exact", "exchange_approx"):
        if method == "exchange_exact":
            def sampler(theta, rng):
                return bg.rejection_sample_bingham(
                    bg.BinghamParams.from_lambda3(theta[0]), n, rng)
        else:
            def sampler(theta, rng):
                return bg.simulate_bingham_data(
                    bg.BinghamParams.from_lambda3(theta[0]), n, rng, thin=c.thin,
                    burn_in=c.thin)
        return exchange_kernel(data, lambda x, th: float(th[0]) * float(np.sum(x[:, 2] ** 2)),
                               sampler, prior), {}

    if method == "exact_reference":
        def estimator(theta, rng):
            z = bg.bingham_Z_quadrature(bg.BinghamParams.from_lambda3(theta[0]))
            return SignedValue(log_f(theta) - n * math.log(z), 1)
        return pm_kernel(estimator, prior), {}

    source = bg.Lambda3Source(e.is_samples)
    q = e.q if e.q is not None else e.q_max
    bound = TiltingPlan(bg.LOG_FOUR_PI, 1.0, q=q)
    scheme = (PoissonIndex(e.poisson_lambda) if method == "poisson_geometric"
              else RouletteSchedule.constant(q, e.safety_cap))

    if method in ("roulette_geometric", "poisson_geometric"):
        def estimator(theta, rng):
            parts = [geometric_estimate(theta, 0.0, bound, source, scheme, rng)
                     for _ in range(n)]
            return _combine(parts, log_f(theta))
    elif method == "exponential_series":
        def estimator(theta, rng):
            parts = []
            for _ in range(n):
                aux, lad = ExponentialAuxiliary.draw(bound.log_z_tilde, rng)
                parts.append(exponential_estimate(theta, 0.0, aux, bound, source, scheme,
                                                  rng, log_aux_density=lad))
            return _combine(parts, log_f(theta))
    else:
        raise ConfigError(f"unsupported method {method!r}")
    return pm_kernel(estimator, prior), {"z_tilde": bg.FOUR_PI, "roulette_q": q}


# ---------------------------------------------------------------------------
# artifacts


def summarize(thetas, signs, names, burn_in):
    """Posterior summaries of the post-burn-in part of a chain."""
    thetas = np.asarray(thetas, dtype=float).reshape(len(signs), -1)
    signs = np.asarray(signs)
    post_t, post_s = thetas[burn_in:], signs[burn_in:]
    params = {}
    sc = None
    for k, name in enumerate(names):
        h = post_t[:, k]
        sc = sign_corrected_expectation(h, post_s)
        second = float(np.sum(post_s * h * h) / np.sum(post_s))
        params[name] = {
            "mean": sc.estimate,
            "sd": math.sqrt(max(second - sc.estimate**2, 0.0)),
            "ess": ess(h) if h.size >= 10 else float(h.size),
            "ess_sign_corrected": sc.ess,
            "mc_variance": sc.variance,
            "v_hat": sc.v_hat,
        }
    first = params[names[0]]
    return {
        "mean": first["mean"], "sd": first["sd"], "ess": first["ess"],
        "mc_variance": first["mc_variance"],
        "r_hat": sc.r_hat, "negative_fraction": sc.negative_fraction,
        "params": params,
    }


def _format_row(i, rec):
    return ([i] + [repr(t) for t in rec.theta]
            + [rec.sign, repr(rec.log_abs_estimate), int(rec.accepted),
               rec.n_terms, rec.n_normalizer_draws])


def run_experiment(cfg, out_dir=None):
    """Run one configured experiment and write its artifacts.

    Writes ``chain.csv``, ``summary.json`` and ``run.log`` (plus the
    simulated data file when none was supplied) into the output directory
    and returns the summary dictionary. The chain CSV is flushed row by row,
    so an aborted run leaves its partial chain behind.
    """
    out = Path(out_dir or cfg.run.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    handler = logging.FileHandler(out / "run.log", mode="w")
    handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s"))
    pkg_log = logging.getLogger("roulette_mcmc")
    pkg_log.addHandler(handler)
    old_level = pkg_log.level
    if pkg_log.getEffectiveLevel() > logging.INFO:
        pkg_log.setLevel(logging.INFO)
    try:
        return _run(cfg, out)
    finally:
        pkg_log.removeHandler(handler)
        pkg_log.setLevel(old_level)
        handler.close()


def _run(cfg, out):
    t0 = time.perf_counter()
    r = cfg.run
    log.info("config digest %s, method %s, model %s", cfg.digest(), r.method, r.model)
    if r.model == "ising":
        data, digest = ising_data(cfg, out)
        names = ["beta"]
        init = cfg.ising.init
        if init is None:
            init = pseudo_likelihood_beta(data, cfg.ising.alpha, *cfg.ising.prior)
        kernel, extra = ising_kernel(cfg, data)
    else:
        data, digest = bingham_data(cfg, out)
        names = ["lambda3"]
        init = cfg.bingham.init
        if init is None:
            init = 0.5 * (cfg.bingham.prior[0] + cfg.bingham.prior[1])
        kernel, extra = bingham_kernel(cfg, data)
    log.info("dataset digest %s, start %r", digest, init)

    with (out / "chain.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iter"] + names + CSV_TAIL)

        def write(i, rec):
            w.writerow(_format_row(i, rec))
            if i % 1000 == 0:
                fh.flush()

        res = run_chain([init], r.n_iters, cfg.burn_in, kernel, substream(r.seed, "chain"),
                        scale=cfg.proposal.scale, target_accept=cfg.proposal.target_accept,
                        adapt=cfg.proposal.adapt, seed=r.seed, on_record=write)

    meta = res.metadata
    summary = {"schema": SCHEMA, "model": r.model, "method": r.method}
    if res.records:
        summary.update(summarize([rec.theta for rec in res.records],
                                 [rec.sign for rec in res.records], names, cfg.burn_in))
    summary.update({
        "param_names": names,
        "init": float(init),
        "acceptance_rate": meta["acceptance_rate"],
        "negative_count": meta["negative_count"],
        "capped_count": meta["capped_count"],
        "total_normalizer_draws": meta["total_normalizer_draws"],
        "zero_sign_resamples": meta["zero_sign_resamples"],
        "proposal_scale": meta["scale"],
        "n_iters": r.n_iters,
        "burn_in": cfg.burn_in,
        "seed": r.seed,
        "config_digest": cfg.digest(),
        "dataset_digest": digest,
        "extra": extra,
        "wall_time": time.perf_counter() - t0,
    })
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    log.info("finished in %.1f s", summary["wall_time"])
    return summary


def read_chain_csv(path):
    """Parameter names, parameter array and sign array of a chain CSV."""
    with Path(path).open() as fh:
        rows = list(csv.reader(fh))
    header = rows[0]
    if header[0] != "iter" or header[-len(CSV_TAIL):] != CSV_TAIL:
        raise ValueError(f"{path} is not a chain CSV")
    names = header[1 : len(header) - len(CSV_TAIL)]
    body = np.array([[float(v) for v in r] for r in rows[1:]], dtype=float)
    if body.size == 0:
        body = body.reshape(0, len(header))
    return names, body[:, 1 : 1 + len(names)], body[:, 1 + len(names)].astype(int)


def diagnose(csv_path, burn_in=None):
    """Recompute posterior summaries and sign diagnostics from a chain CSV."""
    names, thetas, signs = read_chain_csv(csv_path)
    b = len(signs) // 2 if burn_in is None else burn_in
    if not 0 <= b < len(signs):
        raise ValueError("burn_in must leave at least one record")
    out = summarize(thetas, signs, names, b)
    out.update({"schema": SCHEMA, "n_records": int(len(signs)), "burn_in": b,
                "negative_count": int(np.sum(signs < 0))})
    return out


def compare_runs(paths):
    """Side-by-side table of summaries plus pairwise z-scores of means.

    ``z = (m_1 - m_2) / sqrt(v_1 + v_2)`` uses each run's reported Monte
    Carlo variance of its mean.

    Raises
    ------
    DatasetMismatch
        If the summaries were produced on different datasets.
    """
    if len(paths) < 2:
        raise ValueError("need at least two summaries")
    sums = [json.loads(Path(p).read_text()) for p in paths]
    digests = {s["dataset_digest"] for s in sums}
    if len(digests) != 1:
        raise DatasetMismatch(f"summaries use {len(digests)} different datasets")
    labels = [f"{s['method']}[{i}]" for i, s in enumerate(sums)]
    rows = [{"run": lab, "mean": s["mean"], "sd": s["sd"], "ess": s["ess"],
             "negative_fraction": s["negative_fraction"], "r_hat": s["r_hat"]}
            for lab, s in zip(labels, sums)]
    z = {}
    for i in range(len(sums)):
        for j in range(i + 1, len(sums)):
            d = sums[i]["mean"] - sums[j]["mean"]
            v = sums[i]["mc_variance"] + sums[j]["mc_variance"]
            z[f"{labels[i]} vs {labels[j]}"] = 0.0 if d == 0 else (d / math.sqrt(v) if v > 0
                                                                   else math.copysign(math.inf, d))
    return {"dataset_digest": digests.pop(), "rows": rows, "z_scores": z}


def format_report(report):
    lines = [f"dataset {report['dataset_digest'][:16]}",
             f"{'run':<28}{'mean':>10}{'sd':>10}{'ess':>10}{'neg.frac':>10}{'r_hat':>8}"]
    for r in report["rows"]:
        lines.append(f"{r['run']:<28}{r['mean']:>10.4f}{r['sd']:>10.4f}{r['ess']:>10.0f}"
                     f"{r['negative_fraction']:>10.4f}{r['r_hat']:>8.3f}")
    lines.append("pairwise z-scores of mean differences:")
    for k, v in report["z_scores"].items():
        lines.append(f"  {k:<56}{v:>8.2f}")
    return "\n".join(lines)
