"""
Fisher-Bingham (Bingham) distribution on the unit sphere in R^3.

Density ``p(y) = exp(sum_i lam_i y_i^2) / Z(lam)`` for ``|y| = 1``. Adding
a constant to every ``lam_i`` only rescales ``Z``, so parameters are kept
in normal form ``0 = lam_1 >= lam_2 >= lam_3``; then the exponent is never
positive and ``Z <= 4 pi``.
"""

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import integrate, special
from scipy.special import logsumexp

from .errors import QuadratureError
from .normalizers import is_partition_estimate

FOUR_PI = 4.0 * math.pi
LOG_FOUR_PI = math.log(FOUR_PI)


@dataclass(frozen=True)
class BinghamParams:
    """Diagonal exponents ``(lam_1, lam_2, lam_3)`` in normal form."""

    lam: tuple

    def __post_init__(self):
        lam = tuple(float(v) for v in np.ravel(self.lam))
        if len(lam) != 3:
            raise ValueError("only the 2-sphere in R^3 is supported (three exponents)")
        if not all(math.isfinite(v) for v in lam):
            raise ValueError("exponents must be finite")
        if lam[0] != 0.0 or not lam[0] >= lam[1] >= lam[2]:
            raise ValueError(f"exponents {lam} not in normal form 0 = l1 >= l2 >= l3")
        object.__setattr__(self, "lam", lam)

    @classmethod
    def normal_form(cls, lam):
        """Sort descending and shift so the largest exponent is 0.

        Returns the params and the shift ``s``; ``Z(lam) = exp(s) Z(normal)``.
        """
        lam = np.sort(np.asarray(lam, dtype=float))[::-1]
        return cls(tuple(lam - lam[0])), float(lam[0])

    @classmethod
    def from_lambda3(cls, lam3):
        return cls((0.0, 0.0, float(lam3)))


def unnorm_logdensity(y, params):
    """``sum_i lam_i y_i^2`` for points ``y`` of shape (..., 3)."""
    y = np.asarray(y, dtype=float)
    out = (y * y) @ np.asarray(params.lam)
    return float(out) if out.ndim == 0 else out


def sample_uniform_sphere(rng, size=None):
    """Uniform points on the sphere (normalised 3-D Gaussians)."""
    shape = (3,) if size is None else (size, 3)
    g = rng.standard_normal(shape)
    return g / np.linalg.norm(g, axis=-1, keepdims=True)


class UniformSphere:
    """Uniform proposal on the sphere, density ``1 / (4 pi)``."""

    def sample(self, n, rng):
        return sample_uniform_sphere(rng, n)

    def logpdf(self, x):
        return np.full(np.shape(x)[0], -LOG_FOUR_PI)


def _ring_integral(lam1, lam2, s2):
    # int_0^{2pi} exp(s2 (lam1 cos^2 + lam2 sin^2)) dphi, via the Bessel identity
    a, b = s2 * lam1, s2 * lam2
    h = 0.5 * (a - b)
    return 2.0 * math.pi * math.exp(0.5 * (a + b) + abs(h)) * special.ive(0, h)


def _epsrel(tolerance):
    # quad refuses relative targets near machine precision; unreachable
    # tolerances then surface through the error check instead
    return max(0.1 * tolerance, 1e-13)


def bingham_Z_quadrature(params, tolerance=1e-10):
    """Normalizing constant by adaptive quadrature over ``u = y_3``.

    Writing ``y = (s cos phi, s sin phi, u)`` with ``s^2 = 1 - u^2``, the
    azimuthal integral has the closed form
    ``2 pi exp((a + b) / 2) I_0((a - b) / 2)`` with ``a = s^2 lam_1`` and
    ``b = s^2 lam_2``, leaving a smooth 1-D integral in ``u``. For
    ``lam_1 = lam_2 = 0`` this is ``2 pi int exp(lam_3 u^2) du``.

    Raises
    ------
    QuadratureError
        If the reported absolute error exceeds ``tolerance * Z``.
    """
    l1, l2, l3 = params.lam

    def integrand(u):
        return math.exp(l3 * u * u) * _ring_integral(l1, l2, 1.0 - u * u)

    val, err = integrate.quad(integrand, -1.0, 1.0, epsabs=0.0, epsrel=_epsrel(tolerance),
                              limit=200)
    if not err <= tolerance * abs(val):
        raise QuadratureError(f"quadrature error {err:.3g} above tolerance", val, err)
    return val


def bingham_moment_y3sq(params, tolerance=1e-10):
    """``E[y_3^2]`` by the same 1-D quadrature."""
    l1, l2, l3 = params.lam

    def integrand(u):
        return u * u * math.exp(l3 * u * u) * _ring_integral(l1, l2, 1.0 - u * u)

    num, err = integrate.quad(integrand, -1.0, 1.0, epsabs=0.0, epsrel=_epsrel(tolerance),
                              limit=200)
    return num / bingham_Z_quadrature(params, tolerance)


def z_tilde_upper_bound(params):
    """``4 pi exp(max lam)``; equals ``4 pi`` in normal form and bounds ``Z``."""
    return FOUR_PI * math.exp(max(params.lam))


def is_log_z(params, n, rng):
    """Importance-sampling estimate of ``log Z`` with a uniform proposal."""
    return is_partition_estimate(lambda x: unnorm_logdensity(x, params), UniformSphere(), n, rng)


class Lambda3Source:
    """Normalizer source for ``theta = [lam_3]`` with ``lam_1 = lam_2 = 0``."""

    def __init__(self, n_samples):
        self.n_samples = int(n_samples)

    def __call__(self, theta, rng):
        # the density only sees y_3, and under the uniform sphere |y_3| is
        # Uniform(0, 1), so this is uniform-sphere IS without the 3-D draws
        lam3 = float(np.ravel(theta)[0])
        u = rng.random(self.n_samples)
        a = lam3 * u * u
        m = float(np.exp(a).mean()) if lam3 <= 0 else 0.0
        if m > 0.0:
            return LOG_FOUR_PI + math.log(m)
        return LOG_FOUR_PI + float(logsumexp(a)) - math.log(self.n_samples)


def _tangent_step(y, step, rng):
    v = rng.standard_normal(y.shape)
    v -= np.sum(v * y, axis=-1, keepdims=True) * y
    z = y + step * v
    return z / np.linalg.norm(z, axis=-1, keepdims=True)


def simulate_bingham_data(params, n_points, rng, thin=100, burn_in=1000, step=0.5,
                          n_chains=None):
    """Draw points by random-walk Metropolis on the sphere.

    Proposals perturb the current point in its tangent plane and project
    back; the move is symmetric, so the acceptance ratio is the density
    ratio. ``n_chains`` independent chains (default ``min(n_points, 100)``)
    run side by side, each keeping one point every ``thin`` steps after
    ``burn_in`` steps.
    """
    if n_points < 1:
        raise ValueError("n_points must be at least 1")
    if thin < 100:
        raise ValueError("thinning below 100 steps is not allowed")
    k = n_chains or min(n_points, 100)
    per_chain = -(-n_points // k)
    y = sample_uniform_sphere(rng, k)
    ly = unnorm_logdensity(y, params)
    out = np.empty((per_chain, k, 3))
    for t in range(burn_in + per_chain * thin):
        z = _tangent_step(y, step, rng)
        lz = unnorm_logdensity(z, params)
        acc = np.log(rng.random(k)) < lz - ly
        y[acc], ly[acc] = z[acc], lz[acc]
        if t >= burn_in and (t - burn_in + 1) % thin == 0:
            out[(t - burn_in) // thin] = y
    return out.reshape(-1, 3)[:n_points]


def rejection_sample_bingham(params, n, rng):
    """Exact draws: accept uniform ``y`` with probability ``exp(sum lam y^2)``."""
    out = []
    need = n
    while need > 0:
        y = sample_uniform_sphere(rng, max(2 * need, 64))
        keep = y[np.log(rng.random(len(y))) < unnorm_logdensity(y, params)]
        out.append(keep[:need])
        need -= len(out[-1])
    return np.concatenate(out)


def save_points(points, path):
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y", "z"])
        for p in np.asarray(points):
            w.writerow([repr(float(v)) for v in p])


def load_points(path):
    """Read an ``x,y,z`` CSV and renormalise each row to unit length."""
    with Path(path).open() as fh:
        rows = list(csv.reader(fh))
    if rows and rows[0] == ["x", "y", "z"]:
        rows = rows[1:]
    pts = np.array([[float(v) for v in r] for r in rows if r], dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ValueError("point file must have three columns")
    norms = np.linalg.norm(pts, axis=1, keepdims=True)
    if np.any(np.abs(norms - 1.0) > 1e-6):
        raise ValueError("points are not on the unit sphere")
    return pts / norms
