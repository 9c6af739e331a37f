"""Hermite functionals of the field on a cap and cumulant estimators."""

from __future__ import annotations

from dataclasses import dataclass
import math
import warnings

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import special, stats

from .field import HarmonicField, field_on_grid
from .nodal import CapDomain, DiscretizationWarning, boundary_arrays

__all__ = [
    "ChaosStats",
    "InsufficientSamplesError",
    "hermite",
    "local_trispectrum",
    "second_chaos_projection",
    "chaos_stats",
    "cumulant4",
    "standardized_cumulant4",
    "ALPHA_02",
    "BETA_0",
]

# Coefficients of the second-order term in the expansion of the nodal
# length: alpha_{0,2} from the gradient-norm part, beta_0 the standard
# Gaussian density at the zero level.
ALPHA_02 = math.sqrt(math.pi / 2.0) / 2.0
BETA_0 = 1.0 / math.sqrt(2.0 * math.pi)

MIN_QUAD_N = 64
MIN_BOUNDARY_NODES = 128


class InsufficientSamplesError(ValueError):
    pass


@dataclass(frozen=True)
class ChaosStats:
    h4: float
    m_local: float
    proj2: float | None = None


def hermite(n: int, x):
    """Probabilists' Hermite polynomial He_n, n <= 8."""
    if not 0 <= n <= 8 or int(n) != n:
        raise ValueError("hermite order must be an integer in [0, 8]")
    out = special.eval_hermitenorm(int(n), x)
    return float(out) if np.ndim(out) == 0 else out


def _h4_integral(f: HarmonicField, radius: float, n_theta: int, n_phi: int) -> float:
    x, w = leggauss(n_theta)
    theta = 0.5 * radius * (x + 1.0)
    weights = 0.5 * radius * w * np.sin(theta)
    phi = 2.0 * math.pi * np.arange(n_phi) / n_phi
    t2 = field_on_grid(f, theta, phi) ** 2
    h = t2 * (t2 - 6.0) + 3.0
    return float(weights @ h.sum(axis=1)) * (2.0 * math.pi / n_phi)


def local_trispectrum(f: HarmonicField, cap: CapDomain, quad_n: int | None = None) -> ChaosStats:
    """Integral of He_4(T) over the cap and the scaled trispectrum.

    Gauss-Legendre in colatitude times the trapezoid rule in longitude.
    He_4(T) is a trigonometric polynomial of degree 4l in longitude, so the
    longitude rule is exact with more than 4l nodes.  In colatitude the
    node count defaults to 1.5 l r + 16, which resolves the integrand to
    rounding error; ``quad_n`` raises it further.
    """
    ell = f.degree
    n_theta = max(MIN_QUAD_N, math.ceil(1.5 * ell * cap.radius) + 16)
    if quad_n is not None:
        if quad_n < MIN_QUAD_N:
            raise ValueError(f"quad_n must be at least {MIN_QUAD_N}")
        n_theta = max(n_theta, int(quad_n))
    n_phi = max(int(quad_n or 0), 4 * ell + 4)
    h4 = _h4_integral(f, cap.radius, n_theta, n_phi)
    check = _h4_integral(f, cap.radius, n_theta - 8, n_phi)
    if abs(h4 - check) > 1e-6 * cap.area:
        warnings.warn(f"He_4 cap integral not converged (change {abs(h4 - check):.3g})",
                      DiscretizationWarning, stacklevel=2)
    lam = ell * (ell + 1)
    m_local = -0.25 * math.sqrt(lam / 2.0) / 24.0 * h4
    return ChaosStats(h4, m_local)


def second_chaos_projection(f: HarmonicField, cap: CapDomain, n_nodes: int | None = None) -> float:
    """Second-order chaos component of the cap nodal length.

    It reduces to a boundary integral of T (d_theta T + d_phi T / sin theta)
    over the cap rim, evaluated with the trapezoid rule.  The integrand is
    a trigonometric polynomial of degree 2l, so more than 2l nodes make the
    rule exact.
    """
    ell = f.degree
    n = max(MIN_BOUNDARY_NODES, 2 * ell + 2)
    if n_nodes is not None:
        if n_nodes < MIN_BOUNDARY_NODES:
            raise ValueError(f"n_nodes must be at least {MIN_BOUNDARY_NODES}")
        n = max(n, int(n_nodes))
    _, values, g_theta, g_phi = boundary_arrays(f, cap.radius, n)
    ds = 2.0 * math.pi * math.sin(cap.radius) / n
    integral = float(np.sum(values * (g_theta + g_phi))) * ds
    lam = ell * (ell + 1)
    return 0.5 * math.sqrt(2.0 / lam) * ALPHA_02 * BETA_0 * integral


def chaos_stats(f: HarmonicField, cap: CapDomain) -> ChaosStats:
    tri = local_trispectrum(f, cap)
    return ChaosStats(tri.h4, tri.m_local, second_chaos_projection(f, cap))


def cumulant4(samples) -> float:
    """Unbiased estimator (k-statistic) of the fourth cumulant."""
    x = np.asarray(samples, dtype=float)
    if x.size < 8:
        raise InsufficientSamplesError("at least 8 samples are needed")
    if np.all(x == x[0]):
        return 0.0
    return float(stats.kstat(x - x.mean(), 4))


def _kstats_from_sums(n, s1, s2, s3, s4):
    k2 = (n * s2 - s1**2) / (n * (n - 1))
    k4 = (-6 * s1**4 + 12 * n * s1**2 * s2 - 3 * n * (n - 1) * s2**2
          - 4 * n * (n + 1) * s1 * s3 + n**2 * (n + 1) * s4) / (n * (n - 1) * (n - 2) * (n - 3))
    return k2, k4


def standardized_cumulant4(samples):
    """k4 / k2^2 of the samples with its delete-one jackknife standard error.

    This is the fourth cumulant of the samples standardized by their own
    mean and standard deviation.
    """
    x = np.asarray(samples, dtype=float)
    n = x.size
    if n < 9:
        raise InsufficientSamplesError("at least 9 samples are needed")
    x = x - x.mean()
    p = [np.sum(x**j) for j in range(1, 5)]
    k2, k4 = _kstats_from_sums(n, *p)
    if k2 <= 0:
        return 0.0, 0.0
    estimate = k4 / k2**2
    loo = _kstats_from_sums(n - 1, *(p[j - 1] - x**j for j in range(1, 5)))
    values = loo[1] / loo[0] ** 2
    se = math.sqrt((n - 1) / n * np.sum((values - values.mean()) ** 2))
    return float(estimate), se
