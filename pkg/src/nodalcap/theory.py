"""Closed-form and quadrature predictions for cap nodal lengths.

Conventions: l is the degree, lambda = l(l+1), L = l + 1/2, rho is a
geodesic distance in radians and psi = L rho the scaled distance.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
import math
import warnings

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import integrate

from .legendre import DomainError, legendre_near_one, legendre_values

__all__ = [
    "SingularCovarianceError",
    "QuadratureError",
    "AsymptoticWarning",
    "TwoPointMatrix",
    "TheoryReport",
    "predict_mean_local",
    "predict_mean_global",
    "predict_var_local",
    "predict_var_global",
    "predict_identities",
    "two_point_matrix",
    "k_exact",
    "k_expansion",
    "j_expansion",
    "w_planar",
    "w_planar_lens",
    "w_cap",
    "kac_rice_second_moment",
    "theory_report",
    "EXPANSION_C",
]

# Lower end of the range where the psi-expansions are used.
EXPANSION_C = 2.0


class SingularCovarianceError(ArithmeticError):
    """The conditional gradient covariance is not positive semi-definite."""


class QuadratureError(ArithmeticError):
    pass


class AsymptoticWarning(UserWarning):
    pass


def _check(ell, r=None):
    if int(ell) != ell or ell < 1:
        raise DomainError("degree must be an integer >= 1")
    if r is not None and not (0.0 < r < math.pi):
        raise DomainError("radius must lie in (0, π)")


def cap_area(r: float) -> float:
    return 2.0 * math.pi * (1.0 - math.cos(r))


# ---------------------------------------------------------------- moments


def predict_mean_local(ell: int, r: float) -> float:
    """Expected nodal length in the cap of radius r (exact)."""
    _check(ell, r)
    return math.sqrt(ell * (ell + 1) / 2.0) * math.pi * (1.0 - math.cos(r))


def predict_mean_global(ell: int) -> float:
    _check(ell)
    return 2.0 * math.pi * math.sqrt(ell * (ell + 1) / 2.0)


def predict_var_local(ell: int, r: float) -> float:
    """Leading term r^2 log(r l) / 256 of the cap variance.

    The O(r^2) correction is not known in closed form, so this is a
    leading-order prediction only.
    """
    _check(ell, r)
    log_rl = math.log(r * ell)
    if log_rl <= 1.0:
        warnings.warn("log(r l) <= 1: the leading-order variance is not meaningful here",
                      AsymptoticWarning, stacklevel=2)
    return max(r * r * log_rl / 256.0, 0.0)


def predict_var_global(ell: int) -> float:
    """Leading term log(l) / 32 of the whole-sphere variance."""
    _check(ell)
    return math.log(ell) / 32.0


def predict_identities(ell: int, r: float, var_global_hat: float | None = None) -> dict:
    """Covariance with the global length and the trispectrum predictions.

    The covariance between cap and whole-sphere lengths equals
    |B_r| / |S^2| times the global variance exactly; with no estimate of
    that variance its leading term is used instead.
    """
    _check(ell, r)
    v = predict_var_global(ell) if var_global_hat is None else float(var_global_hat)
    log_rl = math.log(r * ell)
    lead = max(r * r * log_rl / 256.0, 0.0)
    bound = r * math.sqrt(math.log(ell) / log_rl) if log_rl > 0 else math.inf
    return {
        "cov_local_global": (1.0 - math.cos(r)) / 2.0 * v,
        "var_m_asym": lead,
        "cov_z_m_asym": lead,
        "corr_local_global_bound": bound,
    }


# ------------------------------------------------------ two-point function


@dataclass(frozen=True)
class TwoPointMatrix:
    """Conditional covariance of the two gradients given two zeros.

    ``a, b, c`` are the scaled entries (unscaled ones are lambda times
    larger); ``delta`` is the 4x4 matrix for (w1_x, w1_y, w2_x, w2_y).
    """

    ell: int
    psi: float
    P: float
    a: float
    b: float
    c: float
    a_unscaled: float
    b_unscaled: float
    c_unscaled: float

    @property
    def delta(self):
        a, b, c = self.a, self.b, self.c
        return np.array([[1 + 2 * a, 0, 2 * b, 0],
                         [0, 1, 0, 2 * c],
                         [2 * b, 0, 1 + 2 * a, 0],
                         [0, 2 * c, 0, 1]], dtype=float)


# Below this psi the entries are built from the series about rho = 0,
# which keeps 1 - P^2 and 1 + 2a accurate as both vanish.
_SERIES_PSI = 2.0


def _entries(ell: int, psi):
    L = ell + 0.5
    psi = float(psi)
    rho = psi / L
    t = math.cos(rho)
    s2 = math.sin(rho) ** 2
    if psi <= _SERIES_PSI:
        one_minus_p, dP, ddP = (float(v) for v in legendre_near_one(ell, rho))
        P = 1.0 - one_minus_p
        one_m = one_minus_p * (2.0 - one_minus_p)
    else:
        P, dP, ddP = (float(v) for v in legendre_values(ell, t))
        one_m = 1.0 - P * P
    lam = ell * (ell + 1)
    g = dP * dP * s2 / one_m if one_m > 0 else math.inf
    a_u = -g
    b_u = dP * t - ddP * s2 - P * g
    c_u = dP
    return P, one_m, a_u / lam, b_u / lam, c_u / lam, a_u, b_u, c_u


def two_point_matrix(ell: int, psi: float) -> TwoPointMatrix:
    _check(ell)
    P, _, a, b, c, au, bu, cu = _entries(ell, psi)
    return TwoPointMatrix(int(ell), float(psi), float(P), float(a), float(b), float(c),
                          float(au), float(bu), float(cu))


# Laplace grid for E[|w1| |w2|]: sqrt(s) = (4 pi)^(-1/2) int (1 - e^{-ts}) t^{-3/2} dt,
# with t = exp(alpha).  The integrand is analytic in a strip of width pi
# around the real alpha axis and decays like exp(-|alpha|/2), so the
# trapezoid rule converges geometrically.
_LAPLACE_HALF_WIDTH = 64.0
_LAPLACE_STEP = 0.25


def _laplace_grid(step=_LAPLACE_STEP, half=_LAPLACE_HALF_WIDTH):
    n = int(round(2 * half / step))
    alpha = -half + step * np.arange(n + 1)
    return alpha, np.exp(alpha), np.exp(-alpha / 2.0) * step


def _log_mgf_block(t, u, s11, s22, s12):
    # log det(I + 2 diag(t, u) S) for a 2x2 covariance S
    det = s11 * s22 - s12 * s12
    return np.log1p(2 * t * s11 + 2 * u * s22 + 4 * t * u * det)


# Below this t (or u) the bracket is replaced by its Taylor expansion,
# which avoids cancellation between terms of size t against size 1.
_TAYLOR_T = 1e-7


def expected_norm_product(sx11, sx12, sy11, sy12, step=_LAPLACE_STEP):
    """E[|w1| |w2|] for w1 = (x1, y1), w2 = (x2, y2) with independent x and
    y pairs, Var(x_i) = sx11, Cov(x1, x2) = sx12 and likewise for y."""
    if min(sx11 - abs(sx12), sy11 - abs(sy12)) < -1e-12 * max(sx11, sy11, 1.0):
        raise SingularCovarianceError("gradient covariance is not positive semi-definite")
    sx12 = math.copysign(min(abs(sx12), sx11), sx12)
    sy12 = math.copysign(min(abs(sy12), sy11), sy12)
    _, t, w = _laplace_grid(step)
    T, U = t[:, None], t[None, :]
    zero = np.zeros(1)
    joint = -0.5 * (_log_mgf_block(T, U, sx11, sx11, sx12) + _log_mgf_block(T, U, sy11, sy11, sy12))
    single = -0.5 * (_log_mgf_block(t, zero, sx11, sx11, sx12) + _log_mgf_block(t, zero, sy11, sy11, sy12))
    # 1 - M(t,0) - M(0,u) + M(t,u), arranged to avoid cancellation
    bracket = np.expm1(joint) - np.expm1(single)[:, None] - np.expm1(single)[None, :]

    # first order in t: t * d/dt bracket at t = 0, as a function of u
    trace = sx11 + sy11
    det_x, det_y = sx11 * sx11 - sx12 * sx12, sy11 * sy11 - sy12 * sy12
    m_u = np.exp(single)
    slope = trace - m_u * ((sx11 + 2 * t * det_x) / (1 + 2 * t * sx11)
                           + (sy11 + 2 * t * det_y) / (1 + 2 * t * sy11))
    # slope(u) ~ u * cross for small u
    cross = 2 * (sx12**2 + sy12**2) + trace**2
    slope = np.where(t < _TAYLOR_T, t * cross, slope)
    small = t < _TAYLOR_T
    bracket[small, :] = t[small, None] * slope[None, :]
    bracket[:, small] = slope[:, None] * t[None, small]
    return float(w @ bracket @ w) / (4.0 * math.pi)


def k_exact(ell: int, psi: float, step: float = _LAPLACE_STEP) -> float:
    """Scaled two-point correlation function of the nodal set.

    E[|w1| |w2|] / (2 pi sqrt(1 - P^2)) with (w1, w2) centred Gaussian of
    covariance Delta(psi).  Tends to 1/4 as correlations vanish.
    """
    _check(ell)
    L = ell + 0.5
    if not (0.0 < psi < math.pi * L):
        raise DomainError("psi must lie in (0, pi L)")
    P, one_m, a, b, c, *_ = _entries(ell, psi)
    if not one_m > 1e-14:
        raise SingularCovarianceError(f"1 - P^2 = {float(one_m):.3g} vanishes at psi = {psi}")
    e = expected_norm_product(1 + 2 * float(a), 2 * float(b), 1.0, 2 * float(c), step)
    return e / (2.0 * math.pi * math.sqrt(float(one_m)))


def _expansion_range(ell, psi, low):
    L = ell + 0.5
    psi_arr = np.asarray(psi, dtype=float)
    if np.any(psi_arr < low) or np.any(psi_arr >= math.pi * L / 2):
        raise DomainError(f"psi must lie in [{low}, pi L / 2)")
    return L, psi_arr


def _scalar(x):
    return float(x) if np.ndim(x) == 0 else x


def k_expansion(ell: int, psi):
    """Five-term large-degree expansion of the scaled two-point function,
    for 1 <= psi < pi L / 2."""
    _check(ell)
    L, p = _expansion_range(ell, psi, 1.0)
    s = np.sin(p / L)
    pi = math.pi
    out = (0.25
           + 0.5 * np.sin(2 * p) / (pi * ell * s)
           + (1 / 256) / (pi**2 * ell * s * p)
           + (9 / 32) * np.cos(2 * p) / (pi * ell * p * s)
           + ((27 / 64) * np.sin(2 * p) - (75 / 256) * np.cos(4 * p)) / (pi**2 * ell * p * s))
    return _scalar(out)


def j_expansion(ell: int, psi):
    """Three-term expansion of the cross-correlation between the nodal
    length and the trispectrum, for C < psi < pi L / 2 with C = 2."""
    _check(ell)
    L, p = _expansion_range(ell, psi, EXPANSION_C)
    if np.any(p <= EXPANSION_C):
        raise DomainError(f"psi must exceed {EXPANSION_C}")
    d = p * np.sin(p / L)
    return _scalar((1 / 64) / d + (5 / 64) * np.cos(4 * p) / d - (3 / 16) * np.sin(2 * p) / d)


# ---------------------------------------------------------------- W family


def w_planar_lens(rho: float) -> float:
    """2 pi times the overlap area of two unit discs at distance rho."""
    if rho >= 2.0:
        return 0.0
    h = rho / 2.0
    return 2.0 * math.pi * (2.0 * math.acos(h) - 2.0 * h * math.sqrt(1.0 - h * h))


def _planar_angle(s, rho):
    # angle of the circle of radius rho about a point at distance s from
    # the centre that lies inside the unit disc
    with np.errstate(divide="ignore", invalid="ignore"):
        k = (1.0 - s * s - rho * rho) / (2.0 * s * rho)
    return 2.0 * np.arccos(np.clip(-k, -1.0, 1.0))


def w_planar(rho: float):
    """(W1, W0) for the unit-disc indicator in the plane.

    W0(rho) = integral over the unit disc of the angle measure of
    directions e with x + rho e still in the disc, W1 = rho W0 / (8 pi^2).
    """
    if rho < 0:
        raise DomainError("rho must be nonnegative")
    if rho >= 2.0:
        return 0.0, 0.0
    if rho == 0.0:
        w0 = 2.0 * math.pi**2
    else:
        # full circle inside for s <= 1 - rho, none for s < rho - 1
        lo, kink = max(0.0, rho - 1.0), 1.0 - rho
        pts = [kink] if 0.0 < kink < 1.0 else None
        w0, _ = integrate.quad(lambda s: 2 * math.pi * s * _planar_angle(s, rho), lo, 1.0,
                               points=pts, epsabs=1e-12, epsrel=1e-11, limit=200)
    return rho * w0 / (8.0 * math.pi**2), w0


def _cap_angle(s, rho, r):
    with np.errstate(divide="ignore", invalid="ignore"):
        k = (math.cos(r) - np.cos(s) * math.cos(rho)) / (np.sin(s) * math.sin(rho))
    return 2.0 * np.arccos(np.clip(k, -1.0, 1.0))


def w_cap(r: float, rho: float) -> float:
    """W_r(rho) = (1/8 pi^2) int_{B_r} len{y in B_r : d(x, y) = rho} dx."""
    if not (0.0 < r < math.pi / 2):
        raise DomainError("cap radius must lie in (0, pi/2)")
    if rho < 0:
        raise DomainError("rho must be nonnegative")
    if rho >= 2 * r:
        return 0.0
    if rho == 0.0:
        return 0.0
    lo, kink = max(0.0, rho - r), r - rho
    pts = [kink] if 0.0 < kink < r else None
    val, _ = integrate.quad(
        lambda s: 2 * math.pi * math.sin(s) * math.sin(rho) * _cap_angle(s, rho, r),
        lo, r, points=pts, epsabs=1e-14, epsrel=1e-10, limit=200)
    return val / (8.0 * math.pi**2)


# ----------------------------------------------------- second moment


def _panels(total: float, width: float):
    """Panel edges on [0, total]: geometric near zero, then ~``width`` wide."""
    edges = [0.0, 1e-3, 4e-3, 0.016, 0.0625, 0.25, 1.0]
    edges = [e for e in edges if e < total]
    start = edges[-1]
    n = max(1, math.ceil((total - start) / width))
    edges += list(np.linspace(start, total, n + 1)[1:])
    return np.array(edges)


def _variance_integral(ell, r, nodes, width):
    L = ell + 0.5
    lam = ell * (ell + 1)
    psi_max = 2.0 * r * L
    edges = _panels(psi_max, width)
    x, wq = leggauss(nodes)
    total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        psi = 0.5 * (hi - lo) * (x + 1.0) + lo
        vals = np.empty_like(psi)
        for k, p in enumerate(psi):
            try:
                kk = k_exact(ell, p)
            except SingularCovarianceError as exc:
                raise QuadratureError(f"panel [{lo:.4g}, {hi:.4g}] in psi: {exc}") from exc
            vals[k] = (lam / 2.0) * (kk - 0.25) * w_cap(r, p / L)
        total += 0.5 * (hi - lo) * float(wq @ vals) / L
    return 8.0 * math.pi**2 * total


def kac_rice_second_moment(ell: int, r: float, rtol: float = 1e-4, return_variance: bool = False):
    """E[Z^2] for the cap nodal length by the Kac-Rice formula.

    The constant part lambda/8 of the two-point function integrates to the
    squared mean exactly, so only the fluctuating part is integrated
    numerically, by Gauss-Legendre panels that are refined until the
    variance changes by less than ``rtol`` relative.
    """
    _check(ell, r)
    if r >= math.pi / 2:
        raise DomainError("cap radius must be below pi/2")
    if r * ell < 2:
        raise DomainError("r l must be at least 2")
    mean = predict_mean_local(ell, r)
    prev = _variance_integral(ell, r, 8, math.pi / 2)
    width = math.pi / 4
    for _ in range(4):
        cur = _variance_integral(ell, r, 8, width)
        if abs(cur - prev) <= rtol * abs(cur):
            break
        prev, width = cur, width / 2
    else:
        raise QuadratureError(f"variance quadrature did not reach rtol {rtol}")
    if return_variance:
        return mean * mean + cur, cur
    return mean * mean + cur


# ----------------------------------------------------------------- report


@dataclass
class TheoryReport:
    ell: int
    r: float
    mean_local: float
    var_local_asym: float
    var_global_asym: float
    cov_local_global: float
    var_m_asym: float
    cov_z_m_asym: float
    corr_local_global_bound: float
    second_moment_quadrature: float | None = None
    var_local_quadrature: float | None = None
    kinds: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def theory_report(ell: int, r: float, var_global_hat: float | None = None,
                  with_quadrature: bool = False) -> TheoryReport:
    _check(ell, r)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", AsymptoticWarning)
        var_local = predict_var_local(ell, r)
    ids = predict_identities(ell, r, var_global_hat)
    kinds = {
        "mean_local": "exact",
        "var_local_asym": "asymptotic",
        "var_global_asym": "asymptotic",
        "cov_local_global": "exact" if var_global_hat is not None else "asymptotic",
        "var_m_asym": "asymptotic",
        "cov_z_m_asym": "asymptotic",
        "corr_local_global_bound": "asymptotic",
    }
    report = TheoryReport(ell, r, predict_mean_local(ell, r), var_local,
                          predict_var_global(ell), kinds=kinds, **ids)
    if with_quadrature:
        m2, v = kac_rice_second_moment(ell, r, return_variance=True)
        report.second_moment_quadrature = m2
        report.var_local_quadrature = v
        kinds["second_moment_quadrature"] = "exact"
        kinds["var_local_quadrature"] = "exact"
    return report
