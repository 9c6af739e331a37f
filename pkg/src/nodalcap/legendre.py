"""Legendre polynomials, the real spherical-harmonic basis, and the
large-degree expansion of P_l(cos(psi/L))**4."""

from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np

__all__ = [
    "DomainError",
    "LegendreEval",
    "eval_legendre",
    "legendre_values",
    "legendre_near_one",
    "assoc_tables",
    "eval_assoc_basis",
    "pl4_expansion",
    "PL4_SIGN",
]

_DOMAIN_SLACK = 1e-12
_BIG = 1e200
_LOG_BIG = math.log(_BIG)

# Sign in front of 2 sin(2 psi) in the fourth-power expansion.  Chosen by
# comparison with exact recurrence values over l in {50, 100, 200} and
# psi in [5, 100]; the opposite sign is off by O(1/psi) instead of O(1/psi^3).
PL4_SIGN = 1


class DomainError(ValueError):
    """Argument outside the domain where the quantity is defined."""


@dataclass(frozen=True)
class LegendreEval:
    degree: int
    argument: float
    value: float
    first_derivative: float
    second_derivative: float


def _check_degree(ell) -> int:
    if int(ell) != ell or ell < 0:
        raise DomainError(f"degree must be a nonnegative integer, got {ell!r}")
    return int(ell)


def legendre_values(ell: int, t):
    """Vectorized P_l, P_l' and P_l'' at the points ``t``.

    Uses the Bonnet recurrence together with its first and second
    derivatives, which are stable upward in the degree on [-1, 1].
    """
    ell = _check_degree(ell)
    t = np.asarray(t, dtype=float)
    if np.any(np.abs(t) > 1.0 + _DOMAIN_SLACK):
        raise DomainError("Legendre argument must lie in [-1, 1]")
    t = np.clip(t, -1.0, 1.0)
    p_prev, p = np.zeros_like(t), np.ones_like(t)
    d_prev, d = np.zeros_like(t), np.zeros_like(t)
    s_prev, s = np.zeros_like(t), np.zeros_like(t)
    for n in range(ell):
        p_next = ((2 * n + 1) * t * p - n * p_prev) / (n + 1)
        d_next = ((2 * n + 1) * (p + t * d) - n * d_prev) / (n + 1)
        s_next = ((2 * n + 1) * (2 * d + t * s) - n * s_prev) / (n + 1)
        p_prev, p = p, p_next
        d_prev, d = d, d_next
        s_prev, s = s, s_next
    return p, d, s


def legendre_near_one(ell: int, rho):
    """1 - P_l(cos rho), P_l'(cos rho) and P_l''(cos rho) for small rho.

    Sums the terminating series in x = sin^2(rho/2),
    P_l = sum_k (-1)^k (l+k)! / ((l-k)! k!^2) x^k, directly for 1 - P_l, so
    no digits are lost to cancellation against 1.  Terms decrease from the
    start when l(l+1) x <= 1, i.e. for (l + 1/2) rho up to about 2.
    """
    ell = _check_degree(ell)
    x = np.sin(0.5 * np.asarray(rho, dtype=float)) ** 2
    one_minus = np.zeros_like(x)
    d1 = np.zeros_like(x)
    d2 = np.zeros_like(x)
    coef = 1.0
    for k in range(1, ell + 1):
        coef *= (ell + k) * (ell - k + 1) / (k * k)  # (l+k)! / ((l-k)! k!^2)
        sign = 1.0 if k % 2 else -1.0
        xk1 = x ** (k - 1)
        one_minus += sign * coef * xk1 * x
        d1 += 0.5 * sign * k * coef * xk1
        if k >= 2:
            d2 -= 0.25 * sign * k * (k - 1) * coef * x ** (k - 2)
        if np.all(coef * xk1 * x < 1e-18 * np.maximum(np.abs(one_minus), 1e-300)) and k > 2:
            break
    return one_minus, d1, d2


def eval_legendre(ell: int, t: float) -> LegendreEval:
    """P_l(t) with its first two derivatives.

    >>> eval_legendre(3, 0.5).value
    -0.4375
    """
    p, d, s = legendre_values(ell, float(t))
    return LegendreEval(int(ell), float(t), float(p), float(d), float(s))


def _normalized_columns(ell: int, cos_t, log_sin, offset: int):
    """Run the degree recurrence for every order m at once.

    Column m of the result is sqrt((l-m)!/(l+m)!) P_l^(m)(cos theta) divided
    by sin^offset(theta), for m >= offset.  Each column is seeded in log
    space and rescaled on the fly so large degrees neither underflow nor
    overflow.
    """
    n_t = cos_t.shape[0]
    m = np.arange(ell + 1)
    # log of sqrt((2m)!) / (2^m m!), the normalized sectoral constant
    log_c = 0.5 * np.array([math.lgamma(2 * k + 1) for k in m]) - m * math.log(2.0)
    log_c -= np.array([math.lgamma(k + 1) for k in m])
    power = np.maximum(m - offset, 0)
    with np.errstate(invalid="ignore"):
        log_seed = log_c[None, :] + power[None, :] * log_sin[:, None]
    log_seed = np.where(power[None, :] == 0, log_c[None, :], log_seed)
    zero_seed = np.isneginf(log_seed)
    log_scale = np.where(zero_seed, 0.0, log_seed)
    seed_val = np.where(zero_seed, 0.0, 1.0)

    prev = np.zeros((n_t, ell + 1))
    cur = np.zeros((n_t, ell + 1))
    cur[:, 0] = seed_val[:, 0]
    mf = m.astype(float)
    c = cos_t[:, None]
    for n in range(ell):
        k = n + 1
        mk = mf[:k]
        inv = 1.0 / np.sqrt((n + 1) ** 2 - mk**2)
        back = np.sqrt((n + mk) * (n - mk)) * inv
        nxt = ((2 * n + 1) * inv) * c * cur[:, :k] - back * prev[:, :k]
        prev[:, :k] = cur[:, :k]
        cur[:, :k] = nxt
        cur[:, k] = seed_val[:, k]
        if n % 8 == 7 or n == ell - 1:
            big = np.abs(cur) > _BIG
            if big.any():
                cur = np.where(big, cur / _BIG, cur)
                prev = np.where(big, prev / _BIG, prev)
                log_scale = log_scale + np.where(big, _LOG_BIG, 0.0)
    with np.errstate(under="ignore"):
        return cur * np.exp(log_scale)


_TABLE_CACHE: dict = {}
_TABLE_CACHE_SIZE = 16


def assoc_tables(ell: int, theta):
    """Normalized associated Legendre functions on a set of colatitudes.

    With R_m(theta) = sqrt((l-m)!/(l+m)!) sin^m(theta) P_l^(m)(cos theta)
    (no Condon-Shortley phase) returns three read-only arrays of shape
    (n, l+1):

    ``R``        R_m(theta)
    ``R_sin``    R_m(theta) / sin(theta) for m >= 1 (column 0 is zero);
                 finite at the poles
    ``dR``       dR_m / dtheta

    Tables for larger grids are cached, since Monte Carlo runs reuse the
    same colatitudes for every realization.
    """
    ell = _check_degree(ell)
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    if theta.size < 16:
        return _assoc_tables(ell, theta)
    key = (ell, theta.tobytes())
    hit = _TABLE_CACHE.get(key)
    if hit is None:
        hit = _assoc_tables(ell, theta)
        for arr in hit:
            arr.setflags(write=False)
        if len(_TABLE_CACHE) >= _TABLE_CACHE_SIZE:
            _TABLE_CACHE.pop(next(iter(_TABLE_CACHE)))
        _TABLE_CACHE[key] = hit
    return hit


def _assoc_tables(ell: int, theta):
    if np.any(theta < -_DOMAIN_SLACK) or np.any(theta > math.pi + _DOMAIN_SLACK):
        raise DomainError("colatitude must lie in [0, pi]")
    theta = np.clip(theta, 0.0, math.pi)
    cos_t = np.cos(theta)
    sin_t = np.sin(theta)
    # exact zero at the poles
    sin_t[(theta == 0.0) | (theta == math.pi)] = 0.0
    with np.errstate(divide="ignore"):
        log_sin = np.log(sin_t)

    R_sin = _normalized_columns(ell, cos_t, log_sin, offset=1)
    R_sin[:, 0] = 0.0
    R = R_sin * sin_t[:, None]
    R[:, 0] = legendre_values(ell, cos_t)[0]

    m = np.arange(ell + 1, dtype=float)
    up = np.sqrt((ell + m) * (ell - m + 1))  # couples m to m-1
    down = np.sqrt(np.maximum((ell - m) * (ell + m + 1), 0.0))  # m to m+1
    R_ext = np.concatenate([R, np.zeros((R.shape[0], 1))], axis=1)
    dR = np.empty_like(R)
    dR[:, 0] = -down[0] * R_ext[:, 1]
    if ell > 0:
        dR[:, 1:] = 0.5 * (up[None, 1:] * R[:, :-1] - down[None, 1:] * R_ext[:, 2:])
    return R, R_sin, dR


def basis_from_tables(ell: int, R_row, phi: float):
    """Real orthonormal harmonics at one point from a row of R values."""
    norm = math.sqrt((2 * ell + 1) / (4 * math.pi))
    m = np.arange(1, ell + 1)
    out = np.empty(2 * ell + 1)
    out[ell] = norm * R_row[0]
    out[ell + 1 :] = norm * math.sqrt(2.0) * R_row[1:] * np.cos(m * phi)
    out[:ell] = (norm * math.sqrt(2.0) * R_row[1:] * np.sin(m * phi))[::-1]
    return out


def eval_assoc_basis(ell: int, theta: float, phi: float):
    """Real orthonormal spherical harmonics of degree l at (theta, phi).

    Entry ``m + l`` holds the order-m function: cos(m phi) for m > 0,
    sin(|m| phi) for m < 0.  The basis satisfies the addition theorem
    sum_m Y_m(x) Y_m(y) = (2l+1)/(4 pi) P_l(cos d(x, y)).
    """
    R, _, _ = assoc_tables(ell, [theta])
    return basis_from_tables(ell, R[0], phi)


def pl4_expansion(ell: int, psi, sign_convention: int = PL4_SIGN):
    """Leading large-degree approximation of P_l(cos(psi/L))**4, L = l + 1/2.

    Valid for 1 <= psi < pi L / 2; error O(psi**-3).
    """
    ell = _check_degree(ell)
    L = ell + 0.5
    psi_arr = np.asarray(psi, dtype=float)
    if np.any(psi_arr <= 0) or np.any(psi_arr >= math.pi * L / 2):
        raise DomainError("psi must lie in (0, pi L / 2)")
    if sign_convention not in (1, -1):
        raise ValueError("sign_convention must be +1 or -1")
    num = 1.5 + sign_convention * 2.0 * np.sin(2 * psi_arr) - 0.5 * np.cos(4 * psi_arr)
    out = num / (math.pi**2 * ell**2 * np.sin(psi_arr / L) ** 2)
    return float(out) if np.ndim(out) == 0 else out
