import math
import warnings

import mpmath as mp
import numpy as np
import pytest

from nodalcap.field import sample_field
from nodalcap.legendre import DomainError, legendre_values
from nodalcap.nodal import CapDomain, nodal_length_cap
from nodalcap.theory import (AsymptoticWarning, EXPANSION_C, SingularCovarianceError,
                             expected_norm_product, j_expansion, k_exact, k_expansion,
                             kac_rice_second_moment, predict_identities, predict_mean_global,
                             predict_mean_local, predict_var_global, predict_var_local,
                             theory_report, two_point_matrix, w_cap, w_planar, w_planar_lens)


# ------------------------------------------------------------- predictors

def test_mean_predictions():
    assert predict_mean_local(50, 0.4) == pytest.approx(math.sqrt(1275) * math.pi * (1 - math.cos(0.4)))
    assert predict_mean_global(50) == pytest.approx(2 * math.pi * math.sqrt(1275))
    # the cap mean at r = pi is the global mean
    assert predict_mean_local(7, math.pi - 1e-12) == pytest.approx(predict_mean_global(7))


def test_variance_predictions():
    assert predict_var_global(200) == pytest.approx(math.log(200) / 32)
    assert predict_var_local(200, 0.5) == pytest.approx(0.25 * math.log(100) / 256)
    with pytest.warns(AsymptoticWarning):
        assert predict_var_local(5, 0.5) >= 0.0


def test_identities():
    ids = predict_identities(100, 0.3, var_global_hat=0.2)
    assert ids["cov_local_global"] == pytest.approx((1 - math.cos(0.3)) / 2 * 0.2)
    assert ids["var_m_asym"] == pytest.approx(0.09 * math.log(30) / 256)
    assert ids["cov_z_m_asym"] == ids["var_m_asym"]
    assert ids["corr_local_global_bound"] == pytest.approx(0.3 * math.sqrt(math.log(100) / math.log(30)))


def test_domain_checks():
    with pytest.raises(DomainError, match=r"radius must lie in \(0, π\)"):
        predict_mean_local(10, 4.0)
    with pytest.raises(DomainError):
        predict_var_global(0)


# ---------------------------------------------------------- two-point matrix

def _conditional_delta(ell, rho):
    # gradient covariance given two zeros, from derivatives of P_l(cos d)
    mp.mp.dps = 30

    def pos(a, b, lon):
        return (mp.cos(b) * mp.cos(lon + a), mp.cos(b) * mp.sin(lon + a), mp.sin(b))

    def cov(a1, b1, a2, b2):
        u, v = pos(a1, b1, 0), pos(a2, b2, rho)
        return mp.legendre(ell, u[0] * v[0] + u[1] * v[1] + u[2] * v[2])

    z = (0, 0, 0, 0)
    lam = ell * (ell + 1)
    P = cov(*z)
    s_gg = mp.zeros(4, 4)
    for i in range(4):
        s_gg[i, i] = mp.mpf(lam) / 2
    for i in range(2):
        for j in range(2):
            o = [0, 0, 0, 0]
            o[i] += 1
            o[2 + j] += 1
            s_gg[i, 2 + j] = s_gg[2 + j, i] = mp.diff(cov, z, tuple(o))
    s_gt = mp.zeros(4, 2)
    s_gt[0, 1] = mp.diff(cov, z, (1, 0, 0, 0))
    s_gt[1, 1] = mp.diff(cov, z, (0, 1, 0, 0))
    s_gt[2, 0] = mp.diff(cov, z, (0, 0, 1, 0))
    s_gt[3, 0] = mp.diff(cov, z, (0, 0, 0, 1))
    s_tt = mp.matrix([[1, P], [P, 1]])
    cond = s_gg - s_gt * mp.inverse(s_tt) * s_gt.T
    return np.array((cond * 2 / lam).tolist(), dtype=float)


@pytest.mark.parametrize("ell,psi", [(10, 3.0), (50, 7.3), (30, 1.0), (100, 40.0)])
def test_two_point_matrix_against_conditional_covariance(ell, psi):
    m = two_point_matrix(ell, psi)
    np.testing.assert_allclose(m.delta, _conditional_delta(ell, psi / (ell + 0.5)), atol=1e-10)


def test_two_point_scaling():
    m = two_point_matrix(40, 5.0)
    lam = 40 * 41
    _, dP, _ = legendre_values(40, math.cos(5.0 / 40.5))
    assert m.c == float(dP) / lam
    assert m.a_unscaled == pytest.approx(lam * m.a)
    assert m.b_unscaled == pytest.approx(lam * m.b)


def test_series_branch_is_continuous():
    below = two_point_matrix(60, 2.0)
    above = two_point_matrix(60, 2.0 + 1e-9)
    np.testing.assert_allclose(below.delta, above.delta, atol=1e-7)


# ---------------------------------------------------------- two-point function

def test_norm_product_exact_cases():
    # independent standard gradients: (sqrt(pi/2))^2
    assert expected_norm_product(1, 0, 1, 0) == pytest.approx(math.pi / 2, rel=1e-9)
    # identical gradients: E|w|^2
    assert expected_norm_product(0.7, 0.7, 1.3, 1.3) == pytest.approx(2.0, rel=1e-9)


def test_norm_product_against_monte_carlo():
    rng = np.random.default_rng(0)
    n = 2_000_000
    sx11, sx12, sy11, sy12 = 0.8, -0.5, 1.0, 0.3

    def pair(s11, s12):
        c = np.linalg.cholesky([[s11, s12], [s12, s11]])
        return c @ rng.standard_normal((2, n))

    x, y = pair(sx11, sx12), pair(sy11, sy12)
    prod = np.hypot(x[0], y[0]) * np.hypot(x[1], y[1])
    se = prod.std() / math.sqrt(n)
    assert abs(expected_norm_product(sx11, sx12, sy11, sy12) - prod.mean()) < 4 * se


def test_norm_product_rejects_invalid_covariance():
    with pytest.raises(SingularCovarianceError):
        expected_norm_product(1.0, 1.5, 1.0, 0.0)


def test_k_limit_and_expansion():
    assert abs(k_exact(100, 80.0) - k_expansion(100, 80.0)) <= 0.01
    for psi in (40.0, 80.0, 120.0):
        assert abs(k_exact(200, psi) - 0.25) < 0.01
    errs = [abs(k_exact(100, p) - k_expansion(100, p)) for p in (10.0, 20.0, 40.0, 80.0)]
    assert max(errs) < 1e-3


def test_k_small_psi_is_smooth():
    # continuous across the switch to the series branch
    assert k_exact(50, 2.0 - 1e-6) == pytest.approx(k_exact(50, 2.0 + 1e-6), rel=1e-6)
    # K blows up like 1/psi as the two points merge
    scaled = [p * k_exact(50, p) for p in (0.002, 0.004, 0.008)]
    assert all(np.isfinite(scaled))
    assert scaled[0] == pytest.approx(scaled[1], rel=1e-3)
    assert scaled[1] == pytest.approx(scaled[2], rel=1e-3)


def test_k_errors():
    with pytest.raises(SingularCovarianceError):
        k_exact(50, 1e-9)
    with pytest.raises(DomainError):
        k_exact(50, 200.0)
    with pytest.raises(DomainError):
        k_expansion(50, 0.5)
    with pytest.raises(DomainError):
        j_expansion(50, EXPANSION_C)


def test_j_expansion_vectorized():
    psi = np.array([3.0, 10.0, 30.0])
    np.testing.assert_allclose(j_expansion(100, psi), [j_expansion(100, p) for p in psi])


# ---------------------------------------------------------------- W family

@pytest.mark.parametrize("rho", [0.0, 0.1, 0.7, 1.0, 1.5, 1.99])
def test_w_planar_matches_lens_area(rho):
    w1, w0 = w_planar(rho)
    assert w0 == pytest.approx(w_planar_lens(rho), rel=1e-9, abs=1e-12)
    assert w1 == pytest.approx(rho * w0 / (8 * math.pi**2))


def test_w_planar_values():
    assert w_planar(0.0)[1] == 2 * math.pi**2
    assert w_planar(2.0) == (0.0, 0.0)
    grid = np.linspace(0, 2, 101)
    w0 = np.array([w_planar(p)[1] for p in grid])
    assert np.all(w0 <= 2 * math.pi**2) and np.all(np.diff(w0) <= 1e-12)


def _w_cap_brute(r, rho, n_s=400, n_a=2000):
    # fraction of each distance-rho circle inside the cap, by sampling
    s = (np.arange(n_s) + 0.5) * r / n_s
    a = 2 * math.pi * (np.arange(n_a) + 0.5) / n_a
    cos_d = (np.cos(s)[:, None] * math.cos(rho)
             + np.sin(s)[:, None] * math.sin(rho) * np.cos(a)[None, :])
    inside = (cos_d >= math.cos(r)).mean(axis=1)
    integrand = 2 * math.pi * np.sin(s) * 2 * math.pi * math.sin(rho) * inside
    return integrand.sum() * r / n_s / (8 * math.pi**2)


@pytest.mark.parametrize("r,rho", [(0.3, 0.1), (0.5, 0.6), (1.0, 1.3)])
def test_w_cap_against_sampling(r, rho):
    assert w_cap(r, rho) == pytest.approx(_w_cap_brute(r, rho), rel=2e-3)


@pytest.mark.parametrize("r", [0.05, 0.1, 0.2])
def test_w_cap_small_radius_limit(r):
    rho = np.linspace(0, 2 * r, 41)
    planar = np.array([r**3 * w_planar(p / r)[0] for p in rho])
    sphere = np.array([w_cap(r, p) for p in rho])
    assert np.max(np.abs(sphere - planar)) / np.max(planar) <= 5 * (2 * r) ** 2


def test_w_cap_domain():
    with pytest.raises(DomainError):
        w_cap(2.0, 0.1)
    assert w_cap(0.3, 0.7) == 0.0


# ---------------------------------------------------------------- second moment

def test_second_moment_against_monte_carlo():
    ell, r = 12, 0.5
    m2, var = kac_rice_second_moment(ell, r, return_variance=True)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        z = np.array([nodal_length_cap(sample_field(ell, s), CapDomain(r)).total_length
                      for s in range(3000)])
    assert m2 == pytest.approx(predict_mean_local(ell, r) ** 2 + var)
    z2 = z**2
    assert abs(m2 - z2.mean()) < 4 * z2.std(ddof=1) / math.sqrt(z.size)
    assert abs(var - z.var(ddof=1)) < 4 * z.var(ddof=1) * math.sqrt(2 / z.size) * 1.5


def test_second_moment_domain():
    with pytest.raises(DomainError):
        kac_rice_second_moment(3, 0.5)
    with pytest.raises(DomainError):
        kac_rice_second_moment(50, 1.6)


def test_theory_report_flags():
    rep = theory_report(100, 0.5, var_global_hat=0.3)
    d = rep.to_dict()
    assert d["kinds"]["mean_local"] == "exact"
    assert d["kinds"]["cov_local_global"] == "exact"
    assert d["kinds"]["var_local_asym"] == "asymptotic"
    assert d["second_moment_quadrature"] is None
    assert rep.cov_local_global == pytest.approx((1 - math.cos(0.5)) / 2 * 0.3)


# ---------------------------------------------- predictor arithmetic

def test_predictor_arithmetic():
    # pi (1 - cos 0.5) = 0.3845857 and sqrt(55) times that
    assert predict_mean_local(1, 0.5) == pytest.approx(0.3845857242, abs=1e-9)
    assert predict_mean_local(10, 0.5) == pytest.approx(2.852164066, abs=1e-8)
    assert predict_var_local(200, 0.5) == pytest.approx(0.25 * math.log(100) / 256, rel=1e-12)
    assert predict_var_local(100, 0.5) / predict_var_local(200, 0.5) == pytest.approx(0.8495, abs=1e-4)
    with pytest.warns(AsymptoticWarning):
        assert predict_var_local(2, 0.5) == 0.0
    ids = predict_identities(200, 0.5)
    assert ids["cov_local_global"] == pytest.approx(1.01345e-2, rel=1e-4)
    assert ids["corr_local_global_bound"] == pytest.approx(0.536, abs=1e-3)
    assert predict_identities(5, math.pi - 1e-9, 0.7)["cov_local_global"] == pytest.approx(0.7)


def test_k_against_expansion_envelope():
    ell, psi = 100, 60.0
    envelope = 10 * (1 / psi**3 + 1 / (ell * psi))
    assert abs(k_exact(ell, psi) - k_expansion(ell, psi)) < envelope
    assert abs(k_expansion(100, 40.0) - 0.25) <= 0.05
    errs = [abs(k_exact(100, p) - k_expansion(100, p)) for p in (20.0, 40.0, 80.0)]
    assert errs[0] > errs[1] > errs[2]
    with pytest.raises(DomainError):
        k_expansion(50, math.pi * 50.5)


def test_j_expansion_values():
    d = 50 * math.sin(50 / 100.5)
    terms = np.array([1 / 64, 5 / 64 * math.cos(200), -3 / 16 * math.sin(100)]) / d
    assert j_expansion(100, 50.0) == pytest.approx(terms.sum(), rel=1e-12)
    # at psi = 50 the oscillating terms are not small against the first
    assert np.all(np.abs(terms[1:]) > terms[0])
    psi = 2 * math.pi * 3
    assert j_expansion(100, psi) == pytest.approx((6 / 64) / (psi * math.sin(psi / 100.5)), rel=1e-9)


def test_two_point_matrix_symmetric_positive():
    d = two_point_matrix(100, 30.0).delta
    np.testing.assert_array_equal(d, d.T)
    assert np.all(np.linalg.eigvalsh(d) > 0)


def test_w_planar_monte_carlo():
    rng = np.random.default_rng(6)
    n = 1_000_000
    rad, ang = np.sqrt(rng.random(n)), 2 * math.pi * rng.random(n)
    phi = 2 * math.pi * rng.random(n)
    x = rad * np.cos(ang) + np.cos(phi)
    y = rad * np.sin(ang) + np.sin(phi)
    hit = (x * x + y * y <= 1).astype(float)
    est, se = 2 * math.pi**2 * hit.mean(), 2 * math.pi**2 * hit.std() / math.sqrt(n)
    assert abs(w_planar(1.0)[1] - est) < 3 * se
    assert w_planar(2.5) == (0.0, 0.0)


def test_w_cap_spec_examples():
    r, rho = 0.1, 0.05
    planar = r**3 * w_planar(rho / r)[0]
    assert abs(w_cap(r, rho) - planar) <= 5 * rho**2 * planar
    assert w_cap(0.3, 0.2) == pytest.approx(_w_cap_brute(0.3, 0.2), rel=2e-3)


def test_second_moment_small_caps():
    for ell, r in ((20, 0.1), (40, 0.05)):
        m2, var = kac_rice_second_moment(ell, r, return_variance=True)
        mean2 = predict_mean_local(ell, r) ** 2
        assert var > 0
        assert m2 > mean2
        assert var < 0.1 * mean2
