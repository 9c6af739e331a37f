"""Acceptance suite with pinned seeds.

Monte Carlo datasets are computed lazily and shared between criteria:

* ``mean``: l = 50, r = 0.4, 400 replicates with the global length
* ``sweep``: r = 0.5 for l in {50, 100, 200}, 500 replicates each
* ``decor``: l = 200, r in {0.25, 0.125}, 1000 replicates, same fields,
  global length on the first
"""

from __future__ import annotations

from dataclasses import dataclass, field
import math
import tempfile
import time
from pathlib import Path
from typing import Callable

import numpy as np

from .chaos import standardized_cumulant4
from .field import SphericalPoint, eval_field, eval_gradient, field_from_coeffs, sample_field
from .legendre import eval_assoc_basis, legendre_values, pl4_expansion
from .mc import (ExperimentConfig, clt_check, estimate, leave_one_out_cov, run_experiment,
                 standardize, write_csv)
from .nodal import CapDomain, nodal_length_cap, nodal_length_global
from .theory import (k_exact, k_expansion, kac_rice_second_moment, predict_identities,
                     predict_mean_local, predict_var_local, w_cap, w_planar)

__all__ = ["CriterionResult", "AcceptanceSuite", "CRITERIA", "format_table"]

SEED_MEAN = 50_400
SEED_SWEEP = 500_200
SEED_PROPERTY = 13
SWEEP_ELLS = (50, 100, 200)
SWEEP_REPS = 500
SWEEP_VAR_REPS = 300
DECOR_REPS = 1000


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    detail: dict = field(default_factory=dict)
    seconds: float = 0.0

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        info = "; ".join(f"{k}={_fmt(v)}" for k, v in self.detail.items())
        return f"[{status}] {self.number:2d} {self.name} ({self.seconds:.1f}s): {info}"


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.6g}"
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_fmt(x) for x in v) + "]"
    return str(v)


def _column(records, name):
    return np.array([getattr(r, name) for r in records], dtype=float)


class AcceptanceSuite:
    def __init__(self, threads: int = 1):
        self.threads = threads
        self._data: dict = {}

    def _run(self, key, **kwargs):
        if key not in self._data:
            cfg = ExperimentConfig(threads=self.threads, timing=False, **kwargs)
            self._data[key] = run_experiment(cfg)[0]
        return self._data[key]

    def mean_data(self):
        return self._run("mean", ell=50, radius=0.4, reps=400, seed=SEED_MEAN, with_global=True)

    def sweep_data(self, ell):
        return self._run(("sweep", ell), ell=ell, radius=0.5, reps=SWEEP_REPS, seed=SEED_SWEEP)

    def decor_data(self, radius):
        return self._run(("decor", radius), ell=200, radius=radius, reps=DECOR_REPS,
                         seed=SEED_SWEEP, with_global=(radius == 0.25))

    # ------------------------------------------------------------ criteria

    def c1_geometric(self):
        t0 = time.perf_counter()
        f = field_from_coeffs(1, [0.0, 0.0, 1.0])
        cap = nodal_length_cap(f, CapDomain(0.5, 512)).total_length
        glob = nodal_length_global(f).total_length
        seconds = time.perf_counter() - t0
        ok = abs(cap - 1.0) <= 1e-3 and abs(glob - 2 * math.pi) <= 1e-2 and seconds < 5.0
        return ok, {"cap_length": cap, "global_length": glob, "seconds": seconds}

    def c2_mean(self):
        recs = self.mean_data()
        z = _column(recs, "z_local")
        mean, se = z.mean(), z.std(ddof=1) / math.sqrt(z.size)
        pred = predict_mean_local(50, 0.4)
        return abs(mean - pred) <= 3 * se, {"mean": mean, "predicted": pred, "se": se,
                                             "z_score": (mean - pred) / se}

    def c3_covariance_identity(self):
        recs = self.mean_data()
        x = np.column_stack([_column(recs, "z_local"), _column(recs, "z_global")])
        k = (1 - math.cos(0.4)) / 2
        full, loo = leave_one_out_cov(x)
        diff = full[0, 1] - k * full[1, 1]
        d_loo = loo[:, 0, 1] - k * loo[:, 1, 1]
        n = x.shape[0]
        se = math.sqrt((n - 1) / n * np.sum((d_loo - d_loo.mean()) ** 2))
        return abs(diff) <= 3 * se, {"cov": full[0, 1], "predicted": k * full[1, 1],
                                     "jackknife_se": se}

    def c4_second_moment(self):
        t0 = time.perf_counter()
        m2, var_q = kac_rice_second_moment(50, 0.4, return_variance=True)
        quad_seconds = time.perf_counter() - t0
        z = _column(self.mean_data(), "z_local")
        z2 = z**2
        mc, se = z2.mean(), z2.std(ddof=1) / math.sqrt(z.size)
        ok = abs(m2 - mc) <= 3 * se and quad_seconds < 30.0
        return ok, {"quadrature": m2, "mc": mc, "se": se,
                                        "quad_variance": var_q, "mc_variance": z.var(ddof=1),
                                        "quad_seconds": quad_seconds}

    def c5_variance_ratio(self):
        ratios = []
        for ell in (100, 200):
            z = _column(self.sweep_data(ell)[:SWEEP_VAR_REPS], "z_local")
            ratios.append(z.var(ddof=1) / predict_var_local(ell, 0.5))
        return all(0.5 <= q <= 2.0 for q in ratios), {"ratios_l100_l200": ratios}

    def _sweep_estimates(self):
        return [estimate(self.sweep_data(ell)) for ell in SWEEP_ELLS]

    def c6_full_correlation(self):
        corr = [e.corr["z_local,m_local"] for e in self._sweep_estimates()]
        increasing = all(b > a for a, b in zip(corr, corr[1:]))
        return increasing and corr[-1] >= 0.6, {"corr_l50_l100_l200": corr,
                                                 "increasing": increasing}

    def c7_berry(self):
        ratio = [e.variance["proj2"] / e.variance["z_local"] for e in self._sweep_estimates()]
        decreasing = all(b < a for a, b in zip(ratio, ratio[1:]))
        return decreasing and ratio[-1] <= 0.25, {"var_ratio_l50_l100_l200": ratio,
                                                   "decreasing": decreasing}

    def c8_decorrelation(self):
        wide, narrow = self.decor_data(0.25), self.decor_data(0.125)
        zg = _column(wide, "z_global")
        c_wide = float(np.corrcoef(_column(wide, "z_local"), zg)[0, 1])
        c_narrow = float(np.corrcoef(_column(narrow, "z_local"), zg)[0, 1])
        bound = predict_identities(200, 0.25)["corr_local_global_bound"]
        ok = abs(c_wide) <= 2 * bound and abs(c_narrow) < abs(c_wide)
        return ok, {"corr_r0.25": c_wide, "corr_r0.125": c_narrow, "bound": bound}

    def c9_clt(self):
        recs = self.sweep_data(200)
        z = clt_check(standardize(_column(recs, "z_local")))
        m = clt_check(standardize(_column(recs, "m_local")))
        return z.passed and m.passed, {"D_z": z.statistic, "D_m": m.statistic,
                                       "threshold": z.threshold}

    def c10_cumulant(self):
        k50, se50 = standardized_cumulant4(_column(self.sweep_data(50), "m_local"))
        k200, se200 = standardized_cumulant4(_column(self.sweep_data(200), "m_local"))
        slack = 3 * math.hypot(se50, se200)
        return abs(k200) <= abs(k50) + slack, {"k4_l50": k50, "k4_l200": k200,
                                               "combined_3se": slack}

    def c11_expansions(self):
        psis = (10.0, 20.0, 40.0, 80.0)
        err = [abs(k_exact(100, p) - k_expansion(100, p)) for p in psis]
        monotone = all(b <= a for a, b in zip(err, err[1:]))
        worst = 0.0
        for ell in (50, 100, 200):
            L = ell + 0.5
            psi = np.linspace(5.0, min(100.0, math.pi * L / 2 - 1e-6), 400)
            exact = legendre_values(ell, np.cos(psi / L))[0] ** 4
            worst = max(worst, float(np.max(np.abs(pl4_expansion(ell, psi) - exact) * psi**3)))
        ok = monotone and err[-1] <= 0.01 and worst <= 10.0
        return ok, {"k_errors_psi10_20_40_80": err, "k_monotone": monotone,
                    "pl4_max_err_times_psi3": worst}

    def c12_w_functions(self):
        w0_zero = w_planar(0.0)[1]
        ok0 = abs(w0_zero - 2 * math.pi**2) <= 1e-9
        rel = {}
        for r in (0.05, 0.1, 0.2):
            rho = np.linspace(0.0, 2 * r, 41)
            planar = np.array([r**3 * w_planar(p / r)[0] for p in rho])
            sphere = np.array([w_cap(r, p) for p in rho])
            rel[r] = float(np.max(np.abs(sphere - planar)) / np.max(np.abs(planar)))
        ok_rel = all(v <= 5 * (2 * r) ** 2 for r, v in rel.items())
        w0_max = max(w_planar(p)[1] for p in np.linspace(0.0, 2.0, 201))
        ok_max = w0_max <= 2 * math.pi**2 + 1e-12
        return ok0 and ok_rel and ok_max, {"w0_at_0_minus_2pi2": w0_zero - 2 * math.pi**2,
                                           "small_cap_rel_dev": list(rel.values()),
                                           "w0_max": w0_max}

    def c13_properties(self):
        rng = np.random.default_rng(SEED_PROPERTY)
        add_err = 0.0
        for _ in range(100):
            ell = int(rng.integers(0, 101))
            t1, t2 = rng.uniform(0, math.pi, 2)
            p1, p2 = rng.uniform(0, 2 * math.pi, 2)
            s = eval_assoc_basis(ell, t1, p1) @ eval_assoc_basis(ell, t2, p2)
            cd = math.cos(t1) * math.cos(t2) + math.sin(t1) * math.sin(t2) * math.cos(p1 - p2)
            ref = (2 * ell + 1) / (4 * math.pi) * float(legendre_values(ell, cd)[0])
            add_err = max(add_err, abs(s - ref))

        grad_err = 0.0
        h = 1e-5
        for k in range(20):
            f = sample_field(int(rng.integers(1, 60)), 1000 + k)
            th, ph = rng.uniform(0.2, math.pi - 0.2), rng.uniform(0, 2 * math.pi)
            g = eval_gradient(f, SphericalPoint(th, ph))
            fd_t = (eval_field(f, SphericalPoint(th + h, ph)) - eval_field(f, SphericalPoint(th - h, ph))) / (2 * h)
            fd_p = (eval_field(f, SphericalPoint(th, ph + h)) - eval_field(f, SphericalPoint(th, ph - h))) / (2 * h * math.sin(th))
            scale = max(np.linalg.norm(g), 1e-12)
            grad_err = max(grad_err, float(np.linalg.norm(g - [fd_t, fd_p]) / scale))

        base = dict(ell=20, radius=0.5, reps=12, seed=SEED_PROPERTY, timing=False, with_global=True)
        serial = run_experiment(ExperimentConfig(threads=1, **base))[1]
        parallel = run_experiment(ExperimentConfig(threads=2, **base))[1]
        par_err = 0.0
        for name in ("mean", "variance", "cov", "corr"):
            a, b = getattr(serial, name), getattr(parallel, name)
            for key in a:
                par_err = max(par_err, abs(a[key] - b[key]) / max(abs(a[key]), 1e-300))

        with tempfile.TemporaryDirectory() as tmp:
            paths = []
            for k in range(2):
                p = Path(tmp) / f"run{k}.csv"
                recs = run_experiment(ExperimentConfig(threads=1, **{**base, "reps": 3}))[0]
                write_csv(recs, p)
                paths.append(p.read_bytes())
            identical = paths[0] == paths[1]
        ok = add_err <= 1e-9 and grad_err <= 1e-6 and par_err <= 1e-10 and identical
        return ok, {"addition_err": add_err, "gradient_rel_err": grad_err,
                    "parallel_rel_err": par_err, "byte_identical": identical}

    # ------------------------------------------------------------ driver

    def run(self, number: int) -> CriterionResult:
        name, method = CRITERIA[number]
        t0 = time.perf_counter()
        passed, detail = method(self)
        return CriterionResult(number, name, bool(passed), detail, time.perf_counter() - t0)

    def run_all(self, numbers=None, on_result: Callable | None = None) -> list[CriterionResult]:
        out = []
        for n in numbers or sorted(CRITERIA):
            res = self.run(n)
            out.append(res)
            if on_result:
                on_result(res)
        return out


CRITERIA = {
    1: ("geometric oracle", AcceptanceSuite.c1_geometric),
    2: ("Kac-Rice mean", AcceptanceSuite.c2_mean),
    3: ("covariance identity", AcceptanceSuite.c3_covariance_identity),
    4: ("second moment quadrature", AcceptanceSuite.c4_second_moment),
    5: ("variance leading order", AcceptanceSuite.c5_variance_ratio),
    6: ("full correlation trend", AcceptanceSuite.c6_full_correlation),
    7: ("Berry cancellation", AcceptanceSuite.c7_berry),
    8: ("decorrelation from global", AcceptanceSuite.c8_decorrelation),
    9: ("CLT", AcceptanceSuite.c9_clt),
    10: ("fourth cumulant trend", AcceptanceSuite.c10_cumulant),
    11: ("expansion accuracy", AcceptanceSuite.c11_expansions),
    12: ("W-functions", AcceptanceSuite.c12_w_functions),
    13: ("property suites", AcceptanceSuite.c13_properties),
}


def format_table(results) -> str:
    lines = [r.line() for r in results]
    n_pass = sum(r.passed for r in results)
    lines.append(f"{n_pass}/{len(results)} criteria passed")
    return "\n".join(lines)
