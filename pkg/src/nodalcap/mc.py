"""Monte Carlo harness: realizations, estimators, normality checks, output."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
import csv
from dataclasses import asdict, dataclass
import datetime as dt
import io
import json
import math
from pathlib import Path
import time
from typing import Callable, Sequence
import warnings

import numpy as np
from scipy import stats

from . import __version__
from .chaos import InsufficientSamplesError, chaos_stats, standardized_cumulant4
from .field import RNG_ALGORITHM, sample_field
from .nodal import CapDomain, nodal_length_cap, nodal_length_global
from .theory import predict_var_local

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "RealizationRecord",
    "EstimateSet",
    "KSResult",
    "CSV_COLUMNS",
    "derive_seed",
    "realize",
    "run_experiment",
    "estimate",
    "clt_check",
    "standardize",
    "sweep",
    "write_csv",
    "write_manifest",
    "records_from_csv",
]

CSV_COLUMNS = ("master_seed", "replicate_index", "ell", "r", "grid_n", "z_local",
               "m_local", "z_global", "proj2", "wall_time_ms")
STAT_FIELDS = ("z_local", "m_local", "z_global", "proj2")


class ConfigError(ValueError):
    """Invalid experiment configuration; the message names the field."""


@dataclass(frozen=True)
class ExperimentConfig:
    ell: int
    radius: float
    reps: int = 100
    seed: int = 0
    grid: int | None = None
    global_grid: int | None = None
    threads: int = 1
    with_global: bool = False
    dump_segments: bool = False
    out: str | None = None
    # wall-clock timing is the only nondeterministic output column
    timing: bool = True

    def validate(self) -> "ExperimentConfig":
        if int(self.ell) != self.ell or self.ell < 1:
            raise ConfigError(f"ell: must be an integer >= 1, got {self.ell!r}")
        if not (0.0 < self.radius < math.pi):
            raise ConfigError("radius: radius must lie in (0, π)")
        if int(self.reps) != self.reps or self.reps < 1:
            raise ConfigError(f"reps: must be an integer >= 1, got {self.reps!r}")
        if not (0 <= int(self.seed) < 2**64):
            raise ConfigError("seed: must be a 64-bit nonnegative integer")
        if self.grid is not None and self.grid < 32:
            raise ConfigError("grid: must be at least 32")
        if self.global_grid is not None and self.global_grid < 64:
            raise ConfigError("global_grid: must be at least 64")
        if int(self.threads) != self.threads or self.threads < 1:
            raise ConfigError("threads: must be an integer >= 1")
        if self.radius * self.ell < 10:
            warnings.warn(f"r * ell = {self.radius * self.ell:.3g} < 10: the cap holds few "
                          "wavelengths and asymptotic predictions are unreliable", stacklevel=2)
        return self


@dataclass(frozen=True)
class RealizationRecord:
    master_seed: int
    replicate_index: int
    ell: int
    r: float
    grid_n: int
    z_local: float
    m_local: float
    z_global: float | None
    proj2: float
    wall_time_ms: float | None = None

    def csv_row(self) -> list[str]:
        def num(x):
            return "" if x is None else repr(float(x))
        return [str(self.master_seed), str(self.replicate_index), str(self.ell), repr(self.r),
                str(self.grid_n), num(self.z_local), num(self.m_local), num(self.z_global),
                num(self.proj2), "" if self.wall_time_ms is None else f"{self.wall_time_ms:.3f}"]


def derive_seed(master_seed: int, replicate_index: int) -> int:
    """64-bit seed of one replicate, independent of scheduling."""
    ss = np.random.SeedSequence([int(master_seed), int(replicate_index)])
    return int(ss.generate_state(1, np.uint64)[0])


def realize(config: ExperimentConfig, replicate_index: int):
    """One realization: returns the record and, if requested, its polylines."""
    t0 = time.perf_counter()
    f = sample_field(config.ell, derive_seed(config.seed, replicate_index))
    cap = CapDomain(config.radius, config.grid)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        local = nodal_length_cap(f, cap, keep_segments=config.dump_segments)
        chaos = chaos_stats(f, cap)
        glob = (nodal_length_global(f, config.global_grid, keep_segments=config.dump_segments)
                if config.with_global else None)
    elapsed = (time.perf_counter() - t0) * 1e3 if config.timing else None
    record = RealizationRecord(
        int(config.seed), int(replicate_index), int(config.ell), float(config.radius),
        local.grid_n_used, local.total_length, chaos.m_local,
        None if glob is None else glob.total_length, chaos.proj2, elapsed)
    segments = None
    if config.dump_segments:
        def pts(lines):
            return [[{"theta": p.theta, "phi": p.phi} for p in line] for line in lines]
        segments = {"cap": pts(local.segments)}
        if glob is not None:
            segments["global"] = pts(glob.segments)
    return record, segments


def _realize_chunk(args):
    config, indices = args
    return [realize(config, i) for i in indices]


def _run_records(config: ExperimentConfig):
    indices = list(range(config.reps))
    if config.threads == 1 or config.reps == 1:
        out = [realize(config, i) for i in indices]
    else:
        n_chunks = min(config.reps, 4 * config.threads)
        chunks = [indices[k::n_chunks] for k in range(n_chunks)]
        with ProcessPoolExecutor(max_workers=config.threads) as pool:
            out = [item for part in pool.map(_realize_chunk, [(config, c) for c in chunks])
                   for item in part]
    out.sort(key=lambda item: item[0].replicate_index)
    return [o[0] for o in out], [o[1] for o in out]


# ------------------------------------------------------------- estimators


@dataclass
class EstimateSet:
    """Summary statistics of a set of records with delete-one jackknife SEs.

    ``cov`` and ``corr`` are keyed by "a,b" field pairs.  ``k4`` holds the
    fourth cumulant of the standardized z_local and m_local.
    """

    n: int
    fields: tuple
    mean: dict
    mean_se: dict
    variance: dict
    variance_se: dict
    cov: dict
    cov_se: dict
    corr: dict
    corr_se: dict
    k4: dict
    k4_se: dict

    def to_dict(self) -> dict:
        return asdict(self)


def _jackknife_se(values: np.ndarray) -> float:
    n = values.shape[0]
    return float(math.sqrt((n - 1) / n * np.sum((values - values.mean()) ** 2)))


def leave_one_out_cov(x: np.ndarray):
    """Full-sample and leave-one-out covariance matrices of the columns."""
    n = x.shape[0]
    xc = x - x.mean(axis=0)
    s1 = xc.sum(axis=0)
    s2 = xc.T @ xc
    full = (s2 - np.outer(s1, s1) / n) / (n - 1)
    s1_i = s1[None, :] - xc
    s2_i = s2[None, :, :] - xc[:, :, None] * xc[:, None, :]
    loo = (s2_i - s1_i[:, :, None] * s1_i[:, None, :] / (n - 1)) / (n - 2)
    return full, loo


def estimate(records: Sequence[RealizationRecord]) -> EstimateSet:
    n = len(records)
    if n < 3:
        raise InsufficientSamplesError("at least 3 records are needed")
    names = [k for k in STAT_FIELDS if all(getattr(r, k) is not None for r in records)]
    x = np.array([[getattr(r, k) for k in names] for r in records], dtype=float)
    full, loo = leave_one_out_cov(x)
    mean = dict(zip(names, x.mean(axis=0).tolist()))
    mean_se = {k: math.sqrt(full[i, i] / n) for i, k in enumerate(names)}
    variance = {k: float(full[i, i]) for i, k in enumerate(names)}
    variance_se = {k: _jackknife_se(loo[:, i, i]) for i, k in enumerate(names)}
    cov, cov_se, corr, corr_se = {}, {}, {}, {}
    for i, a in enumerate(names):
        for j in range(i + 1, len(names)):
            b = names[j]
            key = f"{a},{b}"
            cov[key] = float(full[i, j])
            cov_se[key] = _jackknife_se(loo[:, i, j])
            denom = math.sqrt(full[i, i] * full[j, j])
            corr[key] = float(full[i, j] / denom) if denom > 0 else 0.0
            with np.errstate(invalid="ignore", divide="ignore"):
                loo_corr = loo[:, i, j] / np.sqrt(loo[:, i, i] * loo[:, j, j])
            corr_se[key] = _jackknife_se(np.nan_to_num(loo_corr)) if denom > 0 else 0.0
    k4, k4_se = {}, {}
    if n >= 9:
        for k in ("z_local", "m_local"):
            k4[k], k4_se[k] = standardized_cumulant4(x[:, names.index(k)])
    return EstimateSet(n, tuple(names), mean, mean_se, variance, variance_se,
                       cov, cov_se, corr, corr_se, k4, k4_se)


# ----------------------------------------------------------- normality


@dataclass(frozen=True)
class KSResult:
    statistic: float
    threshold: float
    n: int
    passed: bool


def standardize(samples) -> np.ndarray:
    x = np.asarray(samples, dtype=float)
    sd = x.std(ddof=1)
    return (x - x.mean()) / sd if sd > 0 else np.zeros_like(x)


def clt_check(samples, threshold: float | None = None) -> KSResult:
    """Kolmogorov-Smirnov distance of standardized samples to N(0, 1).

    Passes when the distance is below ``threshold``, by default 1.63/sqrt(n),
    the 1% critical value.
    """
    x = np.asarray(samples, dtype=float)
    n = x.size
    if n < 200:
        raise InsufficientSamplesError("at least 200 samples are needed")
    limit = 1.63 / math.sqrt(n) if threshold is None else float(threshold)
    d = float(stats.kstest(x, "norm").statistic)
    return KSResult(d, limit, n, d < limit)


# ------------------------------------------------------------ persistence


def write_csv(records: Sequence[RealizationRecord], path) -> None:
    path = Path(path)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in sorted(records, key=lambda r: r.replicate_index):
        w.writerow(r.csv_row())
    path.write_text(buf.getvalue())


def records_from_csv(path) -> list[RealizationRecord]:
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            def opt(k):
                return float(row[k]) if row[k] != "" else None
            out.append(RealizationRecord(
                int(row["master_seed"]), int(row["replicate_index"]), int(row["ell"]),
                float(row["r"]), int(row["grid_n"]), float(row["z_local"]),
                float(row["m_local"]), opt("z_global"), float(row["proj2"]),
                opt("wall_time_ms")))
    return out


def manifest_path(csv_path) -> Path:
    p = Path(csv_path)
    return p.with_name(p.stem + ".manifest.json")


def write_manifest(config: ExperimentConfig, path, started: str, finished: str,
                   estimates: EstimateSet | None = None) -> Path:
    target = manifest_path(path)
    data = {
        "config": asdict(config),
        "rng_algorithm": RNG_ALGORITHM,
        "replicate_seed_rule": "SeedSequence([master_seed, replicate_index]) -> uint64",
        "library": "nodalcap",
        "library_version": __version__,
        "started": started,
        "finished": finished,
        "angles": "radians",
    }
    if estimates is not None:
        data["estimates"] = estimates.to_dict()
    target.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")
    return target


def _now() -> str:
    return dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds")


def run_experiment(config: ExperimentConfig):
    """Run ``config.reps`` realizations; write CSV and manifest if ``out`` is set."""
    config.validate()
    started = _now()
    records, segments = _run_records(config)
    estimates = estimate(records) if len(records) >= 3 else None
    if config.out:
        write_csv(records, config.out)
        write_manifest(config, config.out, started, _now(), estimates)
        if config.dump_segments:
            seg_dir = Path(config.out).with_suffix(".segments")
            seg_dir.mkdir(parents=True, exist_ok=True)
            for rec, seg in zip(records, segments):
                (seg_dir / f"rep_{rec.replicate_index:06d}.json").write_text(json.dumps(seg))
    return records, estimates


# ----------------------------------------------------------------- sweeps


def radius_rule(rule) -> Callable[[int], float]:
    """Fixed radius (a float) or r = c * ell**(-alpha) given as (c, alpha)."""
    if isinstance(rule, (int, float)):
        return lambda ell: float(rule)
    if callable(rule):
        return rule
    c, alpha = rule
    if not alpha < 1:
        raise ConfigError("r_rule: alpha must be < 1 so that r * ell grows")
    return lambda ell: float(c) * ell ** (-float(alpha))


def sweep(ell_list, r_rule, reps: int, seed: int = 0, threads: int = 1,
          grid: int | None = None) -> list[dict]:
    """Per-degree estimates with variance-ratio and correlation columns."""
    ells = [int(e) for e in ell_list]
    if any(b <= a for a, b in zip(ells, ells[1:])):
        raise ConfigError("ell_list: must be strictly increasing")
    rule = radius_rule(r_rule)
    rows = []
    for ell in ells:
        r = rule(ell)
        cfg = ExperimentConfig(ell, r, reps=reps, seed=seed, threads=threads, grid=grid)
        records, est = run_experiment(cfg)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            lead = predict_var_local(ell, r)
        var_z = est.variance["z_local"] if est else float("nan")
        rows.append({
            "ell": ell,
            "r": r,
            "n": len(records),
            "mean_z": est.mean["z_local"] if est else records[0].z_local,
            "var_z": var_z,
            "var_ratio": var_z / lead if lead > 0 else float("nan"),
            "corr_z_m": est.corr["z_local,m_local"] if est else float("nan"),
            "var_proj2_over_var_z": (est.variance["proj2"] / var_z) if est else float("nan"),
        })
    return rows
