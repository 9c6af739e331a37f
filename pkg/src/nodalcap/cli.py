"""Command-line front end.

All angles are in radians.  Settings are resolved as command-line flags,
then keys of a JSON file given with ``--config``, then built-in defaults.
Exit status is 0 on success, 2 for invalid configuration and 1 for
runtime failures or failed acceptance checks.
"""

from __future__ import annotations

import argparse
import csv
from dataclasses import asdict, dataclass, fields
import io
import json
import math
from pathlib import Path
import sys
import warnings

from . import __version__
from .legendre import DomainError
from .mc import ConfigError

__all__ = ["CliConfig", "build_parser", "resolve_config", "main"]

SUBCOMMANDS = ("predict", "sample", "mc", "sweep", "validate")


@dataclass
class CliConfig:
    subcommand: str
    ell: int = 100
    radius: float = 0.5
    grid: int | None = None
    reps: int = 100
    seed: int = 0
    threads: int = 1
    out: str | None = None
    with_global: bool = False
    dump_segments: bool = False
    # subcommand-specific
    quadrature: bool = False
    var_global: float | None = None
    format: str = "json"
    ells: tuple = (50, 100, 200)
    rule: str = "0.5"
    criteria: tuple | None = None
    no_timing: bool = False

    def validate(self) -> "CliConfig":
        if self.subcommand not in SUBCOMMANDS:
            raise ConfigError(f"subcommand: unknown {self.subcommand!r}")
        if not isinstance(self.ell, int) or self.ell < 1:
            raise ConfigError("ell: must be an integer >= 1")
        if not (0.0 < float(self.radius) < math.pi):
            raise ConfigError("radius: radius must lie in (0, π)")
        if self.grid is not None and (not isinstance(self.grid, int) or self.grid < 32):
            raise ConfigError("grid: must be an integer >= 32")
        if not isinstance(self.reps, int) or self.reps < 1:
            raise ConfigError("reps: must be an integer >= 1")
        if not isinstance(self.seed, int) or not 0 <= self.seed < 2**64:
            raise ConfigError("seed: must be an integer in [0, 2^64)")
        if not isinstance(self.threads, int) or self.threads < 1:
            raise ConfigError("threads: must be an integer >= 1")
        if self.format not in ("json", "csv"):
            raise ConfigError("format: must be 'json' or 'csv'")
        ells = list(self.ells)
        if not ells or any(int(e) != e or e < 1 for e in ells):
            raise ConfigError("ells: must be positive integers")
        if any(b <= a for a, b in zip(ells, ells[1:])):
            raise ConfigError("ells: must be strictly increasing")
        _parse_rule(self.rule)
        if self.criteria is not None and any(c not in range(1, 14) for c in self.criteria):
            raise ConfigError("criteria: numbers must lie in 1..13")
        return self


def _parse_rule(text):
    """'0.5' is a fixed radius; '2.0,0.5' means r = 2.0 * ell**-0.5."""
    try:
        parts = [float(p) for p in str(text).split(",")]
    except ValueError:
        raise ConfigError(f"rule: cannot parse {text!r}") from None
    if len(parts) == 1:
        if not 0.0 < parts[0] < math.pi:
            raise ConfigError("rule: radius must lie in (0, π)")
        return parts[0]
    if len(parts) != 2 or parts[0] <= 0 or not parts[1] < 1:
        raise ConfigError("rule: expected 'c,alpha' with c > 0 and alpha < 1")
    return tuple(parts)


def _int_list(text):
    try:
        return tuple(int(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    g = common.add_argument_group("common options (angles in radians)")
    g.add_argument("--config", help="JSON file with default settings; flags override it")
    g.add_argument("--ell", type=int, help="harmonic degree (default 100)")
    g.add_argument("--radius", type=float, help="cap radius in radians, in (0, pi) (default 0.5)")
    g.add_argument("--grid", type=int, help="cells across the cap diameter (default about 24 per wavelength)")
    g.add_argument("--reps", type=int, help="number of realizations (default 100)")
    g.add_argument("--seed", type=int, help="master seed, 64-bit (default 0)")
    g.add_argument("--threads", type=int, help="worker processes (default 1)")
    g.add_argument("--out", help="output path (CSV for mc and sweep, JSON for sample)")
    g.add_argument("--with-global", action="store_true", dest="with_global",
                   help="also compute the whole-sphere nodal length")
    g.add_argument("--dump-segments", action="store_true", dest="dump_segments",
                   help="write nodal polylines next to the output")

    parser = argparse.ArgumentParser(prog="nodalcap", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"nodalcap {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True, metavar="SUBCOMMAND")

    p = sub.add_parser("predict", parents=[common], help="theoretical predictions as JSON or CSV")
    p.add_argument("--quadrature", action="store_true", default=argparse.SUPPRESS,
                   help="also evaluate the exact second moment by quadrature (slow)")
    p.add_argument("--var-global", type=float, dest="var_global", default=argparse.SUPPRESS,
                   help="estimated global variance, makes the covariance prediction exact")
    p.add_argument("--format", choices=("json", "csv"), default=argparse.SUPPRESS,
                   help="output format (default json)")

    sub.add_parser("sample", parents=[common], help="statistics of one realization")

    p = sub.add_parser("mc", parents=[common], help="Monte Carlo experiment")
    p.add_argument("--no-timing", action="store_true", dest="no_timing", default=argparse.SUPPRESS,
                   help="leave wall_time_ms empty so reruns are byte-identical")

    p = sub.add_parser("sweep", parents=[common], help="trend table over several degrees")
    p.add_argument("--ells", type=_int_list, default=argparse.SUPPRESS,
                   help="increasing degrees, comma separated (default 50,100,200)")
    p.add_argument("--rule", default=argparse.SUPPRESS,
                   help="fixed radius 'r' or 'c,alpha' for r = c * ell**-alpha (default 0.5)")

    p = sub.add_parser("validate", parents=[common], help="run the acceptance suite")
    p.add_argument("--criteria", type=_int_list, default=argparse.SUPPRESS,
                   help="subset of criteria numbers, comma separated (default all)")
    return parser


def resolve_config(args: argparse.Namespace) -> CliConfig:
    """Merge defaults, the JSON config file and command-line flags."""
    values = {}
    flags = vars(args).copy()
    path = flags.pop("config", None)
    known = {f.name for f in fields(CliConfig)} - {"subcommand"}
    if path is not None:
        try:
            data = json.loads(Path(path).read_text())
        except OSError as exc:
            raise ConfigError(f"config: cannot read {path}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config: invalid JSON in {path}: {exc.msg}") from None
        if not isinstance(data, dict):
            raise ConfigError("config: top level must be an object")
        for key, value in data.items():
            name = key.replace("-", "_")
            if name not in known:
                raise ConfigError(f"config: unknown key {key!r}")
            values[name] = tuple(value) if isinstance(value, list) else value
    values.update(flags)
    cfg = CliConfig(**values)
    if isinstance(cfg.radius, int):
        cfg.radius = float(cfg.radius)
    return cfg.validate()


# ---------------------------------------------------------------- commands


def _csv_text(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    return buf.getvalue()


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _cmd_predict(cfg: CliConfig) -> int:
    from .theory import theory_report

    report = theory_report(cfg.ell, cfg.radius, cfg.var_global, cfg.quadrature).to_dict()
    if cfg.format == "json":
        _emit(json.dumps(report, indent=2) + "\n", cfg.out)
    else:
        flat = {k: v for k, v in report.items() if k != "kinds"}
        _emit(_csv_text([flat]), cfg.out)
    return 0


def _experiment(cfg: CliConfig, reps: int, out):
    from .mc import ExperimentConfig

    return ExperimentConfig(cfg.ell, cfg.radius, reps=reps, seed=cfg.seed, grid=cfg.grid,
                            threads=cfg.threads, with_global=cfg.with_global,
                            dump_segments=cfg.dump_segments, out=out,
                            timing=not cfg.no_timing).validate()


def _cmd_sample(cfg: CliConfig) -> int:
    from .mc import realize

    exp = _experiment(cfg, 1, None)
    record, segments = realize(exp, 0)
    result = asdict(record)
    if cfg.dump_segments:
        result["segments"] = segments
    _emit(json.dumps(result, indent=2) + "\n", cfg.out)
    return 0


def _cmd_mc(cfg: CliConfig) -> int:
    from .mc import CSV_COLUMNS, run_experiment

    records, estimates = run_experiment(_experiment(cfg, cfg.reps, cfg.out))
    if cfg.out:
        summary = estimates.to_dict() if estimates else {"n": len(records)}
        sys.stdout.write(json.dumps(summary, indent=2) + "\n")
    else:
        text = io.StringIO()
        w = csv.writer(text, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        w.writerows(r.csv_row() for r in records)
        sys.stdout.write(text.getvalue())
    return 0


def _cmd_sweep(cfg: CliConfig) -> int:
    from .mc import sweep

    rows = sweep(cfg.ells, _parse_rule(cfg.rule), cfg.reps, seed=cfg.seed,
                 threads=cfg.threads, grid=cfg.grid)
    _emit(_csv_text(rows), cfg.out)
    return 0


def _cmd_validate(cfg: CliConfig) -> int:
    from .validation import AcceptanceSuite, format_table

    suite = AcceptanceSuite(threads=cfg.threads)

    def show(res):
        print(res.line(), flush=True)

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        results = suite.run_all(cfg.criteria, on_result=show)
    print(format_table(results).splitlines()[-1])
    if cfg.out:
        Path(cfg.out).write_text(format_table(results) + "\n")
    return 0 if all(r.passed for r in results) else 1


COMMANDS = {"predict": _cmd_predict, "sample": _cmd_sample, "mc": _cmd_mc,
            "sweep": _cmd_sweep, "validate": _cmd_validate}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = resolve_config(args)
    except (ConfigError, DomainError, TypeError, ValueError) as exc:
        print(f"nodalcap: error: {exc}", file=sys.stderr)
        return 2
    try:
        return COMMANDS[cfg.subcommand](cfg)
    except (ConfigError, DomainError) as exc:
        print(f"nodalcap: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        print(f"nodalcap: runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
