import csv
import json

import pytest

pytestmark = pytest.mark.filterwarnings("ignore:r \\* ell:UserWarning")

from nodalcap.cli import build_parser, main


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_predict_json(capsys):
    code, out, _ = run(capsys, "predict", "--ell", "200", "--radius", "0.5")
    assert code == 0
    report = json.loads(out)
    assert report["ell"] == 200 and report["r"] == 0.5
    assert report["kinds"]["var_local_asym"] == "asymptotic"


def test_predict_csv_row(capsys):
    code, out, _ = run(capsys, "predict", "--ell", "50", "--radius", "0.4", "--format", "csv")
    rows = list(csv.DictReader(out.splitlines()))
    assert code == 0 and len(rows) == 1 and rows[0]["ell"] == "50"


def test_bad_radius_exits_2(capsys):
    code, _, err = run(capsys, "predict", "--radius", "4.0")
    assert code == 2
    assert "radius must lie in (0, π)" in err


def test_unknown_flag_is_an_error(capsys):
    code, _, err = run(capsys, "predict", "--bogus")
    assert code == 2 and "unrecognized" in err
    code, _, _ = run(capsys, "frobnicate")
    assert code == 2


def test_help_lists_every_flag(capsys):
    for sub in ("predict", "sample", "mc", "sweep", "validate"):
        code, out, _ = run(capsys, sub, "--help")
        assert code == 0
        for flag in ("--ell", "--radius", "--grid", "--reps", "--seed", "--threads", "--out",
                     "--with-global", "--dump-segments", "--config"):
            assert flag in out


def test_config_precedence(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"ell": 30, "radius": 0.7}))
    _, out, _ = run(capsys, "predict", "--config", str(cfg))
    assert json.loads(out)["ell"] == 30 and json.loads(out)["r"] == 0.7
    _, out, _ = run(capsys, "predict", "--config", str(cfg), "--ell", "40")
    assert json.loads(out)["ell"] == 40 and json.loads(out)["r"] == 0.7
    _, out, _ = run(capsys, "predict")
    assert json.loads(out)["ell"] == 100 and json.loads(out)["r"] == 0.5


def test_bad_config_file(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"colour": 3}))
    code, _, err = run(capsys, "predict", "--config", str(cfg))
    assert code == 2 and "colour" in err
    code, _, _ = run(capsys, "predict", "--config", str(tmp_path / "missing.json"))
    assert code == 2


def test_mc_writes_csv_and_manifest(tmp_path, capsys):
    out = tmp_path / "run.csv"
    code, stdout, _ = run(capsys, "mc", "--ell", "20", "--radius", "0.5", "--reps", "5",
                          "--seed", "1", "--out", str(out))
    assert code == 0
    rows = list(csv.DictReader(out.read_text().splitlines()))
    assert len(rows) == 5 and rows[0]["master_seed"] == "1"
    assert (tmp_path / "run.manifest.json").exists()
    assert json.loads(stdout)["n"] == 5


def test_sample_and_sweep(capsys):
    code, out, _ = run(capsys, "sample", "--ell", "15", "--seed", "3")
    assert code == 0 and json.loads(out)["z_local"] > 0
    code, out, _ = run(capsys, "sweep", "--ells", "15,20", "--reps", "3", "--rule", "0.6")
    assert code == 0 and len(out.strip().splitlines()) == 3
    code, _, err = run(capsys, "sweep", "--ells", "20,15")
    assert code == 2 and "ells" in err


def test_validate_subset(capsys):
    code, out, _ = run(capsys, "validate", "--criteria", "1,12")
    assert code == 0
    assert out.count("[PASS]") == 2


def test_parser_builds():
    assert build_parser().prog == "nodalcap"


def test_config_schema_matches_cli_fields():
    from dataclasses import fields
    from pathlib import Path

    from nodalcap.cli import CliConfig

    schema = json.loads((Path(__file__).parents[1] / "docs" / "config_schema.json").read_text())
    assert set(schema["properties"]) == {f.name for f in fields(CliConfig)} - {"subcommand"}
    for name, entry in schema["properties"].items():
        if "default" in entry:
            default = getattr(CliConfig("predict"), name)
            assert (list(default) if isinstance(default, tuple) else default) == entry["default"]
