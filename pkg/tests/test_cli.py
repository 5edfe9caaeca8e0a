import json

import pytest

from gibbstorus.cli import DEFAULTS, main, parse_config
from gibbstorus.errors import ConfigError


@pytest.fixture
def outdir(tmp_path, monkeypatch):
    monkeypatch.setenv("GIBBSTORUS_OUT", str(tmp_path / "out"))
    return tmp_path / "out"


def _write(tmp_path, text):
    p = tmp_path / "cfg.yaml"
    p.write_text(text)
    return str(p)


def test_defaults_are_materialized():
    cfg = parse_config("map: doubling\npotential: srb\n")
    assert cfg["spectral"] == DEFAULTS["spectral"]
    assert cfg["map"] == "doubling"


@pytest.mark.parametrize("text, field", [
    ("mapp: cat\n", "mapp"),
    ("spectral:\n  NN: 3\n", "spectral.NN"),
    ("spectral:\n  N: three\n", "spectral.N"),
    ("map: baker\n", "baker"),
    ("balls: 3\n", "balls"),
])
def test_config_errors_name_the_field(text, field):
    with pytest.raises(ConfigError, match=field):
        parse_config(text)


def test_yaml_syntax_error_reports_line():
    with pytest.raises(ConfigError, match=r"cfg\.yaml:\d+:\d+"):
        parse_config("map: cat\npotential: [zero\n", "cfg.yaml")


def test_bad_config_exits_2(tmp_path, outdir):
    assert main(["pressure", "-c", _write(tmp_path, "colour: red\n")]) == 2


def test_pressure_command(tmp_path, outdir):
    assert main(["pressure", "-c", _write(tmp_path, "spectral: {N: 6}\n")]) == 0
    rep = json.loads((outdir / "pressure" / "pressure.json").read_text())
    assert abs(rep["spectral"] - 0.962424) < 1e-6
    assert rep["encloses"]
    man = json.loads((outdir / "pressure" / "manifest.json").read_text())
    assert man["complete"] and man["config"]["spectral"]["N"] == 6
    assert "numpy" in man["versions"] and man["exit_status"] == 0


def test_artifacts_are_deterministic(tmp_path, outdir):
    cfg = _write(tmp_path, "map: doubling\npotential: 'fourier(0.5*cos(1))'\n"
                           "spectral: {N: 12}\ngibbs: {observables: ['fourier(1*cos(1))']}\n")
    files = {}
    for run in range(2):
        assert main(["gibbs", "-c", cfg]) == 0
        files[run] = {p: (outdir / "gibbs" / p).read_bytes() for p in ("gibbs.csv", "gibbs.json")}
    assert files[0] == files[1]


def test_csv_columns_are_documented(tmp_path, outdir):
    cfg = _write(tmp_path, "map: doubling\npotential: srb\nspectral: {N: 8}\nresonances: {k: 3}\n")
    assert main(["resonances", "-c", cfg]) == 0
    lines = (outdir / "resonances" / "resonances.csv").read_text().splitlines()
    header = [ln for ln in lines if not ln.startswith("#")][0].split(",")
    documented = [ln[2:].split(":")[0] for ln in lines if ln.startswith("#")]
    assert header == documented


def test_verify_subset(tmp_path, outdir, capsys):
    assert main(["verify", "--criteria", "8"]) == 0
    assert "PASS criterion 8" in capsys.readouterr().out


def test_worker_variable_must_be_integer(monkeypatch, outdir):
    monkeypatch.setenv("GIBBSTORUS_WORKERS", "many")
    assert main(["gibbs"]) == 2


def test_module_error_marks_manifest_incomplete(tmp_path, outdir):
    # perturbed cat at N=4 with the aliasing check on raises a module error
    cfg = _write(tmp_path, "map: perturbed_cat(0.3)\nspectral: {N: 4}\n")
    assert main(["gibbs", "-c", cfg]) == 1
    man = json.loads((outdir / "gibbs" / "manifest.json").read_text())
    assert man["complete"] is False and "QuadratureAliasing" in man["error"]
