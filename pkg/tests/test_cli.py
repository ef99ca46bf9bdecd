import json

import pytest

from tonelli_gl import presets, scenario
from tonelli_gl.cli import main
from tonelli_gl.config import ScenarioConfig, parse_text
from tonelli_gl.errors import ConfigParseError, InvalidSpecError

VACUUM = "[run]\nkind = minimize\n[grid]\nN = 32\n[energy]\neps = 0.1\n"
RANDERS_BAD = VACUUM + "[finsler]\nvariant = randers\nmetric = 1 0 0 1\ndrift = 1.2 0\n"


def _write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_presets_listed_and_valid(capsys):
    assert main(["presets", "list"]) == 0
    listed = [line.split()[0] for line in capsys.readouterr().out.splitlines()]
    assert listed == presets.names()
    for name in listed:
        rep = scenario.validate_text(presets.text(name))
        assert rep["violations"] == [], name


def test_preset_show_roundtrips(capsys):
    assert main(["presets", "show", "c07-green"]) == 0
    assert isinstance(parse_text(capsys.readouterr().out), ScenarioConfig)
    assert main(["presets", "show", "nope"]) == 2


def test_validate_names_randers_violation(tmp_path, capsys):
    assert main(["validate", _write(tmp_path, "bad.ini", RANDERS_BAD)]) == 1
    rep = json.loads(capsys.readouterr().out)
    assert any("Randers smallness" in v for v in rep["violations"])


def test_validate_warns_on_unresolved_eps(tmp_path, capsys):
    assert main(["validate", _write(tmp_path, "w.ini", VACUUM.replace("0.1", str(1 / 128)))]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["violations"] == [] and any("resolution" in w for w in rep["warnings"])


def test_parse_error_exit_code(tmp_path, capsys):
    assert main(["run", _write(tmp_path, "p.ini", "[run\nkind=x\n")]) == 2
    err = json.loads(capsys.readouterr().err)
    assert err["code"] == "ConfigParseError"
    with pytest.raises(ConfigParseError):
        parse_text("[run]\nkind = teleport\n")


def test_invalid_spec_run_exit_code(tmp_path, capsys):
    assert main(["run", _write(tmp_path, "bad.ini", RANDERS_BAD)]) == 3
    err = json.loads(capsys.readouterr().err)
    assert set(err) == {"code", "module", "message", "context"}
    assert err["module"] == "tonelli-core"
    with pytest.raises(InvalidSpecError):
        parse_text(RANDERS_BAD)


def test_vacuum_run_outputs(tmp_path, capsys):
    assert main(["run", "vacuum", "--out", str(tmp_path / "a")]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["summary"]["energy"] <= 1e-10
    man = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert {"artifacts", "config_sha256", "kind", "seed", "status", "versions", "wall_time_s"} <= set(man)
    assert man["status"] == "ok"
    for name in man["artifacts"]:
        assert (tmp_path / "a" / name).exists()
    head = (tmp_path / "a" / "trace.csv").read_text().splitlines()[0]
    assert head == f"# seed=0 config_sha256={man['config_sha256']}"


def test_runs_are_deterministic(tmp_path):
    cfg = presets.get("gradient-flow")
    dirs = []
    for sub in ("x", "y"):
        code, _, outdir = scenario.execute(cfg, tmp_path / sub)
        assert code == 0
        dirs.append(outdir)
    csvs = sorted(p.name for p in dirs[0].glob("*.csv"))
    assert csvs
    for name in csvs:
        assert (dirs[0] / name).read_text() == (dirs[1] / name).read_text()


def test_fresh_output_directories(tmp_path, monkeypatch):
    monkeypatch.setenv("TONELLI_GL_OUT", str(tmp_path))
    cfg = presets.get("vacuum")
    a = scenario.execute(cfg)[2]
    b = scenario.execute(cfg)[2]
    assert a != b and a.parent == b.parent == tmp_path
