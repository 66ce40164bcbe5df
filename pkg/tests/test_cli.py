import json
import pathlib
import subprocess
import sys

import numpy as np
import pytest

from ruelle_kit import pipeline
from ruelle_kit.cli import EXIT_CONFIG, EXIT_NUMERIC, EXIT_OK, EXIT_VIOLATION, main

CONFIGS = pathlib.Path(__file__).resolve().parents[1] / "configs"


def write_cfg(tmp_path, **kw):
    d = {"map": {"degree": 2}, "class": {"kind": "analytic", "k_max": 4096},
         "K_list": [16, 32], "n_traces": 8, "out": str(tmp_path / "out")}
    d.update(kw)
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(d))
    return p


def test_doubling_determinant(tmp_path):
    cfg = write_cfg(tmp_path)
    assert main(["determinant", str(cfg)]) == EXIT_OK
    rep = json.loads((tmp_path / "out" / "determinant.json").read_text())
    assert rep["schema"] == "ruelle-kit/1" and rep["report"] == "determinant"
    c = np.array(rep["coeffs"], dtype=float)
    expect = np.zeros_like(c)
    expect[0, 0], expect[1, 0] = 1, -1
    np.testing.assert_allclose(c, expect, atol=1e-14)
    assert rep["zeros"] == [[1, 0]]
    assert rep["resonances"] == [[1, 0]]


@pytest.mark.parametrize("command", ["class", "spectrum", "bounds", "verify"])
def test_commands_succeed(tmp_path, command):
    assert main([command, str(write_cfg(tmp_path))]) == EXIT_OK
    assert (tmp_path / "out" / f"{command}.json").exists()


def test_verify_report(tmp_path):
    assert main(["verify", str(write_cfg(tmp_path))]) == EXIT_OK
    rep = json.loads((tmp_path / "out" / "verify.json").read_text())
    assert rep["passed"] and all(c["passed"] for c in rep["checks"])
    names = {c["name"] for c in rep["checks"]}
    assert {"orbit_vs_eigen", "npd_vs_direct", "zeros_vs_resonances", "resonances_without_zero"} <= names


def test_deterministic(tmp_path):
    (tmp_path / "a").mkdir()
    (tmp_path / "b").mkdir()
    a = write_cfg(tmp_path / "a")
    b = write_cfg(tmp_path / "b")
    assert main(["verify", str(a)]) == EXIT_OK
    assert main(["verify", str(b)]) == EXIT_OK
    fa = sorted(p.relative_to(tmp_path / "a" / "out") for p in (tmp_path / "a" / "out").rglob("*"))
    fb = sorted(p.relative_to(tmp_path / "b" / "out") for p in (tmp_path / "b" / "out").rglob("*"))
    assert fa == fb and fa
    for rel in fa:
        assert (tmp_path / "a" / "out" / rel).read_bytes() == (tmp_path / "b" / "out" / rel).read_bytes(), rel


def test_overrides(tmp_path):
    cfg = write_cfg(tmp_path)
    out = tmp_path / "other"
    assert main(["spectrum", str(cfg), "--K", "24", "32", "--theta", "1.4", "--out", str(out)]) == EXIT_OK
    rep = json.loads((out / "spectrum.json").read_text())
    assert rep["K"] == 32 and rep["theta"] == 1.4
    assert rep["resonances"]["K_list"] == [24, 32]
    assert not (tmp_path / "out").exists()


def test_malformed_json(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text('{"map": {"degree": 2},\n  "class": }')
    assert main(["verify", str(p)]) == EXIT_CONFIG
    err = capsys.readouterr().err
    assert f"{p}:2:" in err


@pytest.mark.parametrize("kw, field", [
    ({"theta": 2.5}, "theta"),
    ({"K_list": [32]}, "K_list"),
    ({"n_traces": 20}, "n_traces"),
    ({"map": {"degree": 2, "p_hat": [[1, 0, -0.3], [-1, 0, 0.3]]}}, "map"),
    ({"class": {"kind": "nope"}}, "class"),
    ({"extra": 1}, "extra"),
])
def test_config_errors(tmp_path, capsys, kw, field):
    assert main(["class", str(write_cfg(tmp_path, **kw))]) == EXIT_CONFIG
    assert field in capsys.readouterr().err


def test_missing_file(tmp_path):
    assert main(["class", str(tmp_path / "none.json")]) == EXIT_CONFIG


def test_numerical_failure(tmp_path, capsys):
    cfg = write_cfg(tmp_path, **{"class": {"kind": "analytic", "k_max": 8}})
    # saturated weights are harmless for the spectrum but not for explicit bounds
    assert main(["spectrum", str(cfg)]) == EXIT_OK
    assert main(["bounds", str(cfg)]) == EXIT_NUMERIC
    assert "numerical failure" in capsys.readouterr().err


def test_violation_exit(tmp_path, monkeypatch, capsys):
    monkeypatch.setattr(pipeline, "TOL_NPD", -1.0)
    assert main(["determinant", str(write_cfg(tmp_path))]) == EXIT_VIOLATION
    assert "npd_vs_direct" in capsys.readouterr().err


def test_console_script_version():
    out = subprocess.run([sys.executable, "-m", "ruelle_kit.cli", "--version"],
                         capture_output=True, text=True, check=True)
    assert "0.1.0" in out.stdout


def test_thread_limit(tmp_path, monkeypatch):
    monkeypatch.setenv("RUELLE_THREADS", "1")
    assert main(["class", str(write_cfg(tmp_path))]) == EXIT_OK


@pytest.mark.parametrize("name", sorted(p.name for p in CONFIGS.glob("*.json")))
def test_shipped_configs_validate(name):
    from ruelle_kit.config import load
    cfg = load(CONFIGS / name)
    assert cfg.theta > 1 and len(cfg.K_list) >= 2
