"""CLI surface: outputs, exit codes, machine-readable errors."""

import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from fieldedit.fields import Sphere, save_checkpoint
from fieldedit.geometry import read_obj

REPO = Path(__file__).resolve().parents[1]
SHIPPED_SPHERE = REPO / "checkpoints" / "sphere.json"


def run_cli(*args):
    return subprocess.run([sys.executable, "-m", "fieldedit.cli", *args],
                          capture_output=True, text=True)


@pytest.fixture()
def sphere_ckpt(tmp_path):
    p = tmp_path / "sphere.json"
    save_checkpoint(Sphere(1.0), p)
    return p


def test_mesh_on_shipped_checkpoint(tmp_path):
    assert SHIPPED_SPHERE.exists(), "shipped sphere checkpoint missing"
    out = tmp_path / "s.obj"
    r = run_cli("mesh", "--model", str(SHIPPED_SPHERE), "--res", "64",
                "--out", str(out))
    assert r.returncode == 0, r.stderr
    mesh = read_obj(out)
    assert mesh.volume() == pytest.approx(4 * np.pi / 3, rel=0.02)


def test_volume_command(sphere_ckpt):
    r = run_cli("volume", "--model", str(sphere_ckpt), "--res", "64")
    assert r.returncode == 0
    assert json.loads(r.stdout)["volume"] == pytest.approx(4 * np.pi / 3, rel=0.01)


def test_basis_viz_constant_channel(sphere_ckpt, tmp_path):
    out = tmp_path / "b.obj"
    r = run_cli("basis-viz", "--model", str(sphere_ckpt), "--param-index", "0",
                "--res", "32", "--out", str(out))
    assert r.returncode == 0, r.stderr
    info = json.loads(r.stdout)
    assert info["channel_min"] == pytest.approx(1.0, abs=1e-5)
    assert info["channel_max"] == pytest.approx(1.0, abs=1e-5)
    r2 = run_cli("basis-viz", "--model", str(sphere_ckpt), "--param-index", "7",
                 "--res", "32", "--out", str(out))
    assert r2.returncode == 2


def test_edit_roundtrip(sphere_ckpt, tmp_path):
    spec = {
        "targets": [{"region": {"type": "everywhere"},
                     "displacement": {"kind": "normal", "value": 0.2}}],
        "samples": {"target": 100}, "splits": 2, "lambda": 0.1, "seed": 0,
    }
    spec_path = tmp_path / "edit.json"
    spec_path.write_text(json.dumps(spec))
    out = tmp_path / "out.json"
    report = tmp_path / "report.json"
    csv_path = tmp_path / "report.csv"
    r = run_cli("edit", "--model", str(sphere_ckpt), "--spec", str(spec_path),
                "--out", str(out), "--report", str(report),
                "--report-csv", str(csv_path))
    assert r.returncode == 0, r.stderr
    from fieldedit.fields import load_checkpoint
    updated = load_checkpoint(out)
    assert updated.params[0] == pytest.approx(1.2, abs=1e-3)
    rep = json.loads(report.read_text())
    assert rep["iterations"] == 2
    assert csv_path.read_text().startswith("iteration,residual")


def test_edit_malformed_spec_names_field(sphere_ckpt, tmp_path):
    spec_path = tmp_path / "bad.json"
    spec_path.write_text(json.dumps({
        "targets": [{"region": {"type": "sphere", "center": [0, 0, 0], "radius": 1},
                     "displacement": {"kind": "vector", "value": [0, 0]}}]}))
    r = run_cli("edit", "--model", str(sphere_ckpt), "--spec", str(spec_path),
                "--out", str(tmp_path / "o.json"))
    assert r.returncode == 2
    err = json.loads(r.stderr.strip())
    assert err["error"] == "invalid-spec"
    assert "displacement" in err["field"]


def test_smooth_command(sphere_ckpt, tmp_path):
    out = tmp_path / "sm.json"
    trace = tmp_path / "trace.csv"
    r = run_cli("smooth", "--model", str(sphere_ckpt), "--out", str(out),
                "--iters", "1", "--tau", "0.01", "--samples", "300",
                "--volume-res", "48", "--trace", str(trace))
    assert r.returncode == 0, r.stderr
    info = json.loads(r.stdout)
    assert info["volume_final"] < info["volume_initial"]
    lines = trace.read_text().strip().split("\n")
    assert lines[0] == "iteration,volume,mean_abs_kappa,update_norm,volume_drift"
    assert len(lines) == 3


def test_fit_unknown_target_errors(tmp_path):
    r = run_cli("fit", "--target", "klein-bottle", "--out", str(tmp_path / "x.json"))
    assert r.returncode == 2
    assert json.loads(r.stderr.strip())["error"] == "invalid-spec"


def test_missing_model_file(tmp_path):
    r = run_cli("volume", "--model", str(tmp_path / "nope.json"))
    assert r.returncode == 2  # click's own path validation
