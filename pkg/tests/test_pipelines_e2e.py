import json
import os
import subprocess
import sys
import time
from pathlib import Path

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"


def run_cli(args, env_extra=None):
    env = dict(os.environ)
    if env_extra:
        env.update(env_extra)
    return subprocess.run([sys.executable, "-m", "sublaplab", *args],
                          capture_output=True, text=True, env=env)


def test_heisenberg_all_pipeline(tmp_path):
    # full run on the shipped Heisenberg config: exit 0 well inside the
    # ten-minute desk-scale budget
    out = tmp_path / "h1"
    start = time.perf_counter()
    proc = run_cli(["all", "--config", str(CONFIG_DIR / "heisenberg_small.ini"),
                    "--out", str(out)])
    elapsed = time.perf_counter() - start
    assert proc.returncode == 0, proc.stderr
    assert elapsed < 600.0
    report = json.loads((out / "report.json").read_text())
    assert report["all_hold"]
    assert report["group"]["kind"] == "heisenberg1"
    assert report["grid"]["n_nodes"] == 13 ** 3
    assert report["pipelines"]["check-lyapunov"]["skipped"]
    assert report["pipelines"]["poincare-gap"]["lambda1"] > 0
    assert not report["pipelines"]["poincare-gap"]["premise_verified"]
    lam = report["pipelines"]["nonlocal"]["lambda_alpha"]["1"]
    assert lam["lambda_alpha_estimate"] > 0


def test_polynomial_weight_cli(tmp_path):
    # v = x^2/2 entered as polynomial coefficients reproduces the gap of the
    # named gaussian weight
    cfg = tmp_path / "poly.ini"
    cfg.write_text("""
[experiment]
schema_version = 1
group = euclidean
dimension = 1
weight = poly
resolution = 201
domain_radius = 8.0
seed = 7

[weight_poly]
2 = 0.5
""")
    out = tmp_path / "out"
    proc = run_cli(["poincare-gap", "--config", str(cfg), "--out", str(out)])
    assert proc.returncode == 0, proc.stderr
    report = json.loads((out / "report.json").read_text())
    assert abs(report["pipelines"]["poincare-gap"]["lambda1"] - 1.0) < 0.02


def test_python_backend_end_to_end(tmp_path):
    out = tmp_path / "fb"
    proc = run_cli(["poincare-gap", "--config",
                    str(CONFIG_DIR / "ou1d_small.ini"), "--out", str(out)],
                   env_extra={"SUBLAPLAB_BACKEND": "python"})
    assert proc.returncode == 0, proc.stderr
    report = json.loads((out / "report.json").read_text())
    assert report["backend"] == "python"
    assert abs(report["pipelines"]["poincare-gap"]["lambda1"] - 1.0) < 0.02
