import json
from pathlib import Path

import numpy as np
import pytest

from sublaplab.cli import main
from sublaplab.config import ConfigError, load_config

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"

BASE = """
[experiment]
schema_version = 1
group = euclidean
dimension = 1
weight = gaussian
resolution = {resolution}
domain_radius = 8.0
seed = 42

[lyapunov]
a = 0.5
c = 1.0
R = 2.0
n_samples = 20000
n_random_f = 50

[improved]
epsilon = 0.5
R = 3.0
n_samples = 20000

[quadratic]
alpha_list = 1.0
n_functions = 3
t_nodes = 120

[offdiag]
t_list = 0.1, 0.2, 0.5, 1.0
width = 2.0

[covering]
t_list = 1.0
theta_list = 2, 4

[nonlocal]
alpha_list = 1.0
n_eigenvectors = 3
n_bumps = 3
n_random = 2
annulus_t = 1.0
k_max = 3
"""


def write_config(tmp_path, text, name="exp.ini"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_shipped_configs_parse():
    for name in ("ou1d.ini", "ou1d_small.ini", "heisenberg_small.ini"):
        cfg = load_config(CONFIG_DIR / name)
        assert cfg.config_hash()


def test_config_hash_stable(tmp_path):
    path = write_config(tmp_path, BASE.format(resolution=101))
    a = load_config(path).config_hash()
    b = load_config(path).config_hash()
    assert a == b
    path2 = write_config(tmp_path, BASE.format(resolution=201), "exp2.ini")
    assert load_config(path2).config_hash() != a


def test_config_range_validation(tmp_path):
    bad = BASE.format(resolution=101).replace("a = 0.5", "a = 1.5")
    with pytest.raises(ConfigError):
        load_config(write_config(tmp_path, bad))
    bad = BASE.format(resolution=101).replace("alpha_list = 1.0",
                                              "alpha_list = 2.5", 1)
    with pytest.raises(ConfigError):
        load_config(write_config(tmp_path, bad))
    with pytest.raises(ConfigError):
        load_config(write_config(tmp_path, BASE.format(resolution=4)))


def test_config_unknown_keys_rejected(tmp_path):
    bad = BASE.format(resolution=101).replace("a = 0.5", "a = 0.5\nbogus = 1")
    with pytest.raises(ConfigError):
        load_config(write_config(tmp_path, bad))
    bad = BASE.format(resolution=101) + "\n[mystery]\nx = 1\n"
    with pytest.raises(ConfigError):
        load_config(write_config(tmp_path, bad))
    dup = BASE.format(resolution=101) + "\n[lyapunov]\na = 0.4\n"
    with pytest.raises(ConfigError):
        load_config(write_config(tmp_path, dup))


def test_config_poly_weight(tmp_path):
    text = BASE.format(resolution=101).replace(
        "weight = gaussian", "weight = poly")
    text += "\n[weight_poly]\n4 = 0.25\n"
    # the monomial key is one exponent per coordinate
    text = text.replace("[weight_poly]\n4 = 0.25", "[weight_poly]\n4 = 0.25")
    cfg = load_config(write_config(tmp_path, text))
    assert cfg.weight_poly == {(4,): 0.25}


def test_cli_range_error_exit_code(tmp_path, capsys):
    bad = write_config(tmp_path, BASE.format(resolution=101).replace(
        "a = 0.5", "a = 1.5"))
    code = main(["check-lyapunov", "--config", str(bad),
                 "--out", str(tmp_path / "o")])
    assert code == 1
    assert "config error" in capsys.readouterr().err


def test_cli_missing_section_exit_code(tmp_path):
    text = BASE.format(resolution=101)
    text = text.replace("[lyapunov]", "[covering2]", 1)  # invalid section name
    path = write_config(tmp_path, text)
    assert main(["poincare-gap", "--config", str(path),
                 "--out", str(tmp_path / "o")]) == 1

    minimal = "\n".join(line for line in BASE.format(resolution=101).splitlines()
                        if line.strip())
    # drop the lyapunov section entirely, then ask for it
    start = minimal.index("[lyapunov]")
    end = minimal.index("[improved]")
    no_lyap = minimal[:start] + minimal[end:]
    path = write_config(tmp_path, no_lyap, "nolyap.ini")
    assert main(["check-lyapunov", "--config", str(path),
                 "--out", str(tmp_path / "o2")]) == 1


def test_cli_poincare_gap_report(tmp_path, capsys):
    path = write_config(tmp_path, BASE.format(resolution=401))
    out = tmp_path / "run"
    code = main(["poincare-gap", "--config", str(path), "--out", str(out)])
    capsys.readouterr()
    assert code == 0
    report = json.loads((out / "report.json").read_text())
    lam = report["pipelines"]["poincare-gap"]["lambda1"]
    assert 0.98 <= lam <= 1.02
    assert report["pipelines"]["poincare-gap"]["premise_verified"]
    assert report["config_hash"]
    assert report["backend"] in ("compiled", "python")
    assert (out / "metadata.json").exists()


def test_cli_all_small_run_and_artifacts(tmp_path, capsys):
    path = write_config(tmp_path, BASE.format(resolution=101))
    out = tmp_path / "all"
    code = main(["all", "--config", str(path), "--out", str(out),
                 "--export-forms"])
    capsys.readouterr()
    assert code == 0
    report = json.loads((out / "report.json").read_text())
    assert report["all_hold"]
    for stem in ("offdiag_curve", "quadratic_values", "annulus", "net_t1"):
        csv_path = out / f"{stem}.csv"
        assert csv_path.exists()
        assert len(csv_path.read_text().splitlines()) > 1
    for stem in ("D", "B", "B_mu"):
        assert (out / f"{stem}.triplets.txt").exists()


def test_cli_seed_override_changes_hash_inputs(tmp_path, capsys):
    path = write_config(tmp_path, BASE.format(resolution=101))
    out_a = tmp_path / "a"
    out_b = tmp_path / "b"
    assert main(["poincare-gap", "--config", str(path), "--out", str(out_a)]) == 0
    assert main(["poincare-gap", "--config", str(path), "--out", str(out_b),
                 "--seed", "43"]) == 0
    capsys.readouterr()
    rep_a = json.loads((out_a / "report.json").read_text())
    rep_b = json.loads((out_b / "report.json").read_text())
    assert rep_a["seed"] == 42 and rep_b["seed"] == 43


def test_cli_determinism_in_process(tmp_path, capsys):
    path = write_config(tmp_path, BASE.format(resolution=101))
    out_a = tmp_path / "d1"
    out_b = tmp_path / "d2"
    assert main(["all", "--config", str(path), "--out", str(out_a)]) == 0
    assert main(["all", "--config", str(path), "--out", str(out_b)]) == 0
    capsys.readouterr()
    assert (out_a / "report.json").read_bytes() == (out_b / "report.json").read_bytes()


def test_cli_compare_identical_and_two_resolution(tmp_path, capsys):
    path_c = write_config(tmp_path, BASE.format(resolution=201), "c.ini")
    path_f = write_config(tmp_path, BASE.format(resolution=401), "f.ini")
    out_c = tmp_path / "c"
    out_f = tmp_path / "f"
    assert main(["poincare-gap", "--config", str(path_c), "--out", str(out_c)]) == 0
    assert main(["poincare-gap", "--config", str(path_f), "--out", str(out_f)]) == 0
    capsys.readouterr()

    code = main(["compare", str(out_c / "report.json"), str(out_c / "report.json")])
    summary = json.loads(capsys.readouterr().out)
    assert code == 0
    assert summary["max_rel_diff"] == 0.0
    assert summary["diffs"] == {}

    code = main(["compare", str(out_c / "report.json"), str(out_f / "report.json"),
                 "--tolerance", "1e-12"])
    summary = json.loads(capsys.readouterr().out)
    assert code == 0
    key = "poincare-gap.lambda1"
    assert summary["diffs"][key]["rel"] < 0.01

    code = main(["compare", str(out_c / "report.json"), str(out_f / "report.json"),
                 "--fail-above", "1e-12"])
    capsys.readouterr()
    assert code == 2


def test_cli_compare_detects_weight_change(tmp_path, capsys):
    path_a = write_config(tmp_path, BASE.format(resolution=201), "wa.ini")
    path_b = write_config(
        tmp_path,
        BASE.format(resolution=201)
        .replace("weight = gaussian", "weight = quartic")
        .replace("domain_radius = 8.0", "domain_radius = 5.0")
        .replace("R = 2.0", "R = 1.4").replace("R = 3.0", "R = 1.4"),
        "wb.ini")
    out_a = tmp_path / "wa"
    out_b = tmp_path / "wb"
    main(["poincare-gap", "--config", str(path_a), "--out", str(out_a)])
    main(["poincare-gap", "--config", str(path_b), "--out", str(out_b)])
    capsys.readouterr()
    main(["compare", str(out_a / "report.json"), str(out_b / "report.json"),
          "--tolerance", "1e-6"])
    summary = json.loads(capsys.readouterr().out)
    assert "poincare-gap.lambda1" in summary["diffs"]
