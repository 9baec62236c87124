import math

import numpy as np
import pytest

from sublaplab import _kernels_fallback as fb

compiled = pytest.importorskip("sublaplab._kernels")


@pytest.fixture(scope="module")
def cloud(rng):
    return np.ascontiguousarray(np.random.default_rng(7).normal(size=(2000, 3)) * 2.0)


def test_cc_norm_backends_agree(cloud):
    x, y, t = (np.ascontiguousarray(cloud[:, a]) for a in range(3))
    d_c = compiled.h1_cc_norm(x, y, t)
    d_p = fb.h1_cc_norm(x, y, t)
    assert np.max(np.abs(d_c - d_p) / np.maximum(d_p, 1e-12)) < 1e-8


def test_cc_norm_special_points():
    for impl in (compiled, fb):
        d = impl.h1_cc_norm(np.array([3.0, 0.0]), np.array([4.0, 0.0]),
                            np.array([0.0, 1.0]))
        assert abs(d[0] - 5.0) < 1e-12
        assert abs(d[1] - 2.0 * math.sqrt(math.pi)) < 1e-10


def test_pairwise_backends_agree(cloud):
    a = cloud[:50]
    b = cloud[50:120]
    d_c = compiled.pairwise_h1_dist(a, np.ascontiguousarray(b))
    d_p = fb.pairwise_h1_dist(a, b)
    assert np.max(np.abs(d_c - d_p)) < 1e-8


def test_pair_energy_backends_agree(rng):
    n = 500
    local = np.random.default_rng(3)
    coords = np.ascontiguousarray(local.normal(size=(n, 2)))
    f = np.ascontiguousarray(local.normal(size=n))
    haar = np.full(n, 0.01)
    muw = np.ascontiguousarray(np.abs(local.normal(size=n)) * 0.01)
    for alpha in (0.5, 1.0, 1.5):
        e_c = compiled.pair_energy_coords(f, coords, haar, muw, alpha, 1.0, 2.0)
        e_p = fb.pair_energy_coords(f, coords, haar, muw, alpha, 1.0, 2.0)
        assert abs(e_c - e_p) < 1e-11 * abs(e_c)
    dist = np.ascontiguousarray(
        np.sqrt(((coords[:, None, :] - coords[None, :, :]) ** 2).sum(-1)))
    e_c = compiled.pair_energy_dist(f, dist, haar, muw, 1.0, 1.0, 2.0)
    e_p = fb.pair_energy_dist(f, dist, haar, muw, 1.0, 1.0, 2.0)
    assert abs(e_c - e_p) < 1e-11 * abs(e_c)


def test_backend_selection_env(tmp_path):
    import subprocess
    import sys
    code = ("import sublaplab.kernels as k; print(k.BACKEND)")
    out = subprocess.run([sys.executable, "-c", code],
                         capture_output=True, text=True,
                         env={"PATH": "/usr/bin:/bin", "SUBLAPLAB_BACKEND": "python"})
    assert out.stdout.strip() == "python"
