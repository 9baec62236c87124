import dataclasses

import numpy as np
import pytest

from sublaplab.grids import apply_LM, build_grid
from sublaplab.groups import euclidean, heisenberg1
from sublaplab.weights import (CertificateError, WeightError, build_lyapunov,
                               check_derivatives, condition_infimum,
                               improved_condition_infimum, library,
                               polynomial_weight, verify_lyapunov)


@pytest.fixture(scope="module")
def ou_weight():
    return library(euclidean(1), "gaussian")


def test_library_values():
    e1 = euclidean(1)
    g = library(e1, "gaussian")
    q = library(e1, "quartic")
    pts = np.linspace(-3, 3, 7)[:, None]
    assert np.allclose(g.values(pts), pts[:, 0] ** 2 / 2)
    assert np.allclose(q.values(pts), pts[:, 0] ** 4 / 4)
    with pytest.raises(WeightError):
        library(e1, "heisenberg_aniso")
    with pytest.raises(WeightError):
        library(e1, "nope")


def test_polynomial_weight_matches_library():
    e1 = euclidean(1)
    q_lib = library(e1, "quartic")
    q_poly = polynomial_weight(e1, {(4,): 0.25}, "quartic_poly")
    pts = np.linspace(-2, 2, 11)[:, None]
    assert np.allclose(q_lib.values(pts), q_poly.values(pts))
    assert np.allclose(q_lib.grad_v[0](pts), q_poly.grad_v[0](pts))
    assert np.allclose(q_lib.hess_v[0](pts), q_poly.hess_v[0](pts))
    with pytest.raises(WeightError):
        polynomial_weight(e1, {(1, 2): 1.0})


def test_constant_weight_handles_broadcast():
    e1 = euclidean(1)
    flat = library(e1, "flat")
    pts = np.linspace(-1, 1, 9)[:, None]
    assert flat.values(pts).shape == (9,)
    assert np.all(flat.values(pts) == 0.0)
    assert np.all(flat.mu(pts) == 1.0)


@pytest.mark.parametrize("name", ["gaussian", "quartic", "heisenberg_aniso"])
def test_h1_derivatives_match_flow_differences(name, rng):
    h1 = heisenberg1()
    w = library(h1, name)
    pts = rng.normal(size=(60, 3)) * 1.5
    assert check_derivatives(w, pts) < 1e-5


def test_h1_gaussian_frame_derivatives_closed_form(rng):
    # X1 v = x - (y/2) t and X1^2 v = 1 + y^2/4 for v = (x^2+y^2+t^2)/2
    h1 = heisenberg1()
    w = library(h1, "gaussian")
    pts = rng.normal(size=(40, 3)) * 2.0
    x, y, t = pts.T
    assert np.allclose(w.grad_v[0](pts), x - y * t / 2)
    assert np.allclose(w.grad_v[1](pts), y + x * t / 2)
    assert np.allclose(w.hess_v[0](pts), 1 + y ** 2 / 4)
    assert np.allclose(w.hess_v[1](pts), 1 + x ** 2 / 4)


def test_condition_infimum_closed_forms(ou_weight):
    e1 = euclidean(1)
    res = condition_infimum(e1, ou_weight, 0.5, 2.0, 8.0, n_samples=50_000, seed=0)
    assert abs(res.value - 1.0) < 5e-3
    res = condition_infimum(e1, ou_weight, 0.5, 1.0, 8.0, n_samples=50_000, seed=0)
    assert abs(res.value - (-0.5)) < 5e-3
    assert abs(abs(res.witness[0]) - 1.0) < 0.05


def test_condition_infimum_constant_weight_never_positive():
    e1 = euclidean(1)
    flat = library(e1, "flat")
    res = condition_infimum(e1, flat, 0.5, 2.0, 8.0, n_samples=10_000, seed=0)
    assert res.value == 0.0


def test_condition_infimum_monotone_in_a_and_R(ou_weight):
    e1 = euclidean(1)
    vals_a = [condition_infimum(e1, ou_weight, a, 2.0, 8.0, n_samples=20_000,
                                seed=0).value for a in (0.2, 0.5, 0.8)]
    assert vals_a[0] <= vals_a[1] <= vals_a[2]
    vals_r = [condition_infimum(e1, ou_weight, 0.5, R, 8.0, n_samples=20_000,
                                seed=0).value for R in (1.0, 2.0, 3.0)]
    assert vals_r[0] <= vals_r[1] <= vals_r[2]


def test_improved_condition_closed_form(ou_weight):
    e1 = euclidean(1)
    res = improved_condition_infimum(e1, ou_weight, 0.5, 3.0, 8.0,
                                     n_samples=50_000, seed=0)
    assert abs(res.value - 1.25) < 5e-3
    # epsilon near 1 kills the gradient term; the expression is negative
    res = improved_condition_infimum(e1, ou_weight, 0.999, 3.0, 8.0,
                                     n_samples=20_000, seed=0)
    assert res.value < 0.0


def test_improved_condition_heisenberg_vertical_axis_failure():
    # v = (x^2+y^2)/2 + t^2/2 gives (1-eps)/2 |Xv|^2 - sum X_i^2 v
    #   = (x^2+y^2) t^2/16 - 2 at eps = 1/2, which is -2 on the axis
    h1 = heisenberg1()
    w = library(h1, "heisenberg_aniso")
    res = improved_condition_infimum(h1, w, 0.5, 3.0, 6.0,
                                     n_samples=60_000, seed=0)
    assert -2.0 - 1e-9 <= res.value < -1.85
    x, y, _ = res.witness
    assert (x * x + y * y) * res.witness[2] ** 2 / 16.0 < 0.15

    # dense-sampling oracle over an axis-hugging slab agrees
    ts = np.linspace(1.0, 5.0, 50)
    axis_pts = np.stack([np.zeros_like(ts), np.zeros_like(ts), ts], axis=1)
    vals = (1 - 0.5) / 2 * w.grad_square_sum(axis_pts) - w.hess_trace(axis_pts)
    assert np.allclose(vals, -2.0)


def test_empty_shell_rejected(ou_weight):
    with pytest.raises(WeightError):
        condition_infimum(euclidean(1), ou_weight, 0.5, 8.0, 8.0)


@pytest.fixture(scope="module")
def ou_grid_and_cert(ou_weight):
    e1 = euclidean(1)
    grid = build_grid(e1, ou_weight, 401, 8.0)
    cert = build_lyapunov(e1, ou_weight, a=0.5, c=1.0, R=2.0, grid=grid,
                          n_samples=50_000, seed=0)
    return grid, cert


def test_build_lyapunov_constants(ou_grid_and_cert):
    grid, cert = ou_grid_and_cert
    assert cert.gamma == 0.5
    assert cert.theta == 0.5
    assert abs(cert.inf_v) < 1e-14          # v attains 0 at the origin node
    assert abs(cert.W(np.zeros((1, 1)))[0] - 1.0) < 1e-14
    # b = max over the ball of gamma W (2 - x^2/2), attained at the origin
    assert abs(cert.b - 1.0) < 1e-10


def test_lyapunov_identity_two_analytic_routes(ou_grid_and_cert, rng):
    # route A: the closed identity; route B: L_M W = -sum X_i^2 W + sum X_i v X_i W
    # with W-derivatives from high-order flow differences
    grid, cert = ou_grid_and_cert
    h1 = heisenberg1()
    for inst, w, pts in (
        (euclidean(1), cert.weight, rng.normal(size=(40, 1)) * 2.0),
        (h1, library(h1, "gaussian"), rng.normal(size=(40, 3))),
    ):
        gamma = 0.5
        inf_v = 0.0
        W = lambda p: np.exp(gamma * (w.values(p) - inf_v))
        route_a = gamma * (w.hess_trace(pts) - (1 - gamma) * w.grad_square_sum(pts)) * W(pts)
        route_b = np.zeros(pts.shape[0])
        s = 1e-3
        for i in range(inst.frame_size):
            W2p = W(inst.frame_flow(i, pts, 2 * s))
            Wp = W(inst.frame_flow(i, pts, s))
            W0 = W(pts)
            Wm = W(inst.frame_flow(i, pts, -s))
            W2m = W(inst.frame_flow(i, pts, -2 * s))
            d1 = (-W2p + 8 * Wp - 8 * Wm + W2m) / (12 * s)
            d2 = (-W2p + 16 * Wp - 30 * W0 + 16 * Wm - W2m) / (12 * s * s)
            route_b += d2 - w.grad_v[i](pts) * d1
        scale = np.maximum(np.abs(route_a), 1.0)
        assert np.max(np.abs(route_a - route_b) / scale) < 1e-8


def test_lyapunov_identity_against_discrete_operator(ou, ou_coarse):
    # the discretized L_M applied to W samples converges to the analytic
    # identity at second order on interior nodes
    errs = []
    for inst, w, grid, forms in (ou, ou_coarse):
        cert = build_lyapunov(inst, w, a=0.5, c=1.0, R=2.0, grid=grid,
                              n_samples=20_000, seed=0)
        Wn = cert.W(grid.nodes)
        discrete = -apply_LM(forms, Wn)
        analytic = cert.neg_LM_W(grid.nodes)
        win = np.abs(grid.nodes[:, 0]) <= 4.0
        scale = np.maximum(np.abs(analytic), 1.0)
        errs.append(np.max((np.abs(discrete - analytic) / scale)[win]))
    assert errs[1] < 0.02
    assert errs[1] / errs[0] > 3.0   # second-order convergence (coarse/fine ~ 4)


def test_verify_lyapunov_clean(ou_grid_and_cert):
    grid, cert = ou_grid_and_cert
    report = verify_lyapunov(cert, grid)
    assert report.max_violation <= 1e-9
    assert not report.non_informative


def test_verify_lyapunov_inflated_theta(ou_grid_and_cert):
    grid, cert = ou_grid_and_cert
    bad = dataclasses.replace(cert, theta=10.0 * cert.theta)
    report = verify_lyapunov(bad, grid)
    assert report.max_violation > 0.0
    assert abs(report.witness[0]) > cert.R


def test_verify_lyapunov_degenerate_flagged():
    e1 = euclidean(1)
    flat = library(e1, "flat")
    grid = build_grid(e1, flat, 101, 4.0, enforce_tail=False)
    from sublaplab.weights import LyapunovCertificate
    cert = LyapunovCertificate(weight=flat, a=0.5, c=0.6, R=100.0, gamma=0.5,
                               theta=0.3, b=0.3, inf_v=0.0)
    report = verify_lyapunov(cert, grid)
    assert abs(report.max_violation) < 1e-14
    assert report.non_informative


def test_build_lyapunov_refusals(ou_weight):
    e1 = euclidean(1)
    grid = build_grid(e1, ou_weight, 101, 8.0)
    with pytest.raises(CertificateError):
        build_lyapunov(e1, ou_weight, a=1.0, c=1.0, R=2.0, grid=grid)
    with pytest.raises(CertificateError) as err:
        build_lyapunov(e1, ou_weight, a=0.5, c=1.0, R=1.0, grid=grid,
                       n_samples=20_000)
    assert err.value.witness is not None
