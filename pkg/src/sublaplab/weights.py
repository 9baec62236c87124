"""Confining weights M = exp(-v) and the drift certificates built from them.

A WeightSpec bundles v with analytic first and second frame derivatives
X_i v and X_i^2 v.  The shipped library (gaussian, quartic, and the
Heisenberg anisotropic weight) and user-defined polynomial weights are all
generated symbolically, so the frame derivatives are exact.

The certificate machinery follows the standard drift route to a spectral
gap: if a * sum |X_i v|^2 - sum X_i^2 v >= c outside a ball B(e, R), then
W = exp(gamma (v - inf v)) with gamma = 1 - a satisfies

    -L_M W <= -theta W + b 1_{B(e,R)},   theta = c gamma,

which is checked on a verification grid via the exact identity
-L_M W = gamma (sum X_i^2 v - (1-gamma) sum |X_i v|^2) W.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np
import sympy as sp
from scipy.stats import qmc

from .groups import EUCLIDEAN, GroupInstance


class WeightError(ValueError):
    """Invalid weight definition or parameters."""


class CertificateError(RuntimeError):
    """Drift certificate refused; carries the witnessing sample point."""

    def __init__(self, message: str, witness=None, value=None):
        super().__init__(message)
        self.witness = witness
        self.value = value


@dataclass(frozen=True)
class WeightSpec:
    """Weight v with exact frame derivatives on a fixed group instance."""

    name: str
    instance: GroupInstance
    v: Callable[[np.ndarray], np.ndarray]
    grad_v: tuple[Callable, ...]   # X_i v, one handle per frame field
    hess_v: tuple[Callable, ...]   # X_i^2 v

    def values(self, points) -> np.ndarray:
        return self.v(np.atleast_2d(np.asarray(points, dtype=np.float64)))

    def weight(self, points) -> np.ndarray:
        """M = exp(-v)."""
        return np.exp(-self.values(points))

    def grad_square_sum(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        out = np.zeros(pts.shape[0])
        for g in self.grad_v:
            out += g(pts) ** 2
        return out

    def hess_trace(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        out = np.zeros(pts.shape[0])
        for h in self.hess_v:
            out += h(pts)
        return out

    def mu(self, points) -> np.ndarray:
        """The weight 1 + sum |X_i v|^2 of the improved inequality."""
        return 1.0 + self.grad_square_sum(points)


def _coordinate_symbols(instance: GroupInstance) -> list[sp.Symbol]:
    if instance.kind == EUCLIDEAN:
        return list(sp.symbols(f"c0:{instance.dim}", real=True))
    return list(sp.symbols("x y t", real=True))


def _frame_derivative(instance, syms, expr, i):
    if instance.kind == EUCLIDEAN:
        return sp.diff(expr, syms[i])
    x, y, t = syms
    if i == 0:
        return sp.diff(expr, x) - y / 2 * sp.diff(expr, t)
    return sp.diff(expr, y) + x / 2 * sp.diff(expr, t)


def _lambdify_scalar(syms, expr) -> Callable[[np.ndarray], np.ndarray]:
    fn = sp.lambdify(syms, expr, modules="numpy")

    def handle(points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        vals = fn(*(pts[:, a] for a in range(pts.shape[1])))
        return np.broadcast_to(np.asarray(vals, dtype=np.float64),
                               (pts.shape[0],)).copy()

    return handle


def from_expression(instance: GroupInstance, expr: sp.Expr, name: str,
                    syms: Sequence[sp.Symbol] | None = None) -> WeightSpec:
    """Build a WeightSpec from a sympy expression in the coordinate symbols."""
    syms = list(syms) if syms is not None else _coordinate_symbols(instance)
    grads = [_frame_derivative(instance, syms, expr, i)
             for i in range(instance.frame_size)]
    hesses = [_frame_derivative(instance, syms, g, i) for i, g in enumerate(grads)]
    return WeightSpec(
        name=name,
        instance=instance,
        v=_lambdify_scalar(syms, expr),
        grad_v=tuple(_lambdify_scalar(syms, g) for g in grads),
        hess_v=tuple(_lambdify_scalar(syms, h) for h in hesses),
    )


def polynomial_weight(instance: GroupInstance,
                      coeffs: Mapping[tuple[int, ...], float],
                      name: str = "poly") -> WeightSpec:
    """Weight v given as a polynomial in the coordinates.

    coeffs maps exponent tuples (one exponent per coordinate) to
    coefficients, e.g. {(2,): 0.5} is v = x^2/2 on R.
    """
    syms = _coordinate_symbols(instance)
    expr = sp.Integer(0)
    for exponents, c in coeffs.items():
        if len(exponents) != instance.dim:
            raise WeightError(
                f"exponent tuple {exponents} does not match dimension {instance.dim}"
            )
        term = sp.Float(c)
        for s, e in zip(syms, exponents):
            term *= s ** int(e)
        expr += term
    return from_expression(instance, expr, name, syms)


def library(instance: GroupInstance, name: str) -> WeightSpec:
    """Shipped weight library, addressable by name from the CLI config."""
    syms = _coordinate_symbols(instance)
    r2 = sum(s ** 2 for s in syms)
    if name == "gaussian":
        return from_expression(instance, r2 / 2, name, syms)
    if name == "quartic":
        return from_expression(instance, r2 ** 2 / 4, name, syms)
    if name == "heisenberg_aniso":
        if instance.kind == EUCLIDEAN:
            raise WeightError("heisenberg_aniso is only defined on the Heisenberg group")
        x, y, t = syms
        return from_expression(instance, (x ** 2 + y ** 2) / 2 + t ** 2 / 2, name, syms)
    if name == "flat":
        return from_expression(instance, sp.Integer(0), name, syms)
    raise WeightError(f"unknown weight {name!r}; "
                      "known: gaussian, quartic, heisenberg_aniso, flat")


# -- drift condition ------------------------------------------------------


@dataclass(frozen=True)
class InfimumResult:
    value: float
    witness: np.ndarray
    n_samples: int

    def __float__(self) -> float:
        return self.value


def _shell_samples(instance: GroupInstance, r_inner: float, r_outer: float,
                   n_samples: int, seed: int) -> np.ndarray:
    """Quasi-uniform points with r_inner < |x| <= r_outer (CC norm)."""
    box = instance.ball_bounding_box(r_outer)
    lo = np.array([b[0] for b in box])
    hi = np.array([b[1] for b in box])
    sampler = qmc.Sobol(d=instance.dim, scramble=True, seed=seed)
    batch = 1 << max(10, int(np.ceil(np.log2(max(n_samples, 2)))))
    kept = []
    total = 0
    attempts = 0
    while total < n_samples and attempts < 40:
        raw = sampler.random(batch)
        pts = lo + raw * (hi - lo)
        norms = instance.cc_norm(pts)
        sel = pts[(norms > r_inner) & (norms <= r_outer)]
        if sel.size:
            kept.append(sel)
            total += sel.shape[0]
        attempts += 1
    if total == 0:
        raise WeightError(
            f"empty shell {r_inner} < |x| <= {r_outer}: no sample points found"
        )
    return np.concatenate(kept, axis=0)[:n_samples]


def _drift_expression(weight: WeightSpec, coef: float, points) -> np.ndarray:
    return coef * weight.grad_square_sum(points) - weight.hess_trace(points)


def _shell_infimum(instance, weight, coef, r_inner, r_max, n_samples, seed,
                   grid=None) -> InfimumResult:
    if r_inner >= r_max:
        raise WeightError(f"shell radius {r_inner} must be below the domain radius {r_max}")
    pts = _shell_samples(instance, r_inner, r_max, n_samples, seed)
    if grid is not None:
        norms = instance.cc_norm(grid.nodes)
        shell_nodes = grid.nodes[(norms > r_inner) & (norms <= r_max)]
        if shell_nodes.size:
            pts = np.concatenate([pts, shell_nodes], axis=0)
    vals = _drift_expression(weight, coef, pts)
    k = int(np.argmin(vals))
    return InfimumResult(float(vals[k]), pts[k].copy(), pts.shape[0])


def condition_infimum(instance: GroupInstance, weight: WeightSpec, a: float,
                      R: float, r_max: float, n_samples: int = 100_000,
                      seed: int = 0, grid=None) -> InfimumResult:
    """Sampled infimum of a sum|X_i v|^2 - sum X_i^2 v over the shell R < |x| <= r_max.

    The drift condition holds numerically iff the returned value is positive.
    """
    if not 0.0 < a < 1.0:
        raise WeightError(f"a={a} must lie in (0, 1)")
    return _shell_infimum(instance, weight, a, R, r_max, n_samples, seed, grid)


def improved_condition_infimum(instance: GroupInstance, weight: WeightSpec,
                               epsilon: float, R: float, r_max: float,
                               n_samples: int = 100_000, seed: int = 0,
                               grid=None) -> InfimumResult:
    """Same shell infimum with the stronger coefficient (1 - epsilon)/2."""
    if not 0.0 < epsilon < 1.0:
        raise WeightError(f"epsilon={epsilon} must lie in (0, 1)")
    return _shell_infimum(instance, weight, (1.0 - epsilon) / 2.0,
                          R, r_max, n_samples, seed, grid)


# -- certificate ----------------------------------------------------------


@dataclass(frozen=True)
class LyapunovCertificate:
    """W = exp(gamma (v - inf v)) with the drift constants that verify it."""

    weight: WeightSpec
    a: float
    c: float
    R: float
    gamma: float
    theta: float
    b: float
    inf_v: float
    epsilon: float | None = None

    def W(self, points) -> np.ndarray:
        return np.exp(self.gamma * (self.weight.values(points) - self.inf_v))

    def neg_LM_W(self, points) -> np.ndarray:
        """-L_M W via the exact identity, using the analytic frame derivatives."""
        w = self.weight
        return self.gamma * (
            w.hess_trace(points) - (1.0 - self.gamma) * w.grad_square_sum(points)
        ) * self.W(points)


@dataclass(frozen=True)
class LyapunovReport:
    max_violation: float
    witness: np.ndarray
    theta: float
    b: float
    non_informative: bool


def build_lyapunov(instance: GroupInstance, weight: WeightSpec, a: float,
                   c: float, R: float, grid, n_samples: int = 100_000,
                   seed: int = 0) -> LyapunovCertificate:
    """Construct the exponential drift certificate after checking its premise.

    Refuses (with the failing sample point) when the sampled shell infimum
    drops below c, or when a is outside (0, 1).
    """
    if not 0.0 < a < 1.0:
        raise CertificateError(
            f"a={a} outside (0,1): gamma = 1-a would make W constant and -L_M W = 0"
        )
    if c <= 0.0:
        raise CertificateError(f"c={c} must be positive")
    r_max = float(np.min([max(abs(lo), abs(hi)) for lo, hi in grid.bounds]))
    inf_res = condition_infimum(instance, weight, a, R, r_max,
                                n_samples=n_samples, seed=seed, grid=grid)
    if inf_res.value < c:
        raise CertificateError(
            f"drift condition fails: shell infimum {inf_res.value:.6g} < c={c} "
            f"at {inf_res.witness}",
            witness=inf_res.witness, value=inf_res.value,
        )
    gamma = 1.0 - a
    theta = c * gamma
    inf_v = float(np.min(weight.values(grid.nodes)))
    cert = LyapunovCertificate(weight=weight, a=a, c=c, R=R, gamma=gamma,
                               theta=theta, b=0.0, inf_v=inf_v)
    # b = max over the ball of (-L_M W + theta W), clamped at 0
    ball = instance.cc_norm(grid.nodes) <= R
    b = 0.0
    if np.any(ball):
        vals = cert.neg_LM_W(grid.nodes[ball]) + theta * cert.W(grid.nodes[ball])
        b = max(0.0, float(vals.max()))
    return dataclasses.replace(cert, b=b)


def verify_lyapunov(cert: LyapunovCertificate, grid) -> LyapunovReport:
    """Evaluate -L_M W + theta W - b 1_B at every node; report the worst value."""
    instance = cert.weight.instance
    nodes = grid.nodes
    norms = instance.cc_norm(nodes)
    ball = norms <= cert.R
    vals = cert.neg_LM_W(nodes) + cert.theta * cert.W(nodes)
    vals = vals - cert.b * ball
    k = int(np.argmax(vals))
    w_vals = cert.W(nodes)
    non_informative = bool(np.all(ball)) or bool(np.all(np.abs(w_vals - 1.0) < 1e-14))
    return LyapunovReport(max_violation=float(vals[k]), witness=nodes[k].copy(),
                          theta=cert.theta, b=cert.b,
                          non_informative=non_informative)


def check_derivatives(weight: WeightSpec, points, step: float = 1e-4) -> float:
    """Worst relative error of grad_v / hess_v against flow finite differences."""
    inst = weight.instance
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    worst = 0.0
    for i in range(inst.frame_size):
        flow_p = weight.values(inst.frame_flow(i, pts, step))
        flow_m = weight.values(inst.frame_flow(i, pts, -step))
        flow_0 = weight.values(pts)
        fd_grad = (flow_p - flow_m) / (2 * step)
        fd_hess = (flow_p - 2 * flow_0 + flow_m) / step ** 2
        scale_g = np.maximum(np.abs(fd_grad), 1.0)
        scale_h = np.maximum(np.abs(fd_hess), 1.0)
        worst = max(worst, float(np.max(np.abs(fd_grad - weight.grad_v[i](pts)) / scale_g)))
        worst = max(worst, float(np.max(np.abs(fd_hess - weight.hess_v[i](pts)) / scale_h)))
    return worst
