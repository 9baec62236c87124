"""Spectral verification engine for the weighted form pair.

Covers the generalized eigenvalue problems behind the Poincare and improved
(weighted) gaps, fractional powers by dense spectral calculus, the
resolvent-quadrature representation of ||L^(alpha/4) f||^2, the functional
calculus comparison L^(alpha/2) >= lambda^(alpha/2) mu^(alpha/2), and the
off-diagonal resolvent decay experiment between distant node sets.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import sparse
from scipy.linalg import eigh, qr
from scipy.sparse.linalg import LinearOperator, eigsh, lobpcg, splu

from .grids import AssembledForms, resolvent_direct, solve_resolvent

DENSE_CEILING = 5000


class EigenSolveError(RuntimeError):
    """Iterative eigensolver failed the residual criterion; carries the history."""

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = history


class DenseCeilingError(RuntimeError):
    """Dense spectral route refused for large grids; use the quadrature route."""


def _pencil_mass(forms: AssembledForms, which: str) -> np.ndarray:
    if which == "B":
        return forms.B
    if which == "B_mu":
        return forms.B_mu
    raise ValueError(f"unknown mass form {which!r}")


def gershgorin_upper(forms: AssembledForms, which: str = "B") -> float:
    """Cheap upper bound for the largest generalized eigenvalue of (D, mass)."""
    mass = _pencil_mass(forms, which)
    rowsum = np.asarray(np.abs(forms.D).sum(axis=1)).ravel()
    return float(np.max(rowsum / mass))


def smallest_eigenpairs(forms: AssembledForms, k: int = 1, which: str = "B",
                        tol: float = 1e-8, seed: int = 7,
                        maxiter: int = 400) -> tuple[np.ndarray, np.ndarray]:
    """Smallest k generalized eigenpairs of (D, mass) on the mean-zero subspace.

    The constant direction is removed by a mass-orthogonal constraint
    (deflation), so the returned eigenvalues start at the spectral gap.  A
    block iteration preconditioned by a shifted sparse factorization is used;
    convergence requires ||D u - lambda mass u|| <= tol * lambda * ||mass u||
    for every pair, with an ARPACK shift-invert retry before giving up.
    """
    mass = _pencil_mass(forms, which)
    n = forms.n_nodes
    key = ("eigs", which, k, tol, seed)
    if key in forms._cache:
        return forms._cache[key]
    Bop = sparse.diags(mass).tocsr()
    ones = np.ones((n, 1))
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, k))
    sigma = 1e-8 * gershgorin_upper(forms, which)
    lu = splu((forms.D + sigma * Bop).tocsc())
    precond = LinearOperator((n, n), matvec=lu.solve)

    def _post(vals, vecs):
        resid = []
        ok = True
        for j in range(len(vals)):
            v = vecs[:, j]
            r = np.linalg.norm(forms.D @ v - vals[j] * (mass * v))
            s = max(vals[j] * np.linalg.norm(mass * v), 1e-300)
            resid.append(r / s)
            ok = ok and (r / s <= tol)
        return ok, resid

    history = []
    for attempt, iters in enumerate((maxiter, 4 * maxiter)):
        try:
            with warnings.catch_warnings():
                # convergence is judged by the residual criterion below, not
                # by lobpcg's internal target
                warnings.simplefilter("ignore", UserWarning)
                vals, vecs = lobpcg(forms.D, X, B=Bop, M=precond, Y=ones,
                                    tol=1e-12, maxiter=iters, largest=False)
        except Exception as exc:  # noqa: BLE001 - fall through to ARPACK
            history.append(f"lobpcg raised {exc!r}")
            break
        order = np.argsort(vals)
        vals, vecs = vals[order], vecs[:, order]
        ok, resid = _post(vals, vecs)
        history.append(resid)
        if ok:
            forms._cache[key] = (vals, vecs)
            return vals, vecs
    # ARPACK shift-invert retry; keeps the zero mode and drops it afterwards
    try:
        v0 = rng.standard_normal(n)
        vals, vecs = eigsh(forms.D, k=k + 1, M=Bop, sigma=-sigma, which="LM", v0=v0)
        order = np.argsort(vals)
        vals, vecs = vals[order], vecs[:, order]
        vals, vecs = vals[1:], vecs[:, 1:]
        ok, resid = _post(vals, vecs)
        history.append(resid)
        if ok:
            forms._cache[key] = (vals, vecs)
            return vals, vecs
    except Exception as exc:  # noqa: BLE001
        history.append(f"eigsh raised {exc!r}")
    raise EigenSolveError(
        f"eigensolver failed the residual criterion {tol:.1e}", history=history)


def poincare_gap(forms: AssembledForms, tol: float = 1e-8, seed: int = 7) -> float:
    """Smallest nonzero generalized eigenvalue of (D, B): the spectral gap."""
    vals, _ = smallest_eigenpairs(forms, k=1, which="B", tol=tol, seed=seed)
    return float(vals[0])


def improved_gap(forms: AssembledForms, tol: float = 1e-8, seed: int = 7) -> float:
    """Largest lambda with D >= lambda B_mu on the B_mu-mean-zero subspace."""
    vals, _ = smallest_eigenpairs(forms, k=1, which="B_mu", tol=tol, seed=seed)
    return float(vals[0])


def dense_pencil(forms: AssembledForms, which: str = "B",
                 ceiling: int = DENSE_CEILING) -> tuple[np.ndarray, np.ndarray]:
    """Dense eigendecomposition of (D, mass); eigenvectors are mass-orthonormal."""
    n = forms.n_nodes
    if n > ceiling:
        raise DenseCeilingError(
            f"{n} nodes exceed the dense ceiling {ceiling}; "
            "use the resolvent-quadrature route")
    key = ("dense", which)
    if key not in forms._cache:
        mass = _pencil_mass(forms, which)
        s = 1.0 / np.sqrt(mass)
        A = forms.D.toarray() * s[:, None] * s[None, :]
        A = 0.5 * (A + A.T)
        lam, Q = eigh(A)
        lam = np.clip(lam, 0.0, None)
        forms._cache[key] = (lam, s[:, None] * Q)
    return forms._cache[key]


def frac_power_apply(forms: AssembledForms, f, beta: float) -> np.ndarray:
    """L_M^beta f by spectral calculus on the dense pencil (beta in (0, 1])."""
    if not 0.0 < beta <= 1.0:
        raise ValueError(f"beta={beta} outside (0, 1]")
    lam, U = dense_pencil(forms, "B")
    coef = U.T @ (forms.B * np.asarray(f, dtype=np.float64))
    return U @ (lam ** beta * coef)


def frac_norm_sq(forms: AssembledForms, f, alpha: float) -> float:
    """||L^(alpha/4) f||^2 in L^2(d mu_M) via the dense pencil."""
    lam, U = dense_pencil(forms, "B")
    coef = U.T @ (forms.B * np.asarray(f, dtype=np.float64))
    return float(np.dot(lam ** (alpha / 2.0), coef * coef))


# -- resolvent quadrature ---------------------------------------------------


def default_t_grid(forms: AssembledForms, n: int = 200,
                   decades: float = 6.0) -> np.ndarray:
    """Log-spaced quadrature nodes spanning `decades` beyond the spectral range."""
    lam_max = gershgorin_upper(forms, "B")
    lam_min = poincare_gap(forms)
    lo = math.log10(1.0 / lam_max) - decades
    hi = math.log10(1.0 / lam_min) + decades
    return np.logspace(lo, hi, n)


def resolvent_profile(forms: AssembledForms, F, t_grid,
                      method: str = "direct") -> np.ndarray:
    """||t L (I + t L)^{-1} f||_B^2 for every t, computed as ||f - u_t||_B^2.

    F may be a single vector or a matrix of column vectors; one
    factorization per t node is shared across all columns.  The residual
    target follows the attainable double-precision floor eps*cond at the
    extreme t nodes.
    """
    F = np.asarray(F, dtype=np.float64)
    single = F.ndim == 1
    cols = F[:, None] if single else F
    lam_max = gershgorin_upper(forms, "B")
    out = np.empty((len(t_grid), cols.shape[1]))
    u_prev = None
    for it, t in enumerate(t_grid):
        rtol = max(1e-10, 100 * np.finfo(float).eps * (1.0 + t * lam_max))
        if method == "direct":
            U = resolvent_direct(forms, cols, t, rtol=rtol)
        elif method == "cg":
            U = np.empty_like(cols)
            for j in range(cols.shape[1]):
                x0 = None if u_prev is None else u_prev[:, j]
                U[:, j] = solve_resolvent(forms, cols[:, j], t, rtol=rtol, x0=x0)
            u_prev = U
        else:
            raise ValueError(f"unknown method {method!r}")
        G = cols - U
        out[it] = (forms.B[:, None] * G * G).sum(axis=0)
    return out[:, 0] if single else out


def quadratic_from_profile(t_grid, norms2, alpha: float) -> float:
    """Quadrature value of int t^(-1-alpha/2) ||t L (I+tL)^{-1} f||^2 dt.

    Trapezoid in log t over the grid plus analytic tail corrections: below
    t_min the integrand behaves like t^(1-alpha/2) ||L f||^2, above t_max
    like t^(-1-alpha/2) ||f - P_0 f||^2.
    """
    if not 0.0 < alpha < 2.0:
        raise ValueError(f"alpha={alpha} outside (0, 2)")
    t = np.asarray(t_grid, dtype=np.float64)
    y = np.asarray(norms2, dtype=np.float64)
    integrand = t ** (-alpha / 2.0) * y
    core = float(np.trapezoid(integrand, np.log(t)))
    tail_low = float(y[0] * t[0] ** (-alpha / 2.0) / (2.0 - alpha / 2.0))
    tail_high = float(y[-1] * (2.0 / alpha) * t[-1] ** (-alpha / 2.0))
    return core + tail_low + tail_high


def quadratic_functional(forms: AssembledForms, f, alpha: float,
                         t_grid=None, method: str = "cg") -> float:
    """The quadrature side of the fractional-norm identity for one vector."""
    if t_grid is None:
        t_grid = default_t_grid(forms)
    norms2 = resolvent_profile(forms, f, t_grid, method=method)
    return quadratic_from_profile(t_grid, norms2, alpha)


def quadratic_constant(alpha: float) -> float:
    """Exact per-mode value Gamma(alpha/2) Gamma(2 - alpha/2) of the t-integral."""
    return math.gamma(alpha / 2.0) * math.gamma(2.0 - alpha / 2.0)


# -- form inequality used by the gap proof -----------------------------------


def lempoinc_check(forms: AssembledForms, W, f, tol: float | None = None) -> dict:
    """Check int (L_M W / W) f^2 dmu <= sum int |X_i f|^2 dmu on the grid.

    Discretely exact integration by parts gives lhs = (f^2/W)^T D W, so no
    boundary handling is needed.  W must be >= 1 at every node.
    """
    W = np.asarray(W, dtype=np.float64)
    f = np.asarray(f, dtype=np.float64)
    if np.any(W < 1.0 - 1e-12):
        raise ValueError("W must be >= 1 at every node")
    lhs = float((f * f / W) @ (forms.D @ W))
    rhs = float(f @ (forms.D @ f))
    if tol is None:
        tol = 1e-9 * (1.0 + abs(rhs))
    return {"lhs": lhs, "rhs": rhs, "holds": bool(lhs <= rhs + tol)}


# -- functional calculus ------------------------------------------------------


def functional_calculus_check(forms: AssembledForms, alpha: float,
                              lam: float | None = None,
                              tol: float = 1e-8) -> dict:
    """Minimum eigenvalue of L^(alpha/2) - lam^(alpha/2) mu^(alpha/2) on mean-zero.

    Formed in the B-inner product; `lam` defaults to the improved gap, for
    which alpha = 2 reduces to the defining inequality of that constant.
    """
    if not 0.0 < alpha <= 2.0:
        raise ValueError(f"alpha={alpha} outside (0, 2]")
    if lam is None:
        lam = improved_gap(forms)
    lamv, U = dense_pencil(forms, "B")
    n = forms.n_nodes
    sqB = np.sqrt(forms.B)
    V = sqB[:, None] * U                    # orthonormal in the plain inner product
    S = (V * lamv ** (alpha / 2.0)) @ V.T
    H = S - np.diag(lam ** (alpha / 2.0) * forms.mu_nodes ** (alpha / 2.0))
    q = sqB / np.linalg.norm(sqB)
    Qfull, _ = qr(q[:, None], mode="full")
    Qc = Qfull[:, 1:]
    Hsub = Qc.T @ H @ Qc
    Hsub = 0.5 * (Hsub + Hsub.T)
    min_eig = float(eigh(Hsub, eigvals_only=True, subset_by_index=[0, 0])[0])
    return {"min_eig": min_eig, "lambda": float(lam), "holds": bool(min_eig >= -tol)}


# -- off-diagonal decay -------------------------------------------------------


@dataclass
class OffdiagResult:
    distance: float
    rows: list                 # (t, r1, r2, bound) per t
    slope: float
    intercept: float
    r_squared: float
    bound_holds: bool

    def fit(self) -> dict:
        return {"slope": self.slope, "intercept": self.intercept,
                "r_squared": self.r_squared}


def offdiag_experiment(forms: AssembledForms, e_idx, f_idx,
                       t_list: Sequence[float]) -> OffdiagResult:
    """Resolvent decay between disjoint node sets E and F.

    For the B-normalized indicator f of E and each t, measures
    r1 = ||(I+tL)^{-1} f||_{L^2(F)} and r2 = ||tL(I+tL)^{-1} f||_{L^2(F)},
    fits log(r1+r2) against d/sqrt(t), and checks the fitted exponential
    bound 8 exp(slope d/sqrt(t) + intercept) pointwise.  Solves are direct:
    the far-field values sit far below any iterative residual floor.
    """
    e_idx = np.asarray(e_idx, dtype=np.intp)
    f_idx = np.asarray(f_idx, dtype=np.intp)
    if e_idx.size == 0 or f_idx.size == 0:
        raise ValueError("E and F must be nonempty")
    if np.intersect1d(e_idx, f_idx).size:
        raise ValueError("E and F must be disjoint")
    grid = forms.grid
    dist = float(grid.instance.pairwise_cc(grid.nodes[e_idx],
                                           grid.nodes[f_idx]).min())
    f = np.zeros(forms.n_nodes)
    f[e_idx] = 1.0
    f /= forms.b_norm(f)
    rows = []
    xs, ys = [], []
    for t in t_list:
        u = resolvent_direct(forms, f, t)
        g = f - u
        r1 = math.sqrt(float(np.dot(u[f_idx] ** 2, forms.B[f_idx])))
        r2 = math.sqrt(float(np.dot(g[f_idx] ** 2, forms.B[f_idx])))
        rows.append([float(t), r1, r2])
        xs.append(dist / math.sqrt(t))
        ys.append(math.log(r1 + r2))
    xs = np.asarray(xs)
    ys = np.asarray(ys)
    slope, intercept = np.polyfit(xs, ys, 1)
    ss_res = float(np.sum((ys - (slope * xs + intercept)) ** 2))
    ss_tot = float(np.sum((ys - ys.mean()) ** 2))
    r_squared = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    bound_holds = True
    for row, x in zip(rows, xs):
        bound = 8.0 * math.exp(slope * x + intercept)
        row.append(bound)
        bound_holds = bound_holds and (row[1] + row[2] <= bound * (1 + 1e-9))
    return OffdiagResult(distance=dist, rows=rows, slope=float(slope),
                         intercept=float(intercept), r_squared=float(r_squared),
                         bound_holds=bound_holds)
