"""Truncated tensor grids and the symmetric form pair for L_M in L^2(d mu_M).

The Dirichlet form D(f,g) = sum_i int X_i f . X_i g dmu_M is assembled in
form (Galerkin) fashion: each frame field is sampled on the multilinear
interpolant at tensor Gauss points, giving sparse gradient operators G_i
from nodes to quadrature points and

    D = sum_i G_i^T diag(w_half) G_i,   w_half = M(quad point) * quad weight.

This keeps D symmetric positive semidefinite with exactly the constants in
its kernel; collocated centered differences would admit checkerboard
near-null modes whose Rayleigh quotients pollute the bottom of the spectrum.
Square centered-difference frame operators are still provided for
diagnostics (bracket checks, pointwise field application).

Mass forms are mass-lumped diagonals: B = M * node_measure and
B_mu = (1 + sum |X_i v|^2) * B.
"""

from __future__ import annotations

import itertools
import math
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import cg as _cg
from scipy.sparse.linalg import splu

from .groups import GroupInstance
from .weights import WeightSpec

MAX_NODES = 250_000


class GridError(ValueError):
    """Grid construction refused (tail criterion, size ceiling, bad resolution)."""


class ResolventError(RuntimeError):
    """Iterative resolvent solve failed to reach the target residual."""

    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = residuals


class Grid:
    """Tensor lattice over a coordinate box with uniform Haar node weights.

    Immutable after construction; the cache dict only memoizes derived
    geometry (pairwise distances) keyed by this object.
    """

    def __init__(self, instance: GroupInstance, bounds, shape, tail_estimate: float):
        self.instance = instance
        self.bounds = tuple((float(lo), float(hi)) for lo, hi in bounds)
        self.shape = tuple(int(m) for m in shape)
        self.spacing = tuple((hi - lo) / (m - 1)
                             for (lo, hi), m in zip(self.bounds, self.shape))
        axes = [np.linspace(lo, hi, m) for (lo, hi), m in zip(self.bounds, self.shape)]
        mesh = np.meshgrid(*axes, indexing="ij")
        self.nodes = np.ascontiguousarray(
            np.stack([m.ravel() for m in mesh], axis=-1))
        self.node_measure = np.full(self.nodes.shape[0],
                                    float(np.prod(self.spacing)))
        self.tail_estimate = float(tail_estimate)
        self._cache: dict = {}

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def dim(self) -> int:
        return len(self.shape)

    def axis_coords(self, a: int) -> np.ndarray:
        lo, hi = self.bounds[a]
        return np.linspace(lo, hi, self.shape[a])

    def interior_mask(self, layers: int = 1) -> np.ndarray:
        """Nodes at least `layers` lattice steps away from every boundary face."""
        mask = np.ones(self.shape, dtype=bool)
        for a, m in enumerate(self.shape):
            idx = np.arange(m)
            ax_ok = (idx >= layers) & (idx <= m - 1 - layers)
            shape = [1] * self.dim
            shape[a] = m
            mask &= ax_ok.reshape(shape)
        return mask.ravel()

    def pairwise_cc(self) -> np.ndarray:
        """Cached matrix of CC distances between all node pairs."""
        key = "pairwise_cc"
        if key not in self._cache:
            self._cache[key] = self.instance.pairwise_cc(self.nodes, self.nodes)
        return self._cache[key]


def _relative_tail(instance: GroupInstance, weight: WeightSpec, bounds,
                   grid_mass: float) -> float:
    """Estimate of the relative weight mass outside the box.

    Bounds int_{outside box} e^{-v} by the radial integral over {|x|_2 > L}
    with L the smallest half-width, evaluated by ray quadrature over a fixed
    direction set.  Conservative for confining weights, which is what the
    gate needs.
    """
    L = min(min(abs(lo), abs(hi)) for lo, hi in bounds)
    if L <= 0.0:
        return 1.0
    dim = instance.dim
    if dim == 1:
        dirs = np.array([[1.0], [-1.0]])
    else:
        rng = np.random.default_rng(1905)
        raw = rng.standard_normal((512, dim))
        dirs = raw / np.linalg.norm(raw, axis=1, keepdims=True)
    s = np.linspace(L, 4.0 * L, 1024)
    integrals = np.empty(dirs.shape[0])
    for k, u in enumerate(dirs):
        vals = np.exp(-weight.values(s[:, None] * u[None, :])) * s ** (dim - 1)
        integrals[k] = np.trapezoid(vals, s)
    surface = dim * math.pi ** (dim / 2.0) / math.gamma(dim / 2.0 + 1.0)
    outside = surface * float(integrals.mean()) if dim > 1 else float(integrals.sum())
    if outside <= 0.0:
        return 0.0
    return outside / (outside + grid_mass)


def build_grid(instance: GroupInstance, weight: WeightSpec, resolution,
               domain_radius: float | None = None, bounds=None,
               tail_tol: float = 1e-8, enforce_tail: bool = True,
               max_nodes: int = MAX_NODES) -> Grid:
    """Build a truncated grid, recording the achieved relative tail estimate.

    Either domain_radius (symmetric box [-R, R]^dim) or explicit per-axis
    bounds must be given.  Refuses when the tail criterion is not met,
    unless enforce_tail=False (used for deliberately non-confining boxes).
    """
    dim = instance.dim
    if np.isscalar(resolution):
        resolution = (int(resolution),) * dim
    if len(resolution) != dim:
        raise GridError(f"resolution needs {dim} entries, got {len(resolution)}")
    if any(m < 8 for m in resolution):
        raise GridError("resolution must be at least 8 nodes per axis")
    if bounds is None:
        if domain_radius is None or domain_radius <= 0:
            raise GridError("either a positive domain_radius or bounds is required")
        bounds = [(-float(domain_radius), float(domain_radius))] * dim
    if len(bounds) != dim:
        raise GridError(f"bounds needs {dim} intervals")
    n_total = int(np.prod(resolution))
    if n_total > max_nodes:
        raise GridError(f"grid would have {n_total} nodes, above the ceiling {max_nodes}")

    grid = Grid(instance, bounds, resolution, tail_estimate=np.nan)
    grid_mass = float(np.sum(weight.weight(grid.nodes) * grid.node_measure))
    tail = _relative_tail(instance, weight, grid.bounds, grid_mass)
    grid.tail_estimate = tail
    if enforce_tail and not tail < tail_tol:
        raise GridError(
            f"relative tail mass {tail:.3e} exceeds {tail_tol:.1e}; "
            "enlarge the domain radius"
        )
    return grid


# -- reference Q1 element ---------------------------------------------------


@lru_cache(maxsize=None)
def _reference_q1(dim: int):
    """Corner offsets, Gauss points/weights, and shape gradients on [0,1]^dim."""
    corners = np.array(list(itertools.product((0, 1), repeat=dim)), dtype=np.int64)
    g = 0.5 - 0.5 / np.sqrt(3.0)
    q1d = np.array([g, 1.0 - g])
    qpts = np.array(list(itertools.product(q1d, repeat=dim)))
    n_corner = corners.shape[0]
    n_q = qpts.shape[0]
    grad = np.empty((n_q, n_corner, dim))
    for qi in range(n_q):
        for ni in range(n_corner):
            for a in range(dim):
                val = 1.0 if corners[ni, a] else -1.0
                for b in range(dim):
                    if b == a:
                        continue
                    xb = qpts[qi, b]
                    val *= xb if corners[ni, b] else 1.0 - xb
                grad[qi, ni, a] = val
    qw = np.full(n_q, 0.5 ** dim)
    return corners, qpts, qw, grad


def _centered_diff_1d(m: int, h: float) -> sparse.csr_matrix:
    """Centered first difference, first-order one-sided at the two ends."""
    rows, cols, vals = [], [], []
    for i in range(1, m - 1):
        rows += [i, i]
        cols += [i - 1, i + 1]
        vals += [-0.5 / h, 0.5 / h]
    rows += [0, 0, m - 1, m - 1]
    cols += [0, 1, m - 2, m - 1]
    vals += [-1.0 / h, 1.0 / h, -1.0 / h, 1.0 / h]
    return sparse.csr_matrix((vals, (rows, cols)), shape=(m, m))


def _axis_derivative(shape: Sequence[int], spacing: Sequence[float],
                     axis: int) -> sparse.csr_matrix:
    op = None
    for a, m in enumerate(shape):
        factor = _centered_diff_1d(m, spacing[a]) if a == axis else sparse.identity(m, format="csr")
        op = factor if op is None else sparse.kron(op, factor, format="csr")
    return op


class AssembledForms:
    """Sparse Dirichlet form D, diagonal mass forms B and B_mu, and frame operators.

    frame_ops map node vectors to quadrature-point samples of X_i f; they
    satisfy D = sum_i G_i^T diag(form_weights) G_i by construction.
    frame_ops_node are square centered-difference realizations of the frame
    (diagnostic use only).
    """

    def __init__(self, grid, weight, D, B, B_mu, frame_ops, form_weights,
                 frame_ops_node, M_nodes, mu_nodes):
        self.grid = grid
        self.weight = weight
        self.D = D
        self.B = B
        self.B_mu = B_mu
        self.frame_ops = frame_ops
        self.form_weights = form_weights
        self.frame_ops_node = frame_ops_node
        self.M_nodes = M_nodes
        self.mu_nodes = mu_nodes
        self._cache: dict = {}

    @property
    def n_nodes(self) -> int:
        return self.grid.n_nodes

    def b_norm(self, f) -> float:
        f = np.asarray(f)
        return float(np.sqrt(np.dot(f * f, self.B)))

    def b_inner(self, f, g) -> float:
        return float(np.dot(np.asarray(f) * self.B, np.asarray(g)))

    def b_mean(self, f) -> float:
        return float(np.dot(self.B, np.asarray(f)) / self.B.sum())


def assemble(grid: Grid, weight: WeightSpec) -> AssembledForms:
    """Assemble the symmetric form pair for L_M on the grid."""
    instance = grid.instance
    dim = grid.dim
    shape = grid.shape
    h = np.asarray(grid.spacing)
    corners, qpts, qw, gradref = _reference_q1(dim)
    n_corner = corners.shape[0]
    n_q = qpts.shape[0]

    cells_shape = tuple(m - 1 for m in shape)
    n_cell = int(np.prod(cells_shape))
    base = np.indices(cells_shape).reshape(dim, -1).T            # (n_cell, dim)
    corner_multi = base[:, None, :] + corners[None, :, :]        # (n_cell, n_corner, dim)
    cols = np.ravel_multi_index(
        tuple(corner_multi[..., a] for a in range(dim)), shape)  # (n_cell, n_corner)

    lo = np.array([b[0] for b in grid.bounds])
    xq = lo + (base[:, None, :] + qpts[None, :, :]) * h          # (n_cell, n_q, dim)
    xq_flat = xq.reshape(-1, dim)
    w_half = (weight.weight(xq_flat).reshape(n_cell, n_q)
              * float(np.prod(h)) * qw[None, :])                 # (n_cell, n_q)

    rows = (np.arange(n_cell)[:, None] * n_q + np.arange(n_q)[None, :])
    rows3 = np.broadcast_to(rows[:, :, None], (n_cell, n_q, n_corner))
    cols3 = np.broadcast_to(cols[:, None, :], (n_cell, n_q, n_corner))
    phys_grad = gradref / h[None, None, :]                       # (n_q, n_corner, dim)

    frame_ops = []
    n_nodes = grid.n_nodes
    D = None
    wflat = w_half.ravel()
    for i in range(instance.frame_size):
        coeff = instance.frame_coefficient(i, xq_flat).reshape(n_cell, n_q, dim)
        vals = np.einsum("cqa,qna->cqn", coeff, phys_grad)
        G = sparse.coo_matrix(
            (vals.ravel(), (rows3.ravel(), cols3.ravel())),
            shape=(n_cell * n_q, n_nodes)).tocsr()
        frame_ops.append(G)
        Di = (G.T @ G.multiply(wflat[:, None])).tocsr()
        D = Di if D is None else D + Di
    D = (D + D.T) * 0.5
    D.sum_duplicates()

    M_nodes = weight.weight(grid.nodes)
    if np.any(M_nodes <= 0.0) or np.any(w_half <= 0.0):
        raise GridError(
            "weight underflows to zero on this domain; shrink the domain "
            "radius or use a slower-growing potential")
    mu_nodes = weight.mu(grid.nodes)
    B = M_nodes * grid.node_measure
    B_mu = mu_nodes * B

    node_ops = []
    axis_ops = [_axis_derivative(shape, grid.spacing, a) for a in range(dim)]
    for i in range(instance.frame_size):
        coeff = instance.frame_coefficient(i, grid.nodes)
        op = None
        for a in range(dim):
            ca = coeff[:, a]
            if not np.any(ca):
                continue
            term = sparse.diags(ca) @ axis_ops[a]
            op = term if op is None else op + term
        node_ops.append(op.tocsr())

    return AssembledForms(grid, weight, D.tocsr(), B, B_mu, tuple(frame_ops),
                          wflat, tuple(node_ops), M_nodes, mu_nodes)


def apply_LM(forms: AssembledForms, f) -> np.ndarray:
    """Discrete generalized operator: B^{-1} D f."""
    f = np.asarray(f, dtype=np.float64)
    return (forms.D @ f) / forms.B


def _scaled_system(forms: AssembledForms, t: float):
    """Symmetrically scaled resolvent matrix I + t S D S with S = diag(1/sqrt(B)).

    B has the dynamic range of the weight, so the raw system (B + tD) is
    badly conditioned in absolute terms; after scaling the matrix is >= I
    and the scaled residual bounds the B-norm solution error directly.
    """
    s = 1.0 / np.sqrt(forms.B)
    SDS = forms.D.multiply(s[:, None]).multiply(s[None, :]).tocsr()
    A = (t * SDS + sparse.identity(forms.n_nodes, format="csr")).tocsr()
    return A, s


def solve_resolvent(forms: AssembledForms, f, t: float, rtol: float = 1e-10,
                    x0=None, maxiter: int | None = None) -> np.ndarray:
    """Solve (B + t D) u = B f by conjugate gradients in scaled variables.

    The solution is the discrete (I + t L_M)^{-1} f; the achieved relative
    residual (measured in the B-norm, which bounds the B-norm error) is
    required to be below rtol.  Raises ResolventError otherwise.
    """
    if t <= 0.0:
        raise ValueError("resolvent parameter t must be positive")
    f = np.asarray(f, dtype=np.float64)
    A, s = _scaled_system(forms, t)
    b = f / s
    if maxiter is None:
        maxiter = max(5000, 40 * forms.n_nodes)
    M = sparse.diags(1.0 / A.diagonal())
    xin = None if x0 is None else np.asarray(x0) / s
    u, info = _cg(A, b, x0=xin, rtol=rtol * 0.25, atol=0.0, maxiter=maxiter, M=M)
    bnorm = np.linalg.norm(b)
    res = np.linalg.norm(b - A @ u) / bnorm if bnorm > 0 else 0.0
    if info != 0 or not res <= rtol:
        raise ResolventError(
            f"CG did not reach relative residual {rtol:.1e} at t={t:g} "
            f"(achieved {res:.3e}, info={info})",
            residuals=[res],
        )
    return u * s


def resolvent_direct(forms: AssembledForms, F, t: float,
                     rtol: float = 1e-10) -> np.ndarray:
    """Direct sparse factorization solve of the scaled resolvent system.

    Used where CG is unsuitable: far-field values of off-diagonal decay
    experiments sit many orders below an iterative residual floor, and
    batched quadrature profiles reuse one factorization across many vectors.
    """
    F = np.asarray(F, dtype=np.float64)
    single = F.ndim == 1
    if single:
        F = F[:, None]
    A, s = _scaled_system(forms, t)
    lu = splu(A.tocsc())
    bhat = F / s[:, None]
    U = lu.solve(bhat)
    resid = np.linalg.norm(A @ U - bhat, axis=0)
    scale = np.maximum(np.linalg.norm(bhat, axis=0), 1e-300)
    if not np.all(resid / scale <= rtol):
        raise ResolventError(
            f"direct resolvent residual {np.max(resid / scale):.3e} above {rtol:.1e}"
        )
    out = U * s[:, None]
    return out[:, 0] if single else out


def write_triplets(matrix, path) -> None:
    """Write a square sparse matrix as 'N nnz' header plus 'i j value' rows (0-based)."""
    mat = sparse.coo_matrix(matrix)
    mat.sum_duplicates()
    order = np.lexsort((mat.col, mat.row))
    with open(path, "w") as fh:
        fh.write(f"{mat.shape[0]} {mat.nnz}\n")
        for k in order:
            fh.write(f"{mat.row[k]} {mat.col[k]} {float(mat.data[k])!r}\n")


def read_triplets(path) -> sparse.csr_matrix:
    with open(path) as fh:
        n, nnz = (int(tok) for tok in fh.readline().split())
        rows = np.empty(nnz, dtype=np.int64)
        cols = np.empty(nnz, dtype=np.int64)
        vals = np.empty(nnz)
        for k in range(nnz):
            i, j, v = fh.readline().split()
            rows[k], cols[k], vals[k] = int(i), int(j), float(v)
    return sparse.csr_matrix((vals, (rows, cols)), shape=(n, n))
