"""Concrete unimodular Lie groups with polynomial volume growth.

Two instances are provided: abelian Euclidean space R^n and the first
Heisenberg group H1 in coordinates (x, y, t).  Lebesgue measure on the
coordinates is the Haar measure for both.  H1 carries the symmetric product

    (x1,y1,t1) * (x2,y2,t2) = (x1+x2, y1+y2, t1+t2 + (x1 y2 - y1 x2)/2)

and the left-invariant horizontal frame X1 = dx - (y/2) dt,
X2 = dy + (x/2) dt, whose bracket [X1, X2] = dt spans the missing direction.

The H1 Carnot-Caratheodory norm comes from the closed geodesic family: the
planar projection of a length-minimizing path is a circular arc, which
reduces the distance to a scalar root-find in the arc half-angle.  Ball
volumes follow the exact dilation scaling V(r) = c_V r^4, with c_V
calibrated once per process by a fixed-seed Monte-Carlo run.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np

from . import kernels

EUCLIDEAN = "euclidean"
HEISENBERG1 = "heisenberg1"

_H1_VOLUME_SEED = 20260801
_H1_VOLUME_SAMPLES = 10_000_000
_H1_MC_CHUNK = 1_000_000


class GroupError(ValueError):
    """Point does not belong to the instance, or a parameter is out of domain."""


@dataclass(frozen=True)
class GrowthExponents:
    """Volume growth data: V(r) ~ r^local_dim near 0, r^infinity_dim at infinity,
    and V(theta r) <= C theta^kappa V(r) for theta > 1."""

    local_dim: float
    infinity_dim: float
    kappa: float

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.local_dim, self.infinity_dim, self.kappa)


def unit_ball_volume(n: int) -> float:
    """Lebesgue volume of the Euclidean unit ball in R^n."""
    return math.pi ** (n / 2.0) / math.gamma(n / 2.0 + 1.0)


class GroupInstance:
    """A fixed group: product, frame, CC metric, and ball-volume model.

    Instances are immutable after construction and safe for concurrent use.
    All point arguments are coordinate arrays of shape (dim,) or (N, dim).
    """

    def __init__(self, kind: str, dim: int, frame_size: int,
                 growth: GrowthExponents):
        self.kind = kind
        self.dim = dim
        self.frame_size = frame_size
        self.growth = growth

    def __repr__(self) -> str:
        return f"GroupInstance({self.kind}, dim={self.dim})"

    # -- basic group structure -------------------------------------------

    def identity(self) -> np.ndarray:
        return np.zeros(self.dim)

    def _check(self, p: np.ndarray) -> np.ndarray:
        p = np.asarray(p, dtype=np.float64)
        if p.shape[-1] != self.dim:
            raise GroupError(
                f"point with {p.shape[-1]} coordinates on a dim-{self.dim} group"
            )
        if not np.all(np.isfinite(p)):
            raise GroupError("point coordinates must be finite")
        return p

    def multiply(self, g, h) -> np.ndarray:
        """Group product g*h (vector addition for Euclidean)."""
        g = self._check(g)
        h = self._check(h)
        if self.kind == EUCLIDEAN:
            return g + h
        out = g + h
        twist = 0.5 * (g[..., 0] * h[..., 1] - g[..., 1] * h[..., 0])
        out = np.array(out)
        out[..., 2] += twist
        return out

    def inverse(self, g) -> np.ndarray:
        return -self._check(g)

    # -- frame ------------------------------------------------------------

    def frame_coefficient(self, i: int, points) -> np.ndarray:
        """Coordinate coefficients of the i-th frame field at the given points."""
        if not 0 <= i < self.frame_size:
            raise GroupError(f"frame index {i} out of range 0..{self.frame_size - 1}")
        pts = np.atleast_2d(self._check(points))
        coeff = np.zeros_like(pts)
        if self.kind == EUCLIDEAN:
            coeff[:, i] = 1.0
            return coeff
        if i == 0:
            coeff[:, 0] = 1.0
            coeff[:, 2] = -0.5 * pts[:, 1]
        else:
            coeff[:, 1] = 1.0
            coeff[:, 2] = 0.5 * pts[:, 0]
        return coeff

    def frame_flow(self, i: int, points, s: float) -> np.ndarray:
        """Flow of the i-th frame field for time s (right translation by exp(s X_i))."""
        if not 0 <= i < self.frame_size:
            raise GroupError(f"frame index {i} out of range 0..{self.frame_size - 1}")
        pts = self._check(points)
        step = np.zeros(self.dim)
        step[i] = s
        return self.multiply(pts, step)

    def frame_apply(self, i: int, f: Callable, points, step: float = 1e-5) -> np.ndarray:
        """(X_i f) at the given points by centered coordinate differences.

        f must accept (N, dim) arrays and return (N,) values.
        """
        pts = np.atleast_2d(self._check(points))
        coeff = self.frame_coefficient(i, pts)
        out = np.zeros(pts.shape[0])
        for a in range(self.dim):
            ca = coeff[:, a]
            if not np.any(ca):
                continue
            delta = np.zeros(self.dim)
            delta[a] = step
            out += ca * (np.asarray(f(pts + delta)) - np.asarray(f(pts - delta))) / (2 * step)
        if np.ndim(points) == 1:
            return float(out[0])
        return out

    # -- metric -----------------------------------------------------------

    def cc_norm(self, points) -> np.ndarray:
        """Distance to the identity."""
        pts = np.atleast_2d(self._check(points))
        if self.kind == EUCLIDEAN:
            out = np.linalg.norm(pts, axis=-1)
        else:
            out = kernels.h1_cc_norm(
                np.ascontiguousarray(pts[:, 0]),
                np.ascontiguousarray(pts[:, 1]),
                np.ascontiguousarray(pts[:, 2]),
            )
        if np.ndim(points) == 1:
            return float(out[0])
        return out

    def cc_distance(self, g, h):
        """Left-invariant distance d(g, h) = |h^{-1} g|."""
        return self.cc_norm(self.multiply(self.inverse(h), g))

    def pairwise_cc(self, a, b) -> np.ndarray:
        """Distance matrix d(a_i, b_j) between two point sets."""
        a = np.atleast_2d(self._check(a))
        b = np.atleast_2d(self._check(b))
        if self.kind == EUCLIDEAN:
            diff = a[:, None, :] - b[None, :, :]
            return np.sqrt((diff * diff).sum(axis=-1))
        return kernels.pairwise_h1_dist(np.ascontiguousarray(a),
                                        np.ascontiguousarray(b))

    def dilate(self, lam: float, points) -> np.ndarray:
        """Metric dilation: scalar scaling on R^n, (x,y,t) -> (lx, ly, l^2 t) on H1."""
        pts = self._check(points)
        if self.kind == EUCLIDEAN:
            return lam * pts
        out = np.array(pts)
        out[..., :2] *= lam
        out[..., 2] *= lam * lam
        return out

    # -- volume model -------------------------------------------------------

    @property
    def volume_constant(self) -> float:
        """c_V in the model V(r) = c_V r^d used by the non-local kernel."""
        if self.kind == EUCLIDEAN:
            return unit_ball_volume(self.dim)
        return _h1_unit_ball_volume()

    def ball_volume(self, r):
        """Haar volume of the CC ball of radius r (exact power law for both kinds)."""
        r_arr = np.asarray(r, dtype=np.float64)
        if np.any(r_arr <= 0.0):
            raise GroupError("ball radius must be positive")
        out = self.volume_constant * r_arr ** self.growth.local_dim
        if np.ndim(r) == 0:
            return float(out)
        return out

    def growth_exponents(self) -> tuple[float, float, float]:
        return self.growth.as_tuple()

    def ball_bounding_box(self, r: float) -> list[tuple[float, float]]:
        """Coordinate box containing the CC ball of radius r."""
        if self.kind == EUCLIDEAN:
            return [(-r, r)] * self.dim
        tmax = r * r / (2.0 * math.pi)
        return [(-r, r), (-r, r), (-tmax, tmax)]


@lru_cache(maxsize=None)
def euclidean(n: int) -> GroupInstance:
    """Abelian group R^n with the coordinate frame."""
    if n < 1:
        raise GroupError("Euclidean dimension must be >= 1")
    return GroupInstance(EUCLIDEAN, n, n, GrowthExponents(n, n, n))


@lru_cache(maxsize=None)
def heisenberg1() -> GroupInstance:
    """First Heisenberg group in coordinates (x, y, t); homogeneous dimension 4."""
    return GroupInstance(HEISENBERG1, 3, 2, GrowthExponents(4, 4, 4))


@lru_cache(maxsize=1)
def _h1_unit_ball_volume() -> float:
    """Monte-Carlo volume of the unit CC ball of H1 (fixed seed, cached).

    Samples the bounding box |x|,|y| <= 1, |t| <= 1/(2 pi); the max height of
    the unit sphere is 1/(2 pi), reached by the half-turn geodesics.
    """
    rng = np.random.default_rng(_H1_VOLUME_SEED)
    tmax = 1.0 / (2.0 * math.pi)
    box_volume = 4.0 * 2.0 * tmax
    hits = 0
    done = 0
    while done < _H1_VOLUME_SAMPLES:
        m = min(_H1_MC_CHUNK, _H1_VOLUME_SAMPLES - done)
        u = rng.random((m, 3))
        x = 2.0 * u[:, 0] - 1.0
        y = 2.0 * u[:, 1] - 1.0
        t = tmax * (2.0 * u[:, 2] - 1.0)
        d = kernels.h1_cc_norm(x, y, t)
        hits += int((d <= 1.0).sum())
        done += m
    return box_volume * hits / _H1_VOLUME_SAMPLES
