"""Momentum grid, sphere quadrature and the Israel-particle collision operator.

The distribution function lives on a uniform Cartesian grid in covariant
(comoving) momentum and is extended by zero outside it.  ``eval_Q`` is the
direct pull-back quadrature

    Q(p) = (det g)^{-1/2} sum_q sum_omega w(p, q) [f(p') f(q') - f(p) f(q)] w_omega dq

with ``w = 1 / (p0 q0 sqrt(s))`` and ``(p', q')`` from the post-collision map.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple, Optional

import numpy as np

from . import _kernels
from .geometry import Frame, MetricState, frame_from_metric


class GridError(ValueError):
    pass


def _configure_threads():
    cap = os.environ.get("EBBI_THREADS")
    if cap:
        import numba

        numba.set_num_threads(max(1, min(int(cap), numba.config.NUMBA_NUM_THREADS)))


@dataclass(frozen=True)
class MomentumGrid:
    """``n**3`` nodes spanning ``[-p_max, p_max]**3``; ``n`` odd so 0 is a node."""

    n: int
    p_max: float

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 9:
            raise GridError("n must be an integer >= 9")
        if self.n % 2 == 0:
            raise GridError("n must be odd")
        if not self.p_max > 0:
            raise GridError("p_max must be positive")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "p_max", float(self.p_max))

    @property
    def spacing(self) -> float:
        return 2.0 * self.p_max / (self.n - 1)

    @property
    def cell_volume(self) -> float:
        return self.spacing ** 3

    @cached_property
    def axis(self) -> np.ndarray:
        a = np.linspace(-self.p_max, self.p_max, self.n)
        # exact antisymmetry keeps even data bitwise even
        a = 0.5 * (a - a[::-1])
        a.setflags(write=False)
        return a

    @cached_property
    def nodes(self) -> np.ndarray:
        """Node coordinates, shape ``(n, n, n, 3)``, C order."""
        a = self.axis
        P = np.stack(np.meshgrid(a, a, a, indexing="ij"), axis=-1)
        P.setflags(write=False)
        return P

    @cached_property
    def flat_nodes(self) -> np.ndarray:
        P = self.nodes.reshape(-1, 3)
        P.setflags(write=False)
        return P

    @property
    def shape(self):
        return (self.n, self.n, self.n)


def build_grid(n: int, p_max: float) -> MomentumGrid:
    return MomentumGrid(n, p_max)


@dataclass(frozen=True, eq=False)
class DistributionFunction:
    grid: MomentumGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != self.grid.shape:
            v = v.reshape(self.grid.shape)
        if not np.all(np.isfinite(v)):
            raise ValueError("distribution values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def with_values(self, values) -> "DistributionFunction":
        return DistributionFunction(self.grid, values)

    def total(self) -> float:
        """Comoving particle number ``sum f * cell_volume``."""
        return float(self.values.sum() * self.grid.cell_volume)


@dataclass(frozen=True, eq=False)
class SphereQuadrature:
    """Product rule: Gauss-Legendre in ``cos(theta)`` times uniform azimuth."""

    nodes: np.ndarray
    weights: np.ndarray
    n_polar: int = 0
    n_azimuth: int = 0

    def integrate(self, func) -> float:
        return float(np.dot(self.weights, func(self.nodes)))


def sphere_quadrature(n_polar: int = 8, n_azimuth: int = 16) -> SphereQuadrature:
    if n_polar < 1 or n_azimuth < 1:
        raise ValueError("sphere quadrature needs at least one node per direction")
    ct, wt = np.polynomial.legendre.leggauss(n_polar)
    phi = 2.0 * np.pi * np.arange(n_azimuth) / n_azimuth
    st = np.sqrt(1.0 - ct ** 2)
    nodes = np.stack(
        [np.outer(st, np.cos(phi)), np.outer(st, np.sin(phi)), np.outer(ct, np.ones(n_azimuth))],
        axis=-1,
    ).reshape(-1, 3)
    # exact zeros for the axis-aligned azimuths keep reflections exact
    nodes[np.abs(nodes) < 1e-15] = 0.0
    nodes /= np.linalg.norm(nodes, axis=1)[:, None]
    weights = np.outer(wt, np.full(n_azimuth, 2.0 * np.pi / n_azimuth)).ravel()
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return SphereQuadrature(nodes, weights, n_polar, n_azimuth)


def _padded(values: np.ndarray) -> np.ndarray:
    n = values.shape[0]
    Fp = np.zeros((n + 1, n + 1, n + 1))
    Fp[:n, :n, :n] = values
    return Fp


def _refine_axis(a: np.ndarray, r: int, axis: int) -> np.ndarray:
    # 4-point Lagrange insertion of r - 1 points per cell; zero beyond the grid
    a = np.moveaxis(a, axis, 0)
    n = a.shape[0]
    ext = np.concatenate([np.zeros((1,) + a.shape[1:]), a, np.zeros((2,) + a.shape[1:])])
    out = np.empty(((n - 1) * r + 1,) + a.shape[1:])
    out[::r] = a
    for m in range(1, r):
        t = m / r
        w = (-t * (t - 1) * (t - 2) / 6, (t + 1) * (t - 1) * (t - 2) / 2,
             -(t + 1) * t * (t - 2) / 2, (t + 1) * t * (t - 1) / 6)
        out[m::r] = w[0] * ext[0:n - 1] + w[1] * ext[1:n] + w[2] * ext[2:n + 1] + w[3] * ext[3:n + 2]
    return np.moveaxis(out, 0, axis)


def refine_cubic(values: np.ndarray, r: int) -> np.ndarray:
    """Tensor-product cubic refinement by an integer factor, clipped at zero."""
    out = np.asarray(values, dtype=float)
    if r == 1:
        return out
    for axis in range(3):
        out = _refine_axis(out, r, axis)
    return np.maximum(out, 0.0)


def interpolate(f: DistributionFunction, p_star) -> np.ndarray | float:
    """Trilinear interpolation of ``f``; zero outside ``[-p_max, p_max]**3``."""
    grid = f.grid
    P = np.asarray(p_star, dtype=float)
    scalar = P.ndim == 1
    U = (np.atleast_2d(P) + grid.p_max) / grid.spacing
    out = _kernels.trilinear_many(_padded(f.values), grid.n, np.ascontiguousarray(U))
    return float(out[0]) if scalar else out.reshape(P.shape[:-1])


def is_reflection_symmetric(f: DistributionFunction, g: np.ndarray) -> bool:
    """True when ``g`` is diagonal and ``f`` is even in each momentum axis separately."""
    g = np.asarray(g)
    off = np.abs(g - np.diag(np.diag(g))).max()
    if off > 1e-13 * np.abs(np.diag(g)).max():
        return False
    v = f.values
    return bool(
        np.array_equal(v, v[::-1, :, :]) and np.array_equal(v, v[:, ::-1, :]) and np.array_equal(v, v[:, :, ::-1])
    )


def is_isotropic(f: DistributionFunction, g: np.ndarray) -> bool:
    """Reflection symmetry plus ``g`` proportional to the identity and ``f`` blind to axis order."""
    if not is_reflection_symmetric(f, g):
        return False
    d = np.diag(np.asarray(g))
    if np.abs(d - d[0]).max() > 1e-13 * abs(d[0]):
        return False
    v = f.values
    return bool(np.array_equal(v, v.transpose(1, 0, 2)) and np.array_equal(v, v.transpose(0, 2, 1)))


def _orbit_average(octant: np.ndarray) -> np.ndarray:
    """Average over the six axis permutations, written back from one representative.

    Every member of an orbit receives the value computed for its sorted
    representative, so the result is exactly (bitwise) permutation symmetric.
    """
    perms = ((0, 1, 2), (0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0))
    mean = sum(octant.transpose(p) for p in perms) / 6.0
    m = octant.shape[0]
    idx = np.sort(np.stack(np.meshgrid(np.arange(m), np.arange(m), np.arange(m), indexing="ij")), axis=0)
    return mean[idx[0], idx[1], idx[2]]


def _half_sphere(sphere: SphereQuadrature):
    """Drop one node of every antipodal pair and double the other's weight.

    The post-collision momentum is even in ``omega``, so this is exact for
    any rule whose nodes come in antipodal pairs of equal weight.  Rules
    without that structure are returned unchanged.
    """
    nodes, weights = sphere.nodes, sphere.weights
    m = nodes.shape[0]
    dist = np.abs(nodes[:, None, :] + nodes[None, :, :]).max(axis=2)
    partner = dist.argmin(axis=1)
    if (dist[np.arange(m), partner].max() > 1e-12 or not np.array_equal(partner[partner], np.arange(m))
            or np.any(partner == np.arange(m)) or np.abs(weights[partner] - weights).max() > 1e-14):
        return nodes, weights
    keep = np.arange(m) < partner
    return np.ascontiguousarray(nodes[keep]), np.ascontiguousarray(2.0 * weights[keep])


class CollisionParts(NamedTuple):
    Q: np.ndarray
    gain: np.ndarray
    loss: np.ndarray
    escape_fraction: float
    symmetry: str


def _support_box(F: np.ndarray, P0: np.ndarray, n: int):
    nz = np.nonzero(F)
    if nz[0].size == 0:
        return None
    lo = np.array([max(int(a.min()) - 1, 0) for a in nz], dtype=float)
    hi = np.array([min(int(a.max()) + 1, n - 1) for a in nz], dtype=float)
    li, hi_i = lo.astype(int), hi.astype(int)
    # p0 is convex in p_*, so its maximum over the box is at a corner
    corners = P0[np.ix_([li[0], hi_i[0]], [li[1], hi_i[1]], [li[2], hi_i[2]])]
    return lo, hi, float(corners.max())


def eval_Q(
    f: DistributionFunction,
    state: MetricState,
    frame: Optional[Frame] = None,
    sphere: Optional[SphereQuadrature] = None,
    *,
    interpolation: str = "weighted",
    conservative: bool = False,
    symmetry: str = "auto",
    refine: int = 2,
    return_parts: bool = False,
):
    """Collision operator ``Q(f, f)`` at every grid node.

    Parameters
    ----------
    interpolation
        ``"trilinear"`` interpolates ``f`` itself at the post-collision
        momenta.  ``"weighted"`` (default) interpolates ``f * exp(p0 / 2)``
        and multiplies the exact ``exp(-p0' / 2)`` back, which removes the
        dominant exponential variation of the solutions of interest.
    refine
        The interpolated field is first refined this many times per cell by
        tensor cubic insertion, then read trilinearly.  ``1`` gives plain
        trilinear lookup on the original nodes.
    conservative
        Subtract ``f * (l0 + l1 p0 + l . p_*)`` with multipliers chosen so
        the discrete number, energy and momentum sums of ``Q`` vanish.
    symmetry
        ``"auto"`` evaluates one octant and mirrors it when ``g`` is
        diagonal and ``f`` is even in every axis.  When in addition ``g`` is
        a multiple of the identity and ``f`` ignores axis order, half the
        octant is evaluated and the result averaged over axis permutations;
        this is the same as using the permutation-symmetrised sphere rule and
        keeps isotropic data exactly isotropic.  ``"none"`` always evaluates
        every node with the rule as given.
    """
    _configure_threads()
    if sphere is None:
        sphere = sphere_quadrature()
    if frame is None:
        frame = frame_from_metric(state.g)
    grid = f.grid
    n = grid.n
    h = grid.spacing
    dv = grid.cell_volume
    det_g = float(np.linalg.det(state.g))
    prefactor = det_g ** -0.5

    P = grid.flat_nodes
    phat = np.ascontiguousarray(P @ frame.e_inv.T)
    p0 = np.sqrt(1.0 + np.einsum("ij,ij->i", phat, phat))
    U = np.ascontiguousarray((P + grid.p_max) / h)
    fflat = np.ascontiguousarray(f.values.ravel())

    if interpolation == "weighted":
        alpha = 0.5
    elif interpolation == "trilinear":
        alpha = 0.0
    else:
        raise ValueError(f"unknown interpolation {interpolation!r}")
    F = (fflat * np.exp(alpha * p0)).reshape(grid.shape) if alpha else f.values

    zeros = np.zeros(grid.shape)
    box = _support_box(F, p0.reshape(grid.shape), n)
    if box is None:
        parts = CollisionParts(zeros, zeros.copy(), zeros.copy(), 0.0, "none")
        return parts if return_parts else zeros

    used = "none"
    if symmetry == "auto" and is_reflection_symmetric(f, state.g):
        used = "wedge" if is_isotropic(f, state.g) else "octant"
    c = n // 2
    m = n - c
    a, b, d = np.meshgrid(np.arange(m), np.arange(m), np.arange(m), indexing="ij")
    if used == "none":
        out_idx = np.arange(n ** 3)
    else:
        # the product sphere rule is symmetric under x <-> y, so with g_xx = g_yy
        # and f blind to axis order half of the octant suffices
        sel = np.ones(a.shape, dtype=bool) if used == "octant" else a <= b
        out_idx = ((a[sel] + c) * n * n + (b[sel] + c) * n + (d[sel] + c)).ravel()
    out_idx = np.ascontiguousarray(out_idx, dtype=np.int64)

    om, wom = _half_sphere(sphere)
    omL = np.ascontiguousarray(om @ frame.e.T / h)
    lo, hi, e_box = box
    gain, escaped = _kernels.gain_kernel(
        _padded(refine_cubic(F, refine)), fflat, U, phat, p0, out_idx, om, omL, wom, alpha, lo, hi, e_box,
        int(refine),
    )
    loss = _kernels.loss_kernel(fflat, phat, p0, out_idx) * wom.sum()

    if used == "none":
        gain, loss, esc_full = gain.reshape(grid.shape), loss.reshape(grid.shape), escaped.reshape(grid.shape)
    else:
        mirror = np.abs(np.arange(n) - c)
        if used == "octant":
            octant = [x.reshape(m, m, m) for x in (gain, loss, escaped)]
        else:
            slot = np.full((m, m, m), -1, dtype=np.int64)
            slot[sel] = np.arange(int(sel.sum()))
            lo_ab, hi_ab = np.minimum(a, b), np.maximum(a, b)
            half = slot[lo_ab, hi_ab, d]
            octant = [_orbit_average(x[half]) for x in (gain, loss, escaped)]
        gain, loss, esc_full = (x[np.ix_(mirror, mirror, mirror)] for x in octant)

    gain = prefactor * dv * gain
    loss = prefactor * dv * loss
    Q = gain - loss
    total_loss = loss.sum()
    escape_fraction = float(prefactor * dv * esc_full.sum() / total_loss) if total_loss > 0 else 0.0
    if conservative:
        Q = conservative_projection(Q, f, p0.reshape(grid.shape))
    if return_parts:
        return CollisionParts(Q, gain, loss, escape_fraction, used)
    return Q


def conservative_projection(Q: np.ndarray, f: DistributionFunction, p0: np.ndarray) -> np.ndarray:
    """Remove the number, energy and momentum defect of ``Q`` along ``f``-weighted moments."""
    P = f.grid.nodes
    basis = np.stack([np.ones_like(p0), p0, P[..., 0], P[..., 1], P[..., 2]])
    weight = np.clip(f.values, 0.0, None)
    if not weight.any():
        return Q
    B = basis.reshape(5, -1)
    wv = weight.ravel()
    gram = (B * wv) @ B.T
    defect = B @ Q.ravel()
    # the momentum rows are degenerate for parity-even f; lstsq handles that
    lam = np.linalg.lstsq(gram, defect, rcond=1e-13)[0]
    return Q - (lam @ B).reshape(Q.shape) * weight


class CollisionMoments(NamedTuple):
    dN: float
    dE: float
    dP: np.ndarray


def collision_moment_check(f, state, frame=None, sphere=None, Q=None, **options) -> CollisionMoments:
    """Quadrature sums of ``Q``, ``Q p0`` and ``Q p_a`` over the grid."""
    if frame is None:
        frame = frame_from_metric(state.g)
    if Q is None:
        Q = eval_Q(f, state, frame, sphere, **options)
    grid = f.grid
    P = grid.nodes
    phat = P @ frame.e_inv.T
    p0 = np.sqrt(1.0 + np.einsum("...i,...i->...", phat, phat))
    dv = grid.cell_volume
    dN = float(Q.sum() * dv)
    dE = float((Q * p0).sum() * dv)
    dP = np.einsum("ijk,ijka->a", Q, P) * dv
    return CollisionMoments(dN, dE, dP)


@dataclass(frozen=True)
class CollisionOperator:
    """Bundles the quadrature and options used by the time steppers."""

    sphere: SphereQuadrature = field(default_factory=sphere_quadrature)
    interpolation: str = "weighted"
    conservative: bool = False
    symmetry: str = "auto"
    refine: int = 2
    enabled: bool = True

    def __call__(self, f: DistributionFunction, state: MetricState, frame: Optional[Frame] = None) -> np.ndarray:
        if not self.enabled:
            return np.zeros(f.grid.shape)
        return eval_Q(
            f,
            state,
            frame,
            self.sphere,
            interpolation=self.interpolation,
            conservative=self.conservative,
            symmetry=self.symmetry,
            refine=self.refine,
        )
