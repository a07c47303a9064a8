"""Bianchi I geometric state: metric, second fundamental form and derived scalars.

Frames follow the Cholesky gauge: ``e`` is the lower-triangular factor of
the spatial metric with positive diagonal, ``g = e @ e.T``.  Frame
components of a covariant momentum are ``p_hat = e_inv @ p_star`` so that
``|p_hat|**2 = g^{ab} p_a p_b``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np


class MetricError(ValueError):
    """Raised for a spatial metric that is not symmetric positive definite."""


class VanishingMeanCurvature(ZeroDivisionError):
    """Raised when a quantity is normalised by a vanishing trace ``k``."""


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class MetricState:
    """Spatial metric ``g_ab`` and second fundamental form ``k_ab`` at time ``t``."""

    t: float
    g: np.ndarray
    k: np.ndarray

    def __post_init__(self):
        g = _frozen(self.g)
        k = _frozen(self.k)
        if g.shape != (3, 3) or k.shape != (3, 3):
            raise MetricError("g and k must be 3x3")
        scale = max(np.abs(g).max(), 1e-300)
        if np.abs(g - g.T).max() > 1e-12 * scale:
            raise MetricError("metric not symmetric")
        kscale = max(np.abs(k).max(), 1e-300)
        if np.abs(k - k.T).max() > 1e-12 * kscale:
            raise MetricError("second fundamental form not symmetric")
        if not np.all(np.isfinite(g)) or np.linalg.eigvalsh(g).min() <= 0.0:
            raise MetricError("metric not Riemannian")
        object.__setattr__(self, "t", float(self.t))
        object.__setattr__(self, "g", g)
        object.__setattr__(self, "k", k)

    def replace(self, **changes) -> "MetricState":
        kw = {"t": self.t, "g": self.g, "k": self.k}
        kw.update(changes)
        return MetricState(**kw)


@dataclass(frozen=True, eq=False)
class Frame:
    """Orthonormal triad in Cholesky gauge, ``g = e @ e.T``."""

    e: np.ndarray
    e_inv: np.ndarray

    def to_frame(self, p_star: np.ndarray) -> np.ndarray:
        """Frame components ``p_hat`` of covariant momenta (last axis of length 3)."""
        return np.asarray(p_star, dtype=float) @ self.e_inv.T

    def from_frame(self, p_hat: np.ndarray) -> np.ndarray:
        return np.asarray(p_hat, dtype=float) @ self.e.T


def frame_from_metric(g) -> Frame:
    """Cholesky frame of ``g``; raises :class:`MetricError` unless ``g`` is SPD."""
    g = np.asarray(g, dtype=float)
    if g.shape != (3, 3) or not np.all(np.isfinite(g)):
        raise MetricError("metric not Riemannian")
    if np.abs(g - g.T).max() > 1e-12 * max(np.abs(g).max(), 1e-300):
        raise MetricError("metric not Riemannian")
    try:
        e = np.linalg.cholesky(g)
    except np.linalg.LinAlgError as exc:
        raise MetricError("metric not Riemannian") from exc
    # triangular solve keeps e_inv exactly lower triangular
    e_inv = np.linalg.solve(e, np.eye(3))
    e_inv = np.tril(e_inv)
    return Frame(_frozen(e), _frozen(e_inv))


class MetricAlgebra(NamedTuple):
    g_inv: np.ndarray
    det_g: float


def metric_algebra(state: MetricState) -> MetricAlgebra:
    g = state.g
    det_g = float(np.linalg.det(g))
    if not det_g > 0.0:
        raise MetricError("singular metric")
    frame = frame_from_metric(g)
    # g^{-1} = e^{-T} e^{-1}, symmetric by construction
    g_inv = frame.e_inv.T @ frame.e_inv
    return MetricAlgebra(0.5 * (g_inv + g_inv.T), det_g)


class KinematicScalars(NamedTuple):
    H: float
    sigma: np.ndarray
    sigma2: float
    F: Optional[float]


def kinematic_scalars(state: MetricState) -> KinematicScalars:
    """Hubble variable, shear ``sigma_ab``, ``sigma_ab sigma^ab`` and scaled shear.

    ``F`` is ``None`` when ``H == 0``; the scaled shear is undefined there.
    """
    g_inv = metric_algebra(state).g_inv
    k = state.k
    H = float(np.einsum("ab,ab->", g_inv, k)) / 3.0
    sigma = k - H * state.g
    sigma_up = g_inv @ sigma @ g_inv
    sigma2 = max(float(np.einsum("ab,ab->", sigma, sigma_up)), 0.0)
    F = sigma2 / (4.0 * H * H) if H != 0.0 else None
    return KinematicScalars(H, sigma, sigma2, F)


def kasner_exponents(state: MetricState) -> np.ndarray:
    """Shape parameters ``s_i``: eigenvalues of ``k^a_b`` over ``k``, ascending."""
    frame = frame_from_metric(state.g)
    khat = frame.e_inv @ state.k @ frame.e_inv.T
    khat = 0.5 * (khat + khat.T)
    trace = float(np.trace(khat))
    if trace == 0.0:
        raise VanishingMeanCurvature("vanishing mean curvature")
    return np.sort(np.linalg.eigvalsh(khat)) / trace


def deceleration(state: MetricState, k_dot_trace: float) -> float:
    """``d = -1 - k_dot / k**2`` given the time derivative of ``k = g^{ab} k_ab``."""
    g_inv = metric_algebra(state).g_inv
    k = float(np.einsum("ab,ab->", g_inv, state.k))
    if k == 0.0:
        raise VanishingMeanCurvature("vanishing mean curvature")
    return -1.0 - k_dot_trace / (k * k)


def mean_curvature_rate(state: MetricState, k_dot: np.ndarray) -> float:
    """Time derivative of ``g^{ab} k_ab`` given ``k_dot``, using ``g_dot = 2k``."""
    g_inv = metric_algebra(state).g_inv
    k_up = g_inv @ state.k @ g_inv
    return float(np.einsum("ab,ab->", g_inv, k_dot) - 2.0 * np.einsum("ab,ab->", k_up, state.k))
