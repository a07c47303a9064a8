"""Matter sources of the Einstein equations from a sampled distribution function.

Every integral is the grid's midpoint rule ``sum(values) * cell_volume``,
the same rule the collision quadrature uses for its partner sum, so the
discrete defects of both are consistent.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .collision import DistributionFunction
from .geometry import Frame, MetricState, metric_algebra


class MomentsError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Moments:
    """Energy density, stress, particle current and momentum density.

    ``N`` is the contravariant current ``(N^0, N^1, N^2, N^3)``; ``T0a`` the
    mixed components ``T_{0a}``, whose vanishing is the momentum constraint.
    """

    rho: float
    S: np.ndarray
    S_trace: float
    N: np.ndarray
    T0a: np.ndarray
    P_iso: Optional[float] = None

    @classmethod
    def vacuum(cls) -> "Moments":
        return cls(0.0, np.zeros((3, 3)), 0.0, np.zeros(4), np.zeros(3))


def shell_energy(grid, g_inv) -> np.ndarray:
    """``p0`` at every node of ``grid`` for the inverse metric ``g_inv``."""
    P = grid.nodes
    return np.sqrt(1.0 + np.einsum("...a,ab,...b->...", P, g_inv, P))


def compute_moments(f: DistributionFunction, state: MetricState, frame: Optional[Frame] = None) -> Moments:
    alg = metric_algebra(state)
    grid = f.grid
    P = grid.nodes.reshape(-1, 3)
    p0 = shell_energy(grid, alg.g_inv).ravel()
    v = f.values.ravel()
    scale = alg.det_g ** -0.5 * grid.cell_volume

    rho = scale * float(np.dot(v, p0))
    fw = v / p0
    S = scale * (P.T * fw) @ P
    S = 0.5 * (S + S.T)
    S_trace = float(np.einsum("ab,ab->", alg.g_inv, S))
    N0 = scale * float(v.sum())
    flux = scale * (P.T @ fw)
    N = np.concatenate([[N0], alg.g_inv @ flux])
    T0a = -scale * (P.T @ v)
    return Moments(rho, S, S_trace, N, T0a)


def frame_stress(m: Moments, frame: Frame) -> np.ndarray:
    """Orthonormal-frame components ``S_hat = e_inv S e_inv^T``."""
    Sh = frame.e_inv @ m.S @ frame.e_inv.T
    return 0.5 * (Sh + Sh.T)


def isotropic_pressure(f: DistributionFunction, R: float, g=None) -> float:
    """Pressure of the isotropic model with ``g = R**2 * identity``.

    ``g`` is optional and only checked: an anisotropic metric is rejected
    because the pressure is not a scalar there.
    """
    if g is not None:
        g = np.asarray(g, dtype=float)
        ref = g[0, 0]
        if np.abs(g - ref * np.eye(3)).max() > 1e-12 * abs(ref):
            raise MomentsError("isotropic pressure needs g proportional to the identity")
    if not R > 0:
        raise MomentsError("scale factor must be positive")
    grid = f.grid
    P = grid.nodes
    r2 = np.einsum("...a,...a->...", P, P)
    p0 = np.sqrt(1.0 + r2 / R ** 2)
    return float(R ** -5 * np.sum(f.values * r2 / (3.0 * p0)) * grid.cell_volume)
