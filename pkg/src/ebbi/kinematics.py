"""Mass shell, binary-collision invariants and the elastic post-collision map.

All functions broadcast over leading axes: a batch of momenta is a
``(..., 3)`` array of covariant components together with a ``(...)`` array
of energies.  Frame components follow :mod:`ebbi.geometry`,
``p_hat = e_inv @ p_star``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional

import numpy as np

from .geometry import Frame, frame_from_metric

H2_CLAMP = 1e-10


class KinematicsError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Momentum:
    """Covariant momentum ``p_star`` of a unit-mass particle and its energy ``p0``."""

    p_star: np.ndarray
    p0: np.ndarray

    def hat(self, frame: Frame) -> np.ndarray:
        return frame.to_frame(self.p_star)


class CollisionInvariants(NamedTuple):
    h: np.ndarray
    s: np.ndarray
    v_moller: np.ndarray
    w: np.ndarray


def mass_shell(g_inv, p_star) -> Momentum:
    p = np.asarray(p_star, dtype=float)
    norm2 = np.einsum("...a,ab,...b->...", p, np.asarray(g_inv, dtype=float), p)
    return Momentum(p, np.sqrt(1.0 + norm2))


def _clamp_h2(h2):
    h2 = np.asarray(h2, dtype=float)
    if np.any(h2 < -H2_CLAMP):
        raise KinematicsError("negative relative momentum squared; momenta are off shell")
    return np.where(h2 < 0.0, 0.0, h2)


def collision_invariants(g, p: Momentum, q: Momentum) -> CollisionInvariants:
    """``h``, ``s``, Moller velocity and the combined Israel weight for a pair.

    ``h**2 = (p - q).(p - q)`` and ``s = -(p + q).(p + q)`` are evaluated
    separately with signature ``(-, +, +, +)``; ``s = 4 + h**2`` is then a
    consequence of the mass shell rather than an input.
    """
    frame = frame_from_metric(g)
    ph = p.hat(frame)
    qh = q.hat(frame)
    d = ph - qh
    t = ph + qh
    h2 = _clamp_h2(np.einsum("...a,...a->...", d, d) - (p.p0 - q.p0) ** 2)
    s = (p.p0 + q.p0) ** 2 - np.einsum("...a,...a->...", t, t)
    h = np.sqrt(h2)
    rs = np.sqrt(s)
    v = h * rs / (4.0 * p.p0 * q.p0)
    w = 1.0 / (p.p0 * q.p0 * rs)
    return CollisionInvariants(h, s, v, w)


def post_collision(g, frame: Optional[Frame], p: Momentum, q: Momentum, omega):
    """Outgoing pair ``(p', q')`` for scattering parameter ``omega`` on the unit sphere.

    In frame components, with ``n = p + q`` and ``sqrt(s)`` the total
    invariant mass, the outgoing momentum is
    ``p' = p + 2 a (omega + c (n.omega) n)`` where ``c = 1 / (sqrt(s) (n0 + sqrt(s)))``
    and ``a = q.omega - q0 (n.omega) / sqrt(s) + c (n.omega)(n.q)``.  This
    is the boost to the centre-of-momentum frame, a reflection of the
    relative momentum across the plane normal to ``omega``, and the boost
    back.  ``q'`` follows from four-momentum conservation.
    """
    if frame is None:
        frame = frame_from_metric(g)
    om = np.asarray(omega, dtype=float)
    if np.any(np.abs(np.einsum("...a,...a->...", om, om) - 1.0) > 1e-12):
        raise KinematicsError("omega must be a unit vector")
    ph = p.hat(frame)
    qh = q.hat(frame)
    nh = ph + qh
    n0 = p.p0 + q.p0
    s = n0 * n0 - np.einsum("...a,...a->...", nh, nh)
    rs = np.sqrt(s)
    c = 1.0 / (rs * (n0 + rs))
    nw = np.einsum("...a,...a->...", nh, om)
    a = (np.einsum("...a,...a->...", qh, om) - q.p0 * nw / rs
         + c * nw * np.einsum("...a,...a->...", nh, qh))
    step = 2.0 * a[..., None] * (om + (c * nw)[..., None] * nh)
    p_hat_out = ph + step
    p0_out = p.p0 + 2.0 * a * nw / rs
    p_out = frame.from_frame(p_hat_out)
    q_out = p.p_star + q.p_star - p_out
    return Momentum(p_out, p0_out), Momentum(q_out, n0 - p0_out)


def kernel_weight(inv: CollisionInvariants, angular: Optional[Callable] = None, theta=None):
    """Israel kernel times Moller velocity, ``1 / (p0 q0 sqrt(s))``.

    ``angular`` is an optional factor ``sigma0(theta)``; it is 1 for Israel
    particles proper, in which case ``theta`` is ignored.
    """
    if angular is None:
        return inv.w
    if theta is None:
        raise KinematicsError("an angular factor needs the scattering angle")
    return inv.w * angular(theta)


def scattering_angle(g, p: Momentum, q: Momentum, p_prime: Momentum, q_prime: Momentum):
    frame = frame_from_metric(g)
    d = p.hat(frame) - q.hat(frame)
    dp = p_prime.hat(frame) - q_prime.hat(frame)
    h2 = np.einsum("...a,...a->...", d, d) - (p.p0 - q.p0) ** 2
    if np.any(h2 <= 0.0):
        raise KinematicsError("angle undefined for vanishing relative momentum")
    cos = (np.einsum("...a,...a->...", d, dp) - (p.p0 - q.p0) * (p_prime.p0 - q_prime.p0)) / h2
    return np.arccos(np.clip(cos, -1.0, 1.0))


def random_metric(rng, spread: float = 2.0) -> np.ndarray:
    """SPD metric with eigenvalues spread over ``exp(+-spread)`` in a random basis."""
    Q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    lam = np.exp(rng.uniform(-spread, spread, size=3))
    g = (Q * lam) @ Q.T
    return 0.5 * (g + g.T)


def property_suite(samples: int = 100_000, seed: int = 0, metrics: int = 20) -> dict:
    """Randomised checks of the collision map and the two-particle estimates.

    Returns the worst relative error of conservation, mass shell and
    ``h``/``s`` invariance, and violation counts of the momentum
    inequalities, over ``samples`` triples spread across ``metrics`` metrics.
    """
    rng = np.random.default_rng(seed)
    worst = {"conservation": 0.0, "shell": 0.0, "h_invariance": 0.0, "s_invariance": 0.0, "s_identity": 0.0}
    violations = {"s_le_4p0q0": 0, "h_lower": 0, "h_upper": 0, "phat_le_p0": 0}
    per = np.diff(np.linspace(0, samples, metrics + 1).astype(int))
    for count in per:
        g = random_metric(rng)
        frame = frame_from_metric(g)
        g_inv = frame.e_inv.T @ frame.e_inv
        scale = np.exp(rng.uniform(-2.0, 2.0, size=(count, 1)))
        p = mass_shell(g_inv, rng.normal(size=(count, 3)) * scale)
        q = mass_shell(g_inv, rng.normal(size=(count, 3)) * scale[::-1])
        om = rng.normal(size=(count, 3))
        om /= np.linalg.norm(om, axis=1)[:, None]
        pp, qq = post_collision(g, frame, p, q, om)

        tot0 = p.p0 + q.p0
        tot = p.p_star + q.p_star
        ref = np.maximum(np.abs(np.concatenate([tot0[:, None], tot], axis=1)).max(axis=1), 1.0)
        err = np.maximum(np.abs(pp.p0 + qq.p0 - tot0),
                         np.abs(pp.p_star + qq.p_star - tot).max(axis=1)) / ref
        worst["conservation"] = max(worst["conservation"], float(err.max()))
        for out in (pp, qq):
            shell = np.abs(out.p0 ** 2 - 1.0 - np.einsum("ia,ab,ib->i", out.p_star, g_inv, out.p_star))
            worst["shell"] = max(worst["shell"], float((shell / out.p0 ** 2).max()))
        a = collision_invariants(g, p, q)
        b = collision_invariants(g, pp, qq)
        worst["h_invariance"] = max(worst["h_invariance"], float((np.abs(a.h - b.h) / np.sqrt(a.s)).max()))
        worst["s_invariance"] = max(worst["s_invariance"], float((np.abs(a.s - b.s) / a.s).max()))
        worst["s_identity"] = max(worst["s_identity"], float((np.abs(a.s - 4.0 - a.h ** 2) / a.s).max()))

        ph, qh = p.hat(frame), q.hat(frame)
        dist = np.linalg.norm(ph - qh, axis=1)
        tol = 1e-12
        violations["s_le_4p0q0"] += int(np.sum(a.s > 4.0 * p.p0 * q.p0 * (1 + tol)))
        violations["h_lower"] += int(np.sum(dist / np.sqrt(p.p0 * q.p0) > a.h * (1 + tol) + tol))
        violations["h_upper"] += int(np.sum(a.h > dist * (1 + tol) + tol))
        violations["phat_le_p0"] += int(np.sum(np.linalg.norm(ph, axis=1) > p.p0))
    return {"samples": int(samples), "worst": worst, "violations": violations}
