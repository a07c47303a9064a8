"""Compiled inner loops for the collision quadrature.

Everything here works in grid index units: a covariant momentum ``p`` maps
to ``u = (p + p_max) / spacing`` so nodes sit on integers ``0 .. n-1``.
Each output node is reduced sequentially in a fixed order, which keeps the
result bitwise reproducible for any thread count.
"""

from __future__ import annotations

import math

import numpy as np
from numba import config, njit, prange

# the TBB shipped with some distributions is too old for numba; skip probing it
config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]


# points this close to a face (in index units) count as on it, so that roundoff
# cannot switch a boundary value on for one query and off for its mirror image
EDGE = 1e-9


@njit(cache=True, inline="always")
def _outside(n, u, v, w):
    top = n - 1 + EDGE
    return u < -EDGE or v < -EDGE or w < -EDGE or u > top or v > top or w > top


@njit(cache=True, inline="always")
def _trilinear(Fp, n, u, v, w):
    # Fp is zero padded to (n + 1)**3 so the upper corner never needs a clamp
    if _outside(n, u, v, w):
        return 0.0
    top = n - 1.0
    u = min(max(u, 0.0), top)
    v = min(max(v, 0.0), top)
    w = min(max(w, 0.0), top)
    i = int(u)
    j = int(v)
    k = int(w)
    a = u - i
    b = v - j
    c = w - k
    c0 = 1.0 - c
    f00 = Fp[i, j, k] * c0 + Fp[i, j, k + 1] * c
    f01 = Fp[i, j + 1, k] * c0 + Fp[i, j + 1, k + 1] * c
    f10 = Fp[i + 1, j, k] * c0 + Fp[i + 1, j, k + 1] * c
    f11 = Fp[i + 1, j + 1, k] * c0 + Fp[i + 1, j + 1, k + 1] * c
    b0 = 1.0 - b
    return (f00 * b0 + f01 * b) * (1.0 - a) + (f10 * b0 + f11 * b) * a


@njit(cache=True)
def trilinear_many(Fp, n, U):
    out = np.empty(U.shape[0])
    for m in range(U.shape[0]):
        out[m] = _trilinear(Fp, n, U[m, 0], U[m, 1], U[m, 2])
    return out


@njit(parallel=True, cache=True)
def gain_kernel(Fp, f, U, phat, p0, out_idx, om, omL, wom, alpha, box_lo, box_hi, e_box, r):
    """Gain term and escape weight at the output nodes ``out_idx``.

    ``Fp`` holds the interpolated variable ``f * exp(alpha * p0)`` (padded),
    ``U`` the node positions in index units, ``omL`` the sphere nodes pushed
    through the frame and divided by the grid spacing.  ``Fp`` may live on a
    lattice refined ``r`` times; lookups then scale index coordinates by ``r``.
    """
    nf = Fp.shape[0] - 1
    n = (nf - 1) // r + 1
    N = U.shape[0]
    M = om.shape[0]
    K = out_idx.shape[0]
    gain = np.zeros(K)
    escaped = np.zeros(K)
    for kk in prange(K):
        i = out_idx[kk]
        ui0 = U[i, 0]
        ui1 = U[i, 1]
        ui2 = U[i, 2]
        fi = f[i]
        g_acc = 0.0
        e_acc = 0.0
        for j in range(N):
            s0 = ui0 + U[j, 0]
            s1 = ui1 + U[j, 1]
            s2 = ui2 + U[j, 2]
            # p' + q' = p + q and both must lie in the support box
            if s0 < 2.0 * box_lo[0] or s0 > 2.0 * box_hi[0]:
                continue
            if s1 < 2.0 * box_lo[1] or s1 > 2.0 * box_hi[1]:
                continue
            if s2 < 2.0 * box_lo[2] or s2 > 2.0 * box_hi[2]:
                continue
            n0 = p0[i] + p0[j]
            if n0 > 2.0 * e_box:
                continue
            nx = phat[i, 0] + phat[j, 0]
            ny = phat[i, 1] + phat[j, 1]
            nz = phat[i, 2] + phat[j, 2]
            s = n0 * n0 - nx * nx - ny * ny - nz * nz
            rs = math.sqrt(s)
            inv_rs = 1.0 / rs
            c = inv_rs / (n0 + rs)
            nq = nx * phat[j, 0] + ny * phat[j, 1] + nz * phat[j, 2]
            q0 = p0[j]
            qx = phat[j, 0]
            qy = phat[j, 1]
            qz = phat[j, 2]
            # n_* in index units (without the 2 p_max offset)
            m0 = s0 - (n - 1)
            m1 = s1 - (n - 1)
            m2 = s2 - (n - 1)
            fifj = fi * f[j]
            acc = 0.0
            esc = 0.0
            for m in range(M):
                o0 = om[m, 0]
                o1 = om[m, 1]
                o2 = om[m, 2]
                nw = nx * o0 + ny * o1 + nz * o2
                qw = qx * o0 + qy * o1 + qz * o2
                A = 2.0 * (qw - q0 * nw * inv_rs + nw * nq * c)
                B = nw * c
                v0 = ui0 + A * (omL[m, 0] + B * m0)
                v1 = ui1 + A * (omL[m, 1] + B * m1)
                v2 = ui2 + A * (omL[m, 2] + B * m2)
                fp = _trilinear(Fp, nf, r * v0, r * v1, r * v2)
                if fp != 0.0:
                    fq = _trilinear(Fp, nf, r * (s0 - v0), r * (s1 - v1), r * (s2 - v2))
                    acc += wom[m] * fp * fq
                if fifj != 0.0:
                    if _outside(n, v0, v1, v2) or _outside(n, s0 - v0, s1 - v1, s2 - v2):
                        esc += wom[m]
            w = 1.0 / (p0[i] * q0 * rs)
            g_acc += w * math.exp(-alpha * n0) * acc
            e_acc += w * fifj * esc
        gain[kk] = g_acc
        escaped[kk] = e_acc
    return gain, escaped


@njit(parallel=True, cache=True)
def loss_kernel(f, phat, p0, out_idx):
    """``f(p) * sum_q w(p, q) f(q)`` without the sphere weight."""
    N = f.shape[0]
    K = out_idx.shape[0]
    loss = np.zeros(K)
    for kk in prange(K):
        i = out_idx[kk]
        if f[i] == 0.0:
            continue
        acc = 0.0
        for j in range(N):
            if f[j] == 0.0:
                continue
            n0 = p0[i] + p0[j]
            nx = phat[i, 0] + phat[j, 0]
            ny = phat[i, 1] + phat[j, 1]
            nz = phat[i, 2] + phat[j, 2]
            s = n0 * n0 - nx * nx - ny * ny - nz * nz
            acc += f[j] / (p0[i] * p0[j] * math.sqrt(s))
        loss[kk] = f[i] * acc
    return loss
