"""Einstein-Boltzmann right-hand sides, initial data and time stepping.

The kinetic unknown is ``f`` on a fixed grid of covariant momenta.  In
Bianchi I the comoving ``p_*`` is conserved along free motion, so the
Boltzmann equation reduces to ``df/dt = Q(f, f)`` node by node and all of
the metric dependence sits inside ``Q``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .collision import CollisionOperator, DistributionFunction
from .diagnostics import RunRecord, weighted_norm
from .geometry import (MetricError, MetricState, frame_from_metric, kasner_exponents, kinematic_scalars,
                       mean_curvature_rate, metric_algebra)
from .moments import Moments, compute_moments, frame_stress, isotropic_pressure

MODES = ("coupled", "metric_only", "kinetic_only_frozen_metric", "flrw")


class InitialDataError(ValueError):
    pass


class ConstraintCheckError(ArithmeticError):
    pass


@dataclass(frozen=True, eq=False)
class CoupledState:
    metric: MetricState
    f: DistributionFunction
    lam: float

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("the cosmological constant must be positive")

    @property
    def gamma(self) -> float:
        return math.sqrt(self.lam / 3.0)

    @property
    def t(self) -> float:
        return self.metric.t


@dataclass(frozen=True)
class ConstraintResiduals:
    C_H: float
    C_M: np.ndarray
    C_H_rel: float


def _sym(a):
    return 0.5 * (a + a.T)


def einstein_rhs(state: MetricState, m: Moments, lam: float):
    """``(g_dot, k_dot)`` for the metric and second fundamental form."""
    g, k = state.g, state.k
    g_inv = metric_algebra(state).g_inv
    trace = float(np.einsum("ab,ab->", g_inv, k))
    g_dot = 2.0 * k
    k_dot = 2.0 * k @ g_inv @ k - trace * k + m.S + 0.5 * (m.rho - m.S_trace) * g + lam * g
    return _sym(g_dot), _sym(k_dot)


def constraint_residuals(state: MetricState, m: Moments, lam: float) -> ConstraintResiduals:
    """Hamiltonian residual in two algebraically equivalent forms, plus ``T_0a``.

    The second form, ``k**2 - 3/2 sigma**2 - 3 rho - 3 Lambda``, equals 3/2 of
    the first; a mismatch beyond roundoff means the inputs are inconsistent.
    """
    alg = metric_algebra(state)
    k_up = alg.g_inv @ state.k @ alg.g_inv
    kk = float(np.einsum("ab,ab->", k_up, state.k))
    trace = float(np.einsum("ab,ab->", alg.g_inv, state.k))
    C_H = -kk + trace ** 2 - 2.0 * m.rho - 2.0 * lam
    sigma2 = kinematic_scalars(state).sigma2
    alt = trace ** 2 - 1.5 * sigma2 - 3.0 * m.rho - 3.0 * lam
    scale = max(trace ** 2, kk, abs(m.rho), lam)
    if abs(1.5 * C_H - alt) > 1e-10 * scale:
        raise ConstraintCheckError("constraint forms disagree beyond roundoff")
    rel = abs(C_H) / trace ** 2 if trace != 0.0 else math.inf
    return ConstraintResiduals(C_H, np.array(m.T0a, dtype=float), rel)


def _is_even(values: np.ndarray) -> bool:
    flipped = values[::-1, ::-1, ::-1]
    scale = max(np.abs(values).max(), 1e-300)
    return bool(np.abs(values - flipped).max() <= 1e-14 * scale)


def solve_initial_data(g0, sigma0, f0: DistributionFunction, lam: float, *, allow_large_H0: bool = False,
                       t0: float = 0.0) -> CoupledState:
    """Complete ``(g0, sigma0, f0)`` to data satisfying both constraints.

    ``sigma0`` is projected to its trace-free part with respect to ``g0``
    (with a warning if that changed it); ``H0`` then follows from the
    Hamiltonian constraint and ``k0 = sigma0 + H0 g0``.
    """
    g0 = np.asarray(g0, dtype=float)
    sigma0 = _sym(np.asarray(sigma0, dtype=float))
    if not lam > 0:
        raise InitialDataError("lambda must be positive")
    if not _is_even(f0.values):
        raise InitialDataError("momentum constraint violated: f0 is not even in p_*")
    probe = MetricState(t0, g0, np.zeros((3, 3)))
    g_inv = metric_algebra(probe).g_inv
    tr = float(np.einsum("ab,ab->", g_inv, sigma0))
    if abs(tr) > 1e-12 * max(np.abs(sigma0).max(), 1.0):
        warnings.warn("sigma0 was not trace-free; projected", stacklevel=2)
    sigma0 = sigma0 - tr / 3.0 * g0
    sigma2 = float(np.einsum("ab,ab->", g_inv @ sigma0 @ g_inv, sigma0))
    rho = compute_moments(f0, probe).rho
    H0 = math.sqrt(sigma2 / 6.0 + rho / 3.0 + lam / 3.0)
    gamma = math.sqrt(lam / 3.0)
    if H0 >= math.sqrt(7.0 / 6.0) * gamma and not allow_large_H0:
        raise InitialDataError(
            f"H0 = {H0:.6g} is not below sqrt(7/6) gamma = {math.sqrt(7 / 6) * gamma:.6g}; "
            "set allow_large_H0 to proceed"
        )
    k0 = sigma0 + H0 * g0
    return CoupledState(MetricState(t0, g0, _sym(k0)), f0, lam)


# ---------------------------------------------------------------- stepping


def _rk4(rhs, t, y, dt):
    k1 = rhs(t, y)
    k2 = rhs(t + 0.5 * dt, tuple(a + 0.5 * dt * b for a, b in zip(y, k1)))
    k3 = rhs(t + 0.5 * dt, tuple(a + 0.5 * dt * b for a, b in zip(y, k2)))
    k4 = rhs(t + dt, tuple(a + dt * b for a, b in zip(y, k3)))
    return tuple(a + dt / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4) for a, b1, b2, b3, b4 in zip(y, k1, k2, k3, k4))


def _rk4_scaled(rhs, t, y, dt, rates):
    """RK4 on ``exp(-r (s - t)) y`` per component, mapped back at the end of the step.

    With ``r = 2 H`` for the metric pair the exponential growth is
    integrated exactly, so near de Sitter the truncation error does not
    accumulate into ``exp(-2 gamma t) g``.
    """
    def scaled(s, z):
        w = [math.exp(r * (s - t)) for r in rates]
        d = rhs(s, tuple(zi * wi if r else zi for zi, wi, r in zip(z, w, rates)))
        return tuple(di / wi - r * zi if r else di for di, zi, wi, r in zip(d, z, w, rates))

    z = _rk4(scaled, t, y, dt)
    return tuple(zi * math.exp(r * dt) if r else zi for zi, r in zip(z, rates))


def _growth(g, k) -> float:
    """Per-step rescaling rate for the metric pair.

    Near de Sitter the pair grows like ``exp(2 H t)``, so ``2 H`` makes that
    growth exact.  While the shear is still large it is switched off
    smoothly: the shear part grows more slowly, and rescaling would
    steepen it and cost accuracy in the early transient.
    """
    ks = kinematic_scalars(MetricState(0.0, _sym(g), _sym(k)))
    if ks.H <= 0.0:
        return 0.0
    return 2.0 * ks.H * max(0.0, 1.0 - 4.0 * math.sqrt(ks.sigma2) / ks.H)


def de_sitter_path(g0, gamma: float, t0: float = 0.0) -> Callable[[float], MetricState]:
    """Metric ``exp(2 gamma (t - t0)) g0`` with ``k = gamma g``."""
    g0 = np.asarray(g0, dtype=float)

    def path(t):
        g = math.exp(2.0 * gamma * (t - t0)) * g0
        return MetricState(t, g, gamma * g)

    return path


class HermitePath:
    """Metric trajectory sampled at step times, cubic Hermite in between.

    ``g`` uses ``g_dot = 2 k`` for the slopes; ``k`` is interpolated
    linearly, which is enough because the collision term reads only ``g``.
    """

    def __init__(self, times, g_list, k_list):
        self.times = np.asarray(times, dtype=float)
        self.g = np.asarray(g_list, dtype=float)
        self.k = np.asarray(k_list, dtype=float)

    def __call__(self, t) -> MetricState:
        ts = self.times
        i = int(np.searchsorted(ts, t, side="right") - 1)
        i = min(max(i, 0), len(ts) - 2)
        h = ts[i + 1] - ts[i]
        x = (t - ts[i]) / h
        if abs(x) < 1e-12:
            return MetricState(t, self.g[i], self.k[i])
        if abs(x - 1.0) < 1e-12:
            return MetricState(t, self.g[i + 1], self.k[i + 1])
        h00 = 2 * x ** 3 - 3 * x ** 2 + 1
        h10 = x ** 3 - 2 * x ** 2 + x
        h01 = -2 * x ** 3 + 3 * x ** 2
        h11 = x ** 3 - x ** 2
        g = (h00 * self.g[i] + h10 * h * 2.0 * self.k[i] + h01 * self.g[i + 1] + h11 * h * 2.0 * self.k[i + 1])
        k = (1 - x) * self.k[i] + x * self.k[i + 1]
        return MetricState(t, _sym(g), _sym(k))


class _System:
    """Right-hand side of one evolution mode over a fixed grid."""

    def __init__(self, grid, lam, mode, collision, metric_path=None, frozen_f=None):
        if mode not in MODES:
            raise ValueError(f"unknown mode {mode!r}")
        self.grid = grid
        self.lam = lam
        self.mode = mode
        self.collision = collision
        self.metric_path = metric_path
        self.frozen_f = frozen_f

    def collide(self, fv, metric):
        if not self.collision.enabled:
            return np.zeros_like(fv)
        f = DistributionFunction(self.grid, fv)
        return self.collision(f, metric, frame_from_metric(metric.g))

    def __call__(self, t, y):
        mode = self.mode
        if mode == "coupled":
            g, k, fv = y
            metric = MetricState(t, _sym(g), _sym(k))
            m = compute_moments(DistributionFunction(self.grid, fv), metric)
            g_dot, k_dot = einstein_rhs(metric, m, self.lam)
            return g_dot, k_dot, self.collide(fv, metric)
        if mode == "metric_only":
            g, k = y
            metric = MetricState(t, _sym(g), _sym(k))
            m = compute_moments(self.frozen_f, metric)
            return einstein_rhs(metric, m, self.lam)
        if mode == "kinetic_only_frozen_metric":
            (fv,) = y
            return (self.collide(fv, self.metric_path(t)),)
        R, Rdot, fv = y
        metric, Rddot = self.flrw_acceleration(t, float(R), float(Rdot), fv)
        return np.asarray(Rdot, dtype=float), np.asarray(Rddot), self.collide(fv, metric)

    def flrw_acceleration(self, t, R, Rdot, fv):
        """Second Friedmann equation, ``R'' / R = -(rho + 3 P) / 6 + Lambda / 3``."""
        metric = MetricState(t, R * R * np.eye(3), R * Rdot * np.eye(3))
        f = DistributionFunction(self.grid, fv)
        rho = compute_moments(f, metric).rho
        P = isotropic_pressure(f, R)
        return metric, R * (-rho / 6.0 - 0.5 * P + self.lam / 3.0)


def step_rk4(state: CoupledState, dt: float, sphere=None, collision: Optional[CollisionOperator] = None
             ) -> CoupledState:
    """One classical Runge-Kutta step of the full coupled system."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    if collision is None:
        collision = CollisionOperator() if sphere is None else CollisionOperator(sphere=sphere)
    system = _System(state.f.grid, state.lam, "coupled", collision)
    y = (state.metric.g, state.metric.k, state.f.values)
    rate = _growth(state.metric.g, state.metric.k)
    g, k, fv = _rk4_scaled(system, state.t, y, dt, (rate, rate, 0.0))
    metric = MetricState(state.t + dt, _sym(g), _sym(k))
    return CoupledState(metric, DistributionFunction(state.f.grid, fv), state.lam)


# ------------------------------------------------------------ observation


def observe(metric: MetricState, f: DistributionFunction, lam: float, *, k_dot_trace=None, k_weight=5.5,
            N=3, norm=True) -> dict:
    """Every scalar the run records, for one consistent snapshot."""
    frame = frame_from_metric(metric.g)
    m = compute_moments(f, metric, frame)
    ks = kinematic_scalars(metric)
    cr = constraint_residuals(metric, m, lam)
    if k_dot_trace is None:
        _, k_dot = einstein_rhs(metric, m, lam)
        k_dot_trace = mean_curvature_rate(metric, k_dot)
    trace = 3.0 * ks.H
    s = kasner_exponents(metric)
    detg = metric_algebra(metric).det_g
    off = np.abs(metric.g - np.diag(np.diag(metric.g))).max() / np.abs(np.diag(metric.g)).max()
    out = {
        "H": ks.H,
        "sigma2": ks.sigma2,
        "F": ks.F if ks.F is not None else math.nan,
        "rho": m.rho,
        "S_trace": m.S_trace,
        "Shat_max": float(np.abs(frame_stress(m, frame)).max()),
        "N0": float(m.N[0]),
        "C_H_rel": cr.C_H_rel,
        "min_f": float(f.values.min()),
        "norm_kN": weighted_norm(f, metric, k_weight, N) if norm else math.nan,
        "detg": detg,
        "s1": s[0],
        "s2": s[1],
        "s3": s[2],
        "d": -1.0 - k_dot_trace / (trace * trace),
        "comoving_N": f.total(),
        "C_M": float(np.abs(cr.C_M).max()),
        "offdiag_g": float(off),
    }
    return out


def check_metric_bounds(path, times, gamma: float) -> dict:
    """Measured constants of the frozen-metric hypotheses on ``times``.

    Returns the smallest ``c0`` bounding ``g^{ab}`` against ``exp(-2 gamma t)``
    and the frame constants; warns if the scaled shear reaches 1/4.
    """
    c0 = 1.0
    C_frame = 0.0
    F_max = 0.0
    for t in times:
        st = path(t)
        g_inv = metric_algebra(st).g_inv
        ev = np.linalg.eigvalsh(g_inv) * math.exp(2.0 * gamma * t)
        c0 = max(c0, ev.max(), 1.0 / ev.min())
        fr = frame_from_metric(st.g)
        C_frame = max(C_frame, np.abs(fr.e).max() * math.exp(-gamma * t), np.abs(fr.e_inv).max() * math.exp(gamma * t))
        F = kinematic_scalars(st).F
        F_max = max(F_max, F if F is not None else math.inf)
    if F_max >= 0.25:
        warnings.warn(f"frozen metric violates F < 1/4 (max F = {F_max:.3g})", stacklevel=2)
    return {"c0": c0, "C_frame": C_frame, "F_max": F_max}


def _metric_k_dot_trace(path, t, dt):
    delta = 1e-3 * dt
    K = [float(np.einsum("ab,ab->", metric_algebra(path(s)).g_inv, path(s).k)) for s in (t - delta, t + delta)]
    return (K[1] - K[0]) / (2.0 * delta)


def run(state0: CoupledState, t_end: float, dt: float, output_every: int = 1, mode: str = "coupled", *,
        collision: Optional[CollisionOperator] = None, metric_path=None, k_weight: float = 5.5, N: int = 3,
        ceiling: float = 1e-2, snapshot_every: Optional[int] = None, progress=None) -> RunRecord:
    """Integrate from ``state0`` to ``t_end`` with fixed step ``dt``.

    ``output_every`` counts steps between recorded rows.  In
    ``kinetic_only_frozen_metric`` mode the metric comes from ``metric_path``
    (default: de Sitter growth of the initial metric).  A Hamiltonian
    residual above ``ceiling`` or a degenerate metric stops the run early
    and is reported through ``record.status``.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    if not dt > 0 or not t_end > state0.t:
        raise ValueError("need dt > 0 and t_end after the initial time")
    if collision is None:
        collision = CollisionOperator()
    grid = state0.f.grid
    lam = state0.lam
    gamma = state0.gamma
    t0 = state0.t
    steps = int(round((t_end - t0) / dt))
    if abs(t0 + steps * dt - t_end) > 1e-9 * max(1.0, abs(t_end)):
        raise ValueError("t_end - t0 must be a whole number of steps")

    record = RunRecord(meta={"mode": mode, "dt": dt, "t_end": t_end, "lambda": lam})
    g0, k0 = state0.metric.g, state0.metric.k

    if mode == "kinetic_only_frozen_metric":
        if metric_path is None:
            metric_path = de_sitter_path(g0, gamma, t0)
        record.meta["metric_bounds"] = check_metric_bounds(
            metric_path, np.linspace(t0, t_end, min(steps, 50) + 1), gamma)
        system = _System(grid, lam, mode, collision, metric_path=metric_path)
        y = (state0.f.values,)
        rates = (0.0,)
    elif mode == "metric_only":
        system = _System(grid, lam, mode, collision, frozen_f=state0.f)
        y = (g0, k0)
    elif mode == "flrw":
        R0 = math.sqrt(g0[0, 0])
        if np.abs(g0 - g0[0, 0] * np.eye(3)).max() > 1e-12 * g0[0, 0] or \
                np.abs(k0 - k0[0, 0] * np.eye(3)).max() > 1e-12 * abs(k0[0, 0]):
            raise ValueError("flrw mode needs isotropic initial data")
        system = _System(grid, lam, mode, collision)
        y = (np.asarray(R0), np.asarray(k0[0, 0] / R0), state0.f.values)
    else:
        system = _System(grid, lam, mode, collision)
        y = (g0, k0, state0.f.values)

    def rates_for(y):
        if mode == "kinetic_only_frozen_metric":
            return (0.0,)
        if mode == "flrw":
            r = float(y[1]) / float(y[0])
            return (r, r, 0.0)
        r = _growth(y[0], y[1])
        return (r, r) if mode == "metric_only" else (r, r, 0.0)

    def unpack(t, y):
        if mode == "kinetic_only_frozen_metric":
            return metric_path(t), DistributionFunction(grid, y[0])
        if mode == "metric_only":
            return MetricState(t, _sym(y[0]), _sym(y[1])), state0.f
        if mode == "flrw":
            R, Rd = float(y[0]), float(y[1])
            return MetricState(t, R * R * np.eye(3), R * Rd * np.eye(3)), DistributionFunction(grid, y[2])
        return MetricState(t, _sym(y[0]), _sym(y[1])), DistributionFunction(grid, y[2])

    def record_row(t, y):
        metric, f = unpack(t, y)
        kdt = None
        if mode == "kinetic_only_frozen_metric":
            kdt = _metric_k_dot_trace(metric_path, t, dt)
        elif mode == "flrw":
            # isotropic: k_dot = (H_dot + 2 H^2) g, so the trace rate is 3 H_dot
            R, Rd = float(y[0]), float(y[1])
            _, Rdd = system.flrw_acceleration(t, R, Rd, y[2])
            kdt = 3.0 * (Rdd / R - (Rd / R) ** 2)
        row = observe(metric, f, lam, k_dot_trace=kdt, k_weight=k_weight, N=N)
        record.append(t, row, metric.g, metric.k)
        return row

    t = t0
    row = record_row(t, y)
    if snapshot_every:
        record.snapshots.append(unpack(t, y))
    for step in range(1, steps + 1):
        try:
            y = _rk4_scaled(system, t, y, dt, rates_for(y))
        except MetricError as exc:
            record.status = "metric_degenerate"
            record.meta["error"] = str(exc)
            break
        t = t0 + step * dt
        if step % output_every == 0 or step == steps:
            try:
                row = record_row(t, y)
            except MetricError as exc:
                record.status = "metric_degenerate"
                record.meta["error"] = str(exc)
                break
            if snapshot_every and step % snapshot_every == 0:
                record.snapshots.append(unpack(t, y))
            if progress is not None:
                progress(t, row)
            if not row["C_H_rel"] <= ceiling:
                record.status = "constraint_blowup"
                break
    record.meta["final_state"] = unpack(t, y)
    return record


# ---------------------------------------------------------------- Picard


@dataclass
class PicardResult:
    records: list = field(default_factory=list)
    changes_H: list = field(default_factory=list)
    changes_f: list = field(default_factory=list)
    converged: bool = False
    status: str = "running"


def _kinetic_sweep(f0: DistributionFunction, path, times, collision):
    """Frozen-metric solve on a fixed step list; returns f and Q at every step time."""
    system = _System(f0.grid, None, "kinetic_only_frozen_metric", collision, metric_path=path)
    fs = [f0.values]
    Qs = []
    for a, b in zip(times[:-1], times[1:]):
        h = b - a
        # the first stage is Q at the step start, which the Einstein sweep needs anyway
        k1 = system.collide(fs[-1], path(a))
        Qs.append(k1)
        k2 = system.collide(fs[-1] + 0.5 * h * k1, path(a + 0.5 * h))
        k3 = system.collide(fs[-1] + 0.5 * h * k2, path(a + 0.5 * h))
        k4 = system.collide(fs[-1] + h * k3, path(b))
        fs.append(fs[-1] + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4))
    Qs.append(system.collide(fs[-1], path(times[-1])))
    return fs, Qs


def _einstein_sweep(state0: CoupledState, times, fs, Qs):
    """Metric solve with matter from a stored kinetic history (Hermite in time)."""
    grid = state0.f.grid
    lam = state0.lam
    lookup = {}
    for i, t in enumerate(times):
        lookup[round(t, 12)] = fs[i]
    for i in range(len(times) - 1):
        h = times[i + 1] - times[i]
        mid = 0.5 * (fs[i] + fs[i + 1]) + h / 8.0 * (Qs[i] - Qs[i + 1])
        lookup[round(times[i] + 0.5 * h, 12)] = mid

    def rhs(t, y):
        g, k = y
        metric = MetricState(t, _sym(g), _sym(k))
        m = compute_moments(DistributionFunction(grid, lookup[round(t, 12)]), metric)
        return einstein_rhs(metric, m, lam)

    gs, ks = [state0.metric.g], [state0.metric.k]
    y = (state0.metric.g, state0.metric.k)
    for a, b in zip(times[:-1], times[1:]):
        rate = _growth(*y)
        y = _rk4_scaled(rhs, a, y, b - a, (rate, rate))
        gs.append(_sym(y[0]))
        ks.append(_sym(y[1]))
    return gs, ks


def picard_solve(initial: CoupledState, t_end: float, iterations: int, dt: float = 0.1, *,
                 collision: Optional[CollisionOperator] = None, output_every: int = 1, tol: float = 1e-6,
                 k_weight: float = 5.5, N: int = 3) -> PicardResult:
    """Alternate frozen-metric kinetic solves and matter-driven metric solves.

    The seed metric grows like de Sitter from the initial slice.  Iteration ``n`` evolves ``f_n`` in metric
    ``n`` and then metric ``n + 1`` with the sources of ``f_n``; its record
    pairs the two.  Changes are sup norms over time of ``H`` and the sup
    norm of ``f`` at ``t_end`` between successive iterations.
    """
    if iterations < 1:
        raise ValueError("iterations must be at least 1")
    if collision is None:
        collision = CollisionOperator()
    t0 = initial.t
    steps = int(round((t_end - t0) / dt))
    times = [t0 + i * dt for i in range(steps + 1)]
    # only g enters the collision term, so the seed carries k = gamma g to keep g_dot = 2k
    path = de_sitter_path(initial.metric.g, initial.gamma, t0)

    result = PicardResult()
    prev_H = prev_f = None
    grows = 0
    for it in range(iterations):
        fs, Qs = _kinetic_sweep(initial.f, path, times, collision)
        gs, ks = _einstein_sweep(initial, times, fs, Qs)
        path = HermitePath(times, gs, ks)

        record = RunRecord(meta={"mode": "picard", "iteration": it, "dt": dt})
        H = []
        for i, t in enumerate(times):
            metric = MetricState(t, gs[i], ks[i])
            H.append(kinematic_scalars(metric).H)
            if i % output_every == 0 or i == steps:
                f = DistributionFunction(initial.f.grid, fs[i])
                record.append(t, observe(metric, f, initial.lam, k_weight=k_weight, N=N), gs[i], ks[i])
        record.meta["final_state"] = (MetricState(times[-1], gs[-1], ks[-1]),
                                      DistributionFunction(initial.f.grid, fs[-1]))
        result.records.append(record)

        H = np.asarray(H)
        if prev_H is not None:
            dH = float(np.abs(H - prev_H).max())
            df = float(np.abs(fs[-1] - prev_f).max())
            change = max(dH, df)
            if result.changes_H:
                last = max(result.changes_H[-1], result.changes_f[-1])
                grows = grows + 1 if change > last else 0
            result.changes_H.append(dH)
            result.changes_f.append(df)
            if change < tol:
                result.converged = True
                result.status = "converged"
                return result
            if grows >= 2:
                result.status = "diverging"
                return result
        prev_H, prev_f = H, fs[-1]
    result.status = "converged" if result.converged else "max_iterations"
    return result
