"""Run records, the weighted Sobolev-type norm and late-time rate fitting."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .collision import DistributionFunction
from .geometry import MetricState, metric_algebra

SERIES = ("H", "sigma2", "F", "rho", "S_trace", "Shat_max", "N0", "C_H_rel", "min_f", "norm_kN",
          "detg", "s1", "s2", "s3", "d")


class DiagnosticsError(ValueError):
    pass


@dataclass
class RunRecord:
    """Time series of one run plus the metric history needed for limits.

    ``g_hist`` and ``k_hist`` hold the metric at every output time, which is
    what the monotone-energy and limit checks read back.
    """

    times: list = field(default_factory=list)
    scalars: dict = field(default_factory=lambda: {name: [] for name in SERIES})
    g_hist: list = field(default_factory=list)
    k_hist: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)
    fitted: dict = field(default_factory=dict)
    limits: dict = field(default_factory=dict)
    status: str = "completed"
    meta: dict = field(default_factory=dict)

    def append(self, t, values: dict, g=None, k=None):
        if self.times and not t > self.times[-1]:
            raise DiagnosticsError("times must be strictly increasing")
        self.times.append(float(t))
        for name in set(self.scalars) | set(values):
            series = self.scalars.setdefault(name, [math.nan] * (len(self.times) - 1))
            series.append(float(values.get(name, math.nan)))
        if g is not None:
            self.g_hist.append(np.array(g, dtype=float))
            self.k_hist.append(np.array(k, dtype=float))

    def series(self, name) -> np.ndarray:
        return np.asarray(self.scalars[name], dtype=float)

    @property
    def t(self) -> np.ndarray:
        return np.asarray(self.times, dtype=float)

    def __len__(self):
        return len(self.times)


# 4th-order first-derivative stencils: centred inside, one-sided at the two edge nodes
_CENTRAL = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0
_EDGE0 = np.array([-25.0, 48.0, -36.0, 16.0, -3.0]) / 12.0
_EDGE1 = np.array([-3.0, -10.0, 18.0, -6.0, 1.0]) / 12.0


def derivative(values: np.ndarray, axis: int, h: float) -> np.ndarray:
    """Fourth-order finite difference along ``axis``; needs at least five nodes."""
    a = np.moveaxis(np.asarray(values, dtype=float), axis, 0)
    n = a.shape[0]
    if n < 5:
        raise DiagnosticsError("derivative stencil needs five nodes")
    out = np.empty_like(a)
    out[2:-2] = (_CENTRAL[0] * a[:-4] + _CENTRAL[1] * a[1:-3] + _CENTRAL[3] * a[3:-1] + _CENTRAL[4] * a[4:])
    out[0] = np.tensordot(_EDGE0, a[:5], axes=1)
    out[1] = np.tensordot(_EDGE1, a[:5], axes=1)
    out[-1] = -np.tensordot(_EDGE0, a[::-1][:5], axes=1)
    out[-2] = -np.tensordot(_EDGE1, a[::-1][:5], axes=1)
    return np.moveaxis(out / h, 0, axis)


def weighted_norm(f: DistributionFunction, state: MetricState, k_weight: float = 5.5, N: int = 3) -> float:
    """Discrete ``||f||_{k,N}`` with derivatives up to order ``N``.

    The sum runs over ordered index sequences, so a mixed derivative such as
    ``d1 d2`` counts once as ``(1, 2)`` and once as ``(2, 1)``; distinct
    partial derivatives are computed once and weighted by their multiplicity.
    """
    if int(N) != N or N < 0:
        raise DiagnosticsError("N must be a non-negative integer")
    if N > 3:
        raise DiagnosticsError("derivative order above 3 is not supported by the stencil")
    grid = f.grid
    P = grid.nodes
    g_inv = metric_algebra(state).g_inv
    p0 = np.sqrt(1.0 + np.einsum("...a,ab,...b->...", P, g_inv, P))
    bracket2 = 1.0 + np.einsum("...a,...a->...", P, P)
    weight = bracket2 ** k_weight * np.exp(p0)

    h = grid.spacing
    total = 0.0
    cache = {(): f.values}
    for order in range(N + 1):
        for combo in itertools.combinations_with_replacement(range(3), order):
            if combo not in cache:
                cache[combo] = derivative(cache[combo[:-1]], combo[-1], h)
            counts = [combo.count(a) for a in range(3)]
            mult = math.factorial(order) // (math.factorial(counts[0]) * math.factorial(counts[1])
                                             * math.factorial(counts[2]))
            total += mult * float(np.sum(weight * cache[combo] ** 2))
    return math.sqrt(total * grid.cell_volume)


@dataclass(frozen=True)
class RateFit:
    lam: float
    residual: float
    window: tuple
    points: int


def fit_decay_rate(times, series, window=None) -> RateFit:
    """Least-squares slope of ``log(series)``; ``lam > 0`` means decay like ``exp(-lam t)``."""
    t = np.asarray(times, dtype=float)
    y = np.asarray(series, dtype=float)
    if window is None:
        window = (t[0] + 0.5 * (t[-1] - t[0]), t[-1])
    sel = (t >= window[0]) & (t <= window[1])
    if sel.sum() < 2:
        raise DiagnosticsError("fit window holds fewer than two points")
    ts, ys = t[sel], y[sel]
    if not np.all(ys > 0.0) or not np.all(np.isfinite(ys)):
        raise DiagnosticsError("cannot fit log of non-positive values")
    ly = np.log(ys)
    A = np.stack([np.ones_like(ts), ts], axis=1)
    coef, *_ = np.linalg.lstsq(A, ly, rcond=None)
    resid = ly - A @ coef
    return RateFit(float(-coef[1]), float(np.sqrt(np.mean(resid ** 2))), (float(window[0]), float(window[1])),
                   int(sel.sum()))


# name, claimed exponent in units of gamma, two-sided band (or None), roundoff floor (relative)
CLAIMS = (
    ("H_minus_gamma", 2.0, None, 1e-12),
    ("sigma2", 2.0, None, 1e-28),
    ("F", 2.0, None, 1e-28),
    ("rho", 3.0, (2.7, 3.3), 1e-300),
    ("Shat_max", 5.0, None, 1e-300),
    ("Shat_over_rho", 2.0, None, 1e-300),
    ("s_minus_third", 1.0, None, 1e-12),
    ("d_plus_one", 2.0, None, 1e-12),
)


def _claim_series(record: RunRecord, name: str, gamma: float) -> Optional[np.ndarray]:
    def get(key):
        if key not in record.scalars:
            return None
        a = record.series(key)
        return None if np.all(np.isnan(a)) else a

    if name == "H_minus_gamma":
        H = get("H")
        return None if H is None else np.abs(H - gamma)
    if name == "Shat_over_rho":
        S, rho = get("Shat_max"), get("rho")
        if S is None or rho is None or np.any(rho <= 0):
            return None
        return S / rho
    if name == "s_minus_third":
        s = [get(k) for k in ("s1", "s2", "s3")]
        if any(x is None for x in s):
            return None
        return np.max(np.abs(np.stack(s) - 1.0 / 3.0), axis=0)
    if name == "d_plus_one":
        d = get("d")
        return None if d is None else np.abs(d + 1.0)
    return get(name)


def metric_limit_increments(times, g_hist, gamma: float, windows: int = 10) -> np.ndarray:
    """Norm of the change of ``exp(-2 gamma t) g`` across equal slices of the run."""
    t = np.asarray(times, dtype=float)
    G = np.exp(-2.0 * gamma * t)[:, None, None] * np.asarray(g_hist)
    edges = np.linspace(t[0], t[-1], windows + 1)
    idx = [int(np.argmin(np.abs(t - e))) for e in edges]
    return np.array([np.abs(G[b] - G[a]).max() for a, b in zip(idx[:-1], idx[1:])])


def asymptotic_report(record: RunRecord, gamma: float, window=None) -> dict:
    """Fit every claimed late-time rate and collect end values.

    A claim passes when the fitted exponent is at least 0.9 times the
    claimed one; the energy density must also stay inside its two-sided
    band.  Points below a roundoff floor are dropped from a fit, and a
    series that sits entirely below it passes without a fitted value.
    """
    t = record.t
    if len(t) < 2:
        raise DiagnosticsError("record too short to report")
    if t[-1] - t[0] < 5.0 / gamma:
        raise DiagnosticsError("record must cover at least 5/gamma")
    if window is None:
        window = (t[0] + 0.5 * (t[-1] - t[0]), t[-1])
    claims = []
    for name, claimed, band, floor in CLAIMS:
        entry = {"name": name, "claimed_exponent": claimed * gamma, "fitted": None, "residual": None}
        y = _claim_series(record, name, gamma)
        if y is None or np.all(y == 0.0) and name in ("rho", "Shat_max", "Shat_over_rho"):
            entry["verdict"] = "not evaluated"
            claims.append(entry)
            continue
        scale = {"H_minus_gamma": gamma, "sigma2": gamma ** 2, "F": 1.0}.get(name, 1.0)
        sel = (t >= window[0]) & (t <= window[1])
        keep = sel & (y > floor * scale) & np.isfinite(y)
        if keep.sum() < 3:
            if np.all(np.abs(y[sel]) <= floor * scale):
                entry["verdict"] = "pass"
                entry["note"] = "series at roundoff floor"
            else:
                entry["verdict"] = "not evaluated"
            claims.append(entry)
            continue
        fit = fit_decay_rate(t[keep], y[keep], (t[keep][0], t[keep][-1]))
        entry["fitted"] = fit.lam
        entry["residual"] = fit.residual
        entry["window"] = list(fit.window)
        ok = fit.lam >= 0.9 * claimed * gamma
        if band is not None:
            ok = band[0] * gamma <= fit.lam <= band[1] * gamma
            entry["band"] = [band[0] * gamma, band[1] * gamma]
        entry["verdict"] = "pass" if ok else "fail"
        claims.append(entry)
        record.fitted[name] = fit

    end = {}
    last = {name: record.series(name)[-1] for name in record.scalars}
    if not math.isnan(last.get("s1", math.nan)):
        end["s_minus_third"] = float(max(abs(last[k] - 1.0 / 3.0) for k in ("s1", "s2", "s3")))
    if not math.isnan(last.get("d", math.nan)):
        end["d_plus_one"] = float(abs(last["d"] + 1.0))
    if not math.isnan(last.get("F", math.nan)):
        end["F"] = float(last["F"])
    if "H" in last:
        end["H_minus_gamma"] = float(abs(last["H"] - gamma))
    if "rho" in record.scalars and "N0" in record.scalars:
        rho, N0 = record.series("rho"), record.series("N0")
        if np.any(rho > 0):
            end["rho_ge_N0"] = bool(np.all(rho >= N0))
    if len(record.g_hist) == len(t):
        inc = metric_limit_increments(t, record.g_hist, gamma)
        end["metric_limit_increments"] = inc.tolist()
        G = np.exp(-2.0 * gamma * t[-1]) * record.g_hist[-1]
        Ginv = np.exp(2.0 * gamma * t[-1]) * np.linalg.inv(record.g_hist[-1])
        record.limits = {"G": G, "G_inv": Ginv}
        end["G"] = G.tolist()
        end["G_inv"] = Ginv.tolist()
    return {"claims": claims, "end_values": end}
