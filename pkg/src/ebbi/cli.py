"""Command line entry point: ``ebbi run | report | check-kinematics | equilibrium-test``."""

from __future__ import annotations

import argparse
import json
import logging
import platform
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .collision import CollisionOperator, DistributionFunction, build_grid, eval_Q, sphere_quadrature
from .config import ConfigError, SimulationConfig, load_config
from .diagnostics import asymptotic_report
from .evolution import InitialDataError, run, solve_initial_data
from .geometry import MetricState
from .io import read_timeseries, write_report, write_snapshot, write_timeseries
from .kinematics import property_suite

EXIT_OK = 0
EXIT_BLOWUP = 2
EXIT_CONFIG = 3
EXIT_VERDICT = 4

log = logging.getLogger("ebbi")


def initial_profile(cfg: SimulationConfig) -> DistributionFunction:
    """Radial profile in comoving momentum, peak value ``amplitude``."""
    grid = build_grid(cfg["grid"]["n"], cfg["grid"]["p_max"])
    prof = cfg["initial_data"]["f0_profile"]
    r2 = np.einsum("...a,...a->...", grid.nodes, grid.nodes)
    w2 = prof["width"] ** 2
    if prof["kind"] == "gaussian":
        shape = np.exp(-r2 / w2)
    else:
        x = np.minimum(r2 / w2, 1.0)
        inside = x < 1.0
        shape = np.zeros_like(r2)
        shape[inside] = np.exp(1.0 - 1.0 / (1.0 - x[inside]))
    return DistributionFunction(grid, prof["amplitude"] * shape)


def collision_from_config(cfg: SimulationConfig) -> CollisionOperator:
    c = cfg["collision"]
    return CollisionOperator(
        sphere=sphere_quadrature(cfg["sphere"]["n_polar"], cfg["sphere"]["n_azimuth"]),
        interpolation=c["interpolation"],
        conservative=cfg["flags"]["conservative_Q"],
        symmetry=c["symmetry"],
        refine=c["refine"],
    )


def provenance(cfg: SimulationConfig) -> dict:
    return {
        "config": cfg.raw,
        "version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
    }


def cmd_run(args) -> int:
    try:
        cfg = load_config(args.config)
        state = solve_initial_data(cfg.g0, cfg.sigma0, initial_profile(cfg), cfg.lam,
                                   allow_large_H0=cfg["flags"]["allow_large_H0"])
    except (ConfigError, InitialDataError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    def progress(t, row):
        log.info("t=%.4f H=%.12f C_H_rel=%.3e", t, row["H"], row["C_H_rel"])

    record = run(state, cfg["t_end"], cfg["dt"], cfg["output_every"], cfg["mode"],
                 collision=collision_from_config(cfg), k_weight=cfg["norm"]["k_weight"], N=cfg["norm"]["N"],
                 ceiling=cfg["flags"]["constraint_ceiling"], progress=progress)
    write_timeseries(record, out / "timeseries.csv")
    metric, f = record.meta["final_state"]
    write_snapshot(f, metric, out / "final.ebbi")
    report = {"status": record.status, "provenance": provenance(cfg)}
    if record.t[-1] - record.t[0] >= 5.0 / cfg.gamma:
        report.update(asymptotic_report(record, cfg.gamma))
    write_report(report, out / "report.json")
    print(f"{record.status}: {len(record)} rows written to {out}")
    return EXIT_BLOWUP if record.status == "constraint_blowup" else EXIT_OK


def cmd_report(args) -> int:
    record = read_timeseries(args.timeseries)
    report = asymptotic_report(record, args.gamma)
    report["provenance"] = {"timeseries": str(args.timeseries), "version": __version__}
    if args.out:
        write_report(report, args.out)
    for claim in report["claims"]:
        fitted = "-" if claim["fitted"] is None else f"{claim['fitted']:.4f}"
        print(f"{claim['name']:<16} claimed {claim['claimed_exponent']:.3f} fitted {fitted:>8}  {claim['verdict']}")
    if args.strict and any(c["verdict"] == "fail" for c in report["claims"]):
        return EXIT_VERDICT
    return EXIT_OK


def cmd_check_kinematics(args) -> int:
    result = property_suite(args.samples, args.seed)
    print(json.dumps(result, indent=2))
    worst_ok = all(v <= 1e-10 for v in result["worst"].values())
    no_violations = not any(result["violations"].values())
    return EXIT_OK if worst_ok and no_violations else EXIT_VERDICT


def cmd_equilibrium(args) -> int:
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    grid = build_grid(cfg["grid"]["n"], cfg["grid"]["p_max"])
    state = MetricState(0.0, np.eye(3), np.eye(3))
    p0 = np.sqrt(1.0 + np.einsum("...a,...a->...", grid.nodes, grid.nodes))
    f = DistributionFunction(grid, np.exp(-p0))
    op = collision_from_config(cfg)
    parts = eval_Q(f, state, sphere=op.sphere, interpolation=op.interpolation, symmetry=op.symmetry,
                   refine=op.refine, return_parts=True)
    ratio = float(np.abs(parts.Q).max() / np.abs(parts.loss).max())
    print(json.dumps({"n": grid.n, "p_max": grid.p_max, "ratio": ratio,
                      "escape_fraction": parts.escape_fraction}, indent=2))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ebbi", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="integrate a configuration")
    p.add_argument("config")
    p.add_argument("--out", default="ebbi-out")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("report", help="fit late-time rates of a time-series table")
    p.add_argument("timeseries")
    p.add_argument("--gamma", type=float, required=True)
    p.add_argument("--strict", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("check-kinematics", help="randomised collision-map property suite")
    p.add_argument("--samples", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_check_kinematics)

    p = sub.add_parser("equilibrium-test", help="collision residual of exp(-p0) at the configured grid")
    p.add_argument("config")
    p.set_defaults(func=cmd_equilibrium)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
