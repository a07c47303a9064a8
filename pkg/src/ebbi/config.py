"""Strict YAML run configuration with a default table.

Unknown keys are rejected with their full path so that a typo never runs
silently with a default.
"""

from __future__ import annotations

import copy
import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from .evolution import MODES

DEFAULTS = {
    "lambda": None,
    "grid": {"n": 17, "p_max": 6.0},
    "sphere": {"n_polar": 8, "n_azimuth": 16},
    "dt": 1e-3,
    "t_end": 8.0,
    "output_every": 1,
    "mode": "coupled",
    "initial_data": {
        "g0": [1.0, 0.0, 0.0, 1.0, 0.0, 1.0],
        "sigma0": [0.0, 0.0, 0.0, 0.0, 0.0],
        "f0_profile": {"kind": "bump", "amplitude": 0.0, "width": 3.0},
        "seed": 0,
    },
    "norm": {"k_weight": 5.5, "N": 3},
    "collision": {"interpolation": "weighted", "refine": 2, "symmetry": "auto"},
    "flags": {"conservative_Q": False, "allow_large_H0": False, "constraint_ceiling": 1e-2},
}


class ConfigError(ValueError):
    pass


def _merge(base, override, path=""):
    out = copy.deepcopy(base)
    for key, value in override.items():
        where = f"{path}.{key}" if path else str(key)
        if key not in base:
            raise ConfigError(f"unknown key: {where}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"{where}: expected a mapping")
            out[key] = _merge(base[key], value, where)
        else:
            out[key] = value
    return out


def _number(cfg, path, lo=None, hi=None, integer=False, strict_lo=False):
    node = cfg
    for part in path.split("."):
        node = node[part]
    if isinstance(node, bool) or not isinstance(node, (int, float)):
        raise ConfigError(f"{path}: expected a number, got {node!r}")
    if integer and int(node) != node:
        raise ConfigError(f"{path}: expected an integer")
    if not math.isfinite(node):
        raise ConfigError(f"{path}: must be finite")
    if lo is not None and (node < lo or (strict_lo and node == lo)):
        raise ConfigError(f"{path}: must be {'>' if strict_lo else '>='} {lo}")
    if hi is not None and node > hi:
        raise ConfigError(f"{path}: must be <= {hi}")
    return int(node) if integer else float(node)


def symmetric_from_six(values) -> np.ndarray:
    xx, xy, xz, yy, yz, zz = (float(v) for v in values)
    return np.array([[xx, xy, xz], [xy, yy, yz], [xz, yz, zz]])


def shear_from_config(values, g0) -> np.ndarray:
    """Five entries ``(xx, xy, xz, yy, yz)`` with ``zz`` fixed by ``g^{ab} sigma_ab = 0``.

    Six entries are also accepted; a nonzero trace is then projected out
    later, with a warning, by the initial-data solver.
    """
    if len(values) == 6:
        return symmetric_from_six(values)
    if len(values) != 5:
        raise ConfigError("initial_data.sigma0: expected 5 (or 6) numbers")
    g_inv = np.linalg.inv(g0)
    s = symmetric_from_six(list(values) + [0.0])
    rest = float(np.einsum("ab,ab->", g_inv, s))
    s[2, 2] = -rest / g_inv[2, 2]
    return s


@dataclass(frozen=True)
class SimulationConfig:
    raw: dict

    def __getitem__(self, key):
        return self.raw[key]

    @property
    def lam(self) -> float:
        return float(self.raw["lambda"])

    @property
    def gamma(self) -> float:
        return math.sqrt(self.lam / 3.0)

    @property
    def g0(self) -> np.ndarray:
        return symmetric_from_six(self.raw["initial_data"]["g0"])

    @property
    def sigma0(self) -> np.ndarray:
        return shear_from_config(self.raw["initial_data"]["sigma0"], self.g0)


def validate(tree: dict) -> SimulationConfig:
    if not isinstance(tree, dict):
        raise ConfigError("configuration must be a mapping")
    if "lambda" not in tree:
        raise ConfigError("missing required key: lambda")
    cfg = _merge(DEFAULTS, tree)
    _number(cfg, "lambda", lo=0.0, strict_lo=True)
    n = _number(cfg, "grid.n", lo=9, integer=True)
    if n % 2 == 0:
        raise ConfigError("grid.n: n must be odd")
    _number(cfg, "grid.p_max", lo=0.0, strict_lo=True)
    _number(cfg, "sphere.n_polar", lo=1, integer=True)
    _number(cfg, "sphere.n_azimuth", lo=1, integer=True)
    _number(cfg, "dt", lo=0.0, strict_lo=True)
    _number(cfg, "t_end", lo=0.0, strict_lo=True)
    _number(cfg, "output_every", lo=1, integer=True)
    if cfg["mode"] not in MODES:
        raise ConfigError(f"mode: must be one of {', '.join(MODES)}")
    init = cfg["initial_data"]
    for key, size in (("g0", 6),):
        if not isinstance(init[key], (list, tuple)) or len(init[key]) != size:
            raise ConfigError(f"initial_data.{key}: expected {size} numbers")
    if not isinstance(init["sigma0"], (list, tuple)) or len(init["sigma0"]) not in (5, 6):
        raise ConfigError("initial_data.sigma0: expected 5 (or 6) numbers")
    for key in ("g0", "sigma0"):
        for i, v in enumerate(init[key]):
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
                raise ConfigError(f"initial_data.{key}[{i}]: expected a finite number")
    g0 = symmetric_from_six(init["g0"])
    if np.linalg.eigvalsh(g0).min() <= 0:
        raise ConfigError("initial_data.g0: metric not Riemannian")
    prof = init["f0_profile"]
    if prof["kind"] not in ("gaussian", "bump"):
        raise ConfigError("initial_data.f0_profile.kind: must be gaussian or bump")
    _number(cfg, "initial_data.f0_profile.amplitude", lo=0.0)
    _number(cfg, "initial_data.f0_profile.width", lo=0.0, strict_lo=True)
    _number(cfg, "initial_data.seed", lo=0, integer=True)
    _number(cfg, "norm.k_weight", lo=0.0, strict_lo=True)
    _number(cfg, "norm.N", lo=0, hi=3, integer=True)
    if cfg["collision"]["interpolation"] not in ("weighted", "trilinear"):
        raise ConfigError("collision.interpolation: must be weighted or trilinear")
    _number(cfg, "collision.refine", lo=1, hi=8, integer=True)
    if cfg["collision"]["symmetry"] not in ("auto", "none"):
        raise ConfigError("collision.symmetry: must be auto or none")
    for key in ("conservative_Q", "allow_large_H0"):
        if not isinstance(cfg["flags"][key], bool):
            raise ConfigError(f"flags.{key}: expected true or false")
    _number(cfg, "flags.constraint_ceiling", lo=0.0, strict_lo=True)
    steps = cfg["t_end"] / cfg["dt"]
    if abs(steps - round(steps)) > 1e-9 * max(steps, 1.0):
        raise ConfigError("t_end: must be a whole number of steps dt")
    if len(init["sigma0"]) == 6:
        tr = float(np.einsum("ab,ab->", np.linalg.inv(g0), symmetric_from_six(init["sigma0"])))
        if abs(tr) > 1e-12:
            warnings.warn("initial_data.sigma0 has nonzero trace; it will be projected", stacklevel=2)
    return SimulationConfig(cfg)


def load_config(path) -> SimulationConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    try:
        tree = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML: {exc}") from exc
    return validate(tree if tree is not None else {})
