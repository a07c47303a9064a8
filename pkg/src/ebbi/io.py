"""Time-series tables, binary snapshots and JSON reports."""

from __future__ import annotations

import csv
import json
import math
import struct
from pathlib import Path

import numpy as np

from .collision import DistributionFunction, MomentumGrid
from .diagnostics import SERIES, RunRecord
from .geometry import MetricState

MAGIC = b"EBBI1"


class SnapshotError(ValueError):
    pass


def _fmt(x: float) -> str:
    # repr is the shortest string that round-trips a double exactly
    return repr(float(x))


def write_timeseries(record: RunRecord, path) -> None:
    extras = [name for name in record.scalars if name not in SERIES]
    columns = ["t", *SERIES, *extras]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for i, t in enumerate(record.times):
            writer.writerow([_fmt(t)] + [_fmt(record.scalars[name][i]) if name in record.scalars else "nan"
                                         for name in columns[1:]])


def read_timeseries(path) -> RunRecord:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][0] != "t":
        raise ValueError(f"{path}: not a time-series table")
    header = rows[0]
    record = RunRecord()
    for row in rows[1:]:
        values = {name: float(v) for name, v in zip(header[1:], row[1:])}
        record.append(float(row[0]), values)
    return record


def write_snapshot(f: DistributionFunction, state: MetricState, path) -> None:
    """Magic ``EBBI1``, a little-endian header length, a JSON header, then raw doubles."""
    header = {
        "n": f.grid.n,
        "p_max": f.grid.p_max,
        "t": state.t,
        "g": state.g.tolist(),
        "k": state.k.tolist(),
        "dtype": "<f8",
        "order": "C",
    }
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        fh.write(np.ascontiguousarray(f.values, dtype="<f8").tobytes())


def read_snapshot(path):
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:len(MAGIC)] != MAGIC:
        raise SnapshotError(f"{path}: unsupported snapshot version (expected {MAGIC.decode()})")
    off = len(MAGIC)
    (size,) = struct.unpack("<Q", data[off:off + 8])
    off += 8
    header = json.loads(data[off:off + size])
    off += size
    grid = MomentumGrid(header["n"], header["p_max"])
    values = np.frombuffer(data[off:], dtype="<f8")
    if values.size != grid.n ** 3:
        raise SnapshotError(f"{path}: truncated snapshot")
    f = DistributionFunction(grid, values.reshape(grid.shape))
    state = MetricState(header["t"], np.array(header["g"]), np.array(header["k"]))
    return f, state


def _clean(obj):
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_report(report: dict, path) -> None:
    Path(path).write_text(json.dumps(_clean(report), indent=2, sort_keys=True) + "\n")
