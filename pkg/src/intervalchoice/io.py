"""Plain-text file formats: histograms, solutions, trajectories, reports.

Floats are written with ``repr`` (17 significant digits), so every CSV
round-trips bit for bit.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Optional

import numpy as np

from intervalchoice.evolution import Trajectory
from intervalchoice.grid import GridFunction
from intervalchoice.intervals import Histogram

HISTOGRAM_HEADER = ["bin_left", "bin_right", "density"]
SOLUTION_HEADER = ["x", "F", "Fprime"]
CONTRACTION_HEADER = ["t", "d_candy", "bound", "ratio"]


class FormatError(ValueError):
    pass


def _fmt(v: float) -> str:
    return repr(float(v))


def _jsonable(obj):
    """Recursively convert numpy scalars/arrays and non-finite floats."""
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def write_json(path, data: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(data), indent=2, sort_keys=True) + "\n")
    return path


def read_json(path) -> dict:
    return json.loads(Path(path).read_text())


def _read_rows(path, header):
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or [h.strip() for h in rows[0]] != header:
        raise FormatError(f"{path}: expected header {','.join(header)}")
    try:
        return np.array([[float(v) for v in r] for r in rows[1:] if r], dtype=float).reshape(-1, len(header))
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc


def _write_rows(path, header, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])
    return path


# -- histograms ----------------------------------------------------------------

def write_histogram(path, hist: Histogram) -> Path:
    """One row per bin plus a final overflow row with ``bin_right=inf``.

    The overflow row carries the overflow mass, not a density.
    """
    e = hist.edges
    rows = [(a, b, d) for a, b, d in zip(e[:-1], e[1:], hist.density)]
    rows.append((e[-1], math.inf, hist.overflow_mass))
    return _write_rows(path, HISTOGRAM_HEADER, rows)


def read_histogram(path) -> tuple[np.ndarray, np.ndarray, float]:
    """Edges, densities and overflow mass."""
    a = _read_rows(path, HISTOGRAM_HEADER)
    if len(a) < 2 or not np.isinf(a[-1, 1]):
        raise FormatError(f"{path}: missing overflow row")
    edges = np.append(a[:-1, 0], a[-2, 1])
    return edges, a[:-1, 2], float(a[-1, 2])


# -- solutions -------------------------------------------------------------------

def write_solution(path, F: GridFunction, sidecar: Optional[dict] = None) -> Path:
    """Solution CSV ``x,F,Fprime``; ``sidecar`` goes to ``<path>.json``."""
    path = Path(path)
    d = F.derivative_values()
    _write_rows(path, SOLUTION_HEADER, zip(F.xs, F.values, d))
    if sidecar is not None:
        write_json(sidecar_path(path), sidecar)
    return path


def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def read_solution(path, tail_value: float = 1.0) -> GridFunction:
    """Load a solution CSV; the stored derivative column is kept."""
    a = _read_rows(path, SOLUTION_HEADER)
    if len(a) < 3:
        raise FormatError(f"{path}: need at least three rows")
    return GridFunction(a[:, 0], a[:, 1], tail_value=tail_value, derivative=a[:, 2])


# -- trajectories ------------------------------------------------------------------

def write_trajectory(directory, traj: Trajectory, prefix: str = "frame") -> Path:
    """One solution CSV per frame and ``<prefix>_index.csv`` listing times."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    index = []
    for k, (t, f) in enumerate(zip(traj.times, traj.frames)):
        name = f"{prefix}_{k:04d}.csv"
        _write_rows(directory / name, SOLUTION_HEADER, zip(f.xs, f.values, f.derivative_values()))
        index.append((t, name))
    idx = directory / f"{prefix}_index.csv"
    with idx.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "file"])
        for t, name in index:
            w.writerow([_fmt(t), name])
    return idx


def read_trajectory(index_path) -> Trajectory:
    index_path = Path(index_path)
    with index_path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["t", "file"]:
        raise FormatError(f"{index_path}: expected header t,file")
    times = [float(r[0]) for r in rows[1:]]
    frames = []
    for r in rows[1:]:
        a = _read_rows(index_path.parent / r[1], SOLUTION_HEADER)
        frames.append(GridFunction(a[:, 0], a[:, 1], tail_value=1.0))
    return Trajectory(np.array(times), frames)


def write_contraction(path, rows) -> Path:
    return _write_rows(path, CONTRACTION_HEADER, rows)


def read_contraction(path) -> np.ndarray:
    return _read_rows(path, CONTRACTION_HEADER)
