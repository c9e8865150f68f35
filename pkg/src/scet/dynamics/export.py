"""CSV export of density snapshots and simulated paths, one row per cell or step."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from ..errors import ShapeError
from .fokker_planck import DensityGrid

_AXES = ("x", "y")


def write_density_csv(path, snapshots: list[DensityGrid]) -> Path:
    """Columns ``time, x[, y], density``; snapshots in order, cells in C order."""
    path = Path(path)
    if not snapshots:
        raise ShapeError("no snapshots to write")
    ndim = snapshots[0].ndim
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["time", *_AXES[:ndim], "density"])
        for snap in snapshots:
            if snap.ndim != ndim:
                raise ShapeError("snapshots mix grid dimensions")
            pts = snap.points().reshape(-1, ndim)
            for p, v in zip(pts, snap.density.ravel()):
                w.writerow([repr(float(snap.time)), *(repr(float(c)) for c in p), repr(float(v))])
    return path


def write_trajectory_csv(path, states, times) -> Path:
    """Columns ``record, time, path, x[, y]`` for :func:`euler_maruyama` output.

    ``states`` is ``(records, dim)`` or ``(records, n_paths, dim)``; ``times``
    has one entry per record.
    """
    path = Path(path)
    x = np.asarray(states, dtype=np.float64)
    if x.ndim == 2:
        x = x[:, None, :]
    times = np.asarray(times, dtype=np.float64)
    if x.ndim != 3 or x.shape[2] not in (1, 2) or times.shape != (x.shape[0],):
        raise ShapeError(f"states {np.shape(states)} do not match times {times.shape}")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["record", "time", "path", *_AXES[:x.shape[2]]])
        for r in range(x.shape[0]):
            for n in range(x.shape[1]):
                w.writerow([r, repr(float(times[r])), n, *(repr(float(c)) for c in x[r, n])])
    return path
