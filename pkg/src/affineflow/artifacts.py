"""Bit-stable on-disk artifacts for flow runs.

Snapshot files: one CSV per snapshot with header ``t,y1[,y2],s,det_hess,speed``
in row-major node order.  Boundary nodes carry ``nan`` in the Hessian and
speed columns (the centered stencil does not reach them).  Numbers are
emitted with 17 significant digits so binary doubles round-trip exactly
through the decimal text.

Trajectory summary: one YAML document with the config echo, snapshot
times, event log, monitor results, and termination status.  It contains
no wall-clock data, so reruns of the same config produce byte-identical
summaries on one platform; timing lives only in the run manifest.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .errors import InvalidInputError
from .support import SupportGrid


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def snapshot_header(n: int) -> str:
    ys = ",".join(f"y{i + 1}" for i in range(n))
    return f"t,{ys},s,det_hess,speed"


def write_snapshot_csv(path, grid: SupportGrid, det: np.ndarray,
                       speed: np.ndarray) -> None:
    """Write one snapshot; ``det``/``speed`` are interior-node arrays."""
    n = grid.n
    coords = grid.node_coords().reshape(-1, n)
    svals = grid.values.reshape(-1)
    full_det = np.full(grid.values.shape, np.nan)
    full_speed = np.full(grid.values.shape, np.nan)
    interior = tuple(slice(1, -1) for _ in range(n))
    full_det[interior] = det
    full_speed[interior] = speed
    lines = [snapshot_header(n)]
    t_txt = _fmt(grid.time)
    for i in range(svals.size):
        ys = ",".join(_fmt(c) for c in coords[i])
        lines.append(f"{t_txt},{ys},{_fmt(svals[i])},"
                     f"{_fmt(full_det.flat[i])},{_fmt(full_speed.flat[i])}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_snapshot_csv(path) -> SupportGrid:
    """Rebuild a `SupportGrid` from a snapshot CSV."""
    lines = Path(path).read_text().strip().splitlines()
    if not lines:
        raise InvalidInputError(f"{path}: empty snapshot")
    header = lines[0].strip().split(",")
    if header[:1] != ["t"] or "s" not in header:
        raise InvalidInputError(f"{path}: unrecognized snapshot header")
    n = header.index("s") - 1
    if n not in (1, 2):
        raise InvalidInputError(f"{path}: unsupported column layout")
    data = np.array([[float(tok) for tok in line.split(",")]
                     for line in lines[1:]])
    t = float(data[0, 0])
    ys = data[:, 1:1 + n]
    s = data[:, 1 + n]
    axes = [np.unique(ys[:, i]) for i in range(n)]
    shape = tuple(len(a) for a in axes)
    if int(np.prod(shape)) != len(data):
        raise InvalidInputError(f"{path}: incomplete node lattice")
    bounds = tuple((float(a[0]), float(a[-1])) for a in axes)
    return SupportGrid(n=n, bounds=bounds, values=s.reshape(shape), time=t)


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def summary_document(trajectory, config_echo: dict) -> dict:
    """Deterministic plain-python summary of a trajectory."""
    doc = {
        "status": trajectory.status,
        "config": _plain(config_echo),
        "times": [float(g.time) for g in trajectory.snapshots],
        "events": _plain(trajectory.events),
        "monitors": [_plain(r.as_dict()) for r in trajectory.monitor_records],
    }
    if trajectory.error:
        doc["error"] = trajectory.error
    return doc


def write_summary(path, trajectory, config_echo: dict) -> None:
    text = yaml.safe_dump(summary_document(trajectory, config_echo),
                          sort_keys=False)
    Path(path).write_text(text)


@dataclass
class RunManifest:
    """What a run produced: config echo, artifact paths, duration, status."""

    config: dict
    snapshot_paths: list = field(default_factory=list)
    summary_path: str | None = None
    duration_seconds: float = 0.0
    status: str = "completed"
    error: str | None = None

    def as_dict(self) -> dict:
        out = {
            "status": self.status,
            "duration_seconds": float(self.duration_seconds),
            "snapshots": list(self.snapshot_paths),
            "summary": self.summary_path,
            "config": _plain(self.config),
        }
        if self.error:
            out["error"] = self.error
        return out


class Stopwatch:
    def __enter__(self):
        self._t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self._t0
        return False
