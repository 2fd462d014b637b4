"""Explicit time stepping for the slice support-function flow.

The evolving convex body is represented by its support function restricted
to the hyperplane slice ``Y = (y, -1)`` and discretized on a rectangular
window; the interior nodes obey

    d s / d t = -(det d^2 s)^(-1/(n+2))

with a centered-difference Hessian, explicit Euler in time, and Dirichlet
boundary data (held fixed, or supplied by a soliton closed form at the
current time for accuracy studies on truncated windows).

Stability control: the scheme's linearization has diffusion matrix
``(1/(n+2)) det^(-1/(n+2)) s^{ij}``; the step size keeps
``dt <= dt_safety / (2 sum_i M_ii / h_i^2)`` node-wise.  Where an
eigenvalue of the Hessian is clamped at the determinant floor the speed is
locally insensitive to the grid values, so clamped eigendirections
contribute no diffusion; this keeps degenerate (cone-like) initial data
steppable.  An absolute cap ``dt <= min(h)^2`` bounds the per-step
displacement in those regimes.

A single run is sequential; within one step all node updates read only the
previous state, and reductions run in fixed node order, so results are
deterministic.  Distinct runs share nothing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from . import solitons, support
from .errors import (
    AffineFlowError,
    ConfigError,
    DegenerateHessianError,
    DomainError,
    InvalidInputError,
    StabilityError,
)
from .support import ConvexBodySample, SupportGrid

_SNAP_EPS = 1e-12


@dataclass(frozen=True)
class InitialSpec:
    """Initial body: a catalog soliton, a point-cloud file, or a grid file."""

    kind: str  # "soliton" | "points" | "grid"
    soliton: solitons.SolitonSpec | None = None
    path: str | None = None

    def __post_init__(self):
        if self.kind not in ("soliton", "points", "grid"):
            raise ConfigError(f"initial: unknown kind {self.kind!r}")
        if self.kind == "soliton" and self.soliton is None:
            raise ConfigError("initial: soliton spec missing")
        if self.kind in ("points", "grid") and not self.path:
            raise ConfigError("initial: file path missing")


@dataclass(frozen=True)
class FlowConfig:
    """Everything a run needs; validated on construction."""

    n: int
    bounds: tuple
    resolution: tuple
    initial: InitialSpec
    t_end: float
    boundary_mode: str = "fixed"
    boundary_soliton: solitons.SolitonSpec | None = None
    dt_safety: float = 0.25
    snapshot_every: float | None = None
    det_floor: float = 1e-10
    monitors: tuple = ()

    def __post_init__(self):
        if self.n not in (1, 2):
            raise ConfigError(f"n: solver supports 1 or 2, got {self.n}")
        bounds = tuple((float(lo), float(hi)) for lo, hi in self.bounds)
        resolution = tuple(int(m) for m in self.resolution)
        if len(bounds) != self.n or len(resolution) != self.n:
            raise ConfigError("bounds/resolution: rank must equal n")
        if any(m < 5 for m in resolution):
            raise ConfigError("resolution: need >= 5 nodes per axis")
        if any(hi <= lo for lo, hi in bounds):
            raise ConfigError("bounds: each axis needs lo < hi")
        if self.t_end < 0:
            raise ConfigError("t_end: must be >= 0")
        if not 0 < self.dt_safety <= 1:
            raise ConfigError("dt_safety: must lie in (0, 1]")
        if self.det_floor <= 0:
            raise ConfigError("det_floor: must be positive")
        if self.snapshot_every is not None and self.snapshot_every <= 0:
            raise ConfigError("snapshot_every: must be positive")
        if self.boundary_mode not in ("fixed", "exact-soliton"):
            raise ConfigError(f"boundary: unknown mode {self.boundary_mode!r}")
        if self.boundary_mode == "exact-soliton" and self._boundary_spec() is None:
            raise ConfigError("boundary: exact-soliton needs a soliton entry")
        object.__setattr__(self, "bounds", bounds)
        object.__setattr__(self, "resolution", resolution)
        object.__setattr__(self, "monitors", tuple(dict(m) for m in self.monitors))

    def _boundary_spec(self) -> solitons.SolitonSpec | None:
        if self.boundary_soliton is not None:
            return self.boundary_soliton
        if self.initial.kind == "soliton":
            return self.initial.soliton
        return None


@dataclass
class FlowTrajectory:
    """Time-ordered snapshots plus events, monitors, and termination status."""

    snapshots: list = field(default_factory=list)
    events: list = field(default_factory=list)
    monitor_records: list = field(default_factory=list)
    status: str = "completed"  # completed | extinct | error
    error: str | None = None
    config: FlowConfig | None = None

    def times(self) -> np.ndarray:
        return np.array([g.time for g in self.snapshots])


# ---------------------------------------------------------------------------
# Node kernels
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class _Kernel:
    """Per-interior-node fields derived from the current grid values."""

    det: np.ndarray        # clamped Hessian determinant
    speed: np.ndarray      # -det^(-1/(n+2)), strictly negative
    diffusion: np.ndarray  # sum_i M_ii / h_i^2 of the local linearization
    clamped: int           # number of nodes with at least one clamped eigenvalue


def _kernel(values: np.ndarray, spacings: np.ndarray, n: int,
            det_floor: float) -> _Kernel:
    comps = support.hessian_components(values, spacings, n)
    inv_power = -1.0 / (n + 2.0)
    if n == 1:
        lam = comps[0]
        floor = det_floor
        clamped_mask = lam < floor
        lam_cl = np.maximum(lam, floor)
        det = lam_cl
        det_pow = det ** inv_power
        mu = np.where(clamped_mask, 0.0, 1.0 / lam_cl)
        diffusion = det_pow * mu / ((n + 2.0) * spacings[0] ** 2)
        return _Kernel(det=det, speed=-det_pow, diffusion=diffusion,
                       clamped=int(np.count_nonzero(clamped_mask)))
    sxx, syy, sxy = comps
    mean = 0.5 * (sxx + syy)
    dif = 0.5 * (sxx - syy)
    rad = np.sqrt(dif * dif + sxy * sxy)
    lam_lo = mean - rad
    lam_hi = mean + rad
    floor = math.sqrt(det_floor)
    cl_lo = lam_lo < floor
    cl_hi = lam_hi < floor
    l1 = np.maximum(lam_lo, floor)
    l2 = np.maximum(lam_hi, floor)
    det = l1 * l2
    det_pow = det ** inv_power
    mu_lo = np.where(cl_lo, 0.0, 1.0 / l1)
    mu_hi = np.where(cl_hi, 0.0, 1.0 / l2)
    # cos^2 of the angle between the lam_hi eigendirection and axis 1
    safe_rad = np.where(rad > 0.0, rad, 1.0)
    cos2 = np.where(rad > 0.0, 0.5 * (1.0 + dif / safe_rad), 0.5)
    inv11 = mu_hi * cos2 + mu_lo * (1.0 - cos2)
    inv22 = mu_hi * (1.0 - cos2) + mu_lo * cos2
    diffusion = det_pow * (inv11 / spacings[0] ** 2 + inv22 / spacings[1] ** 2) \
        / (n + 2.0)
    return _Kernel(det=det, speed=-det_pow, diffusion=diffusion,
                   clamped=int(np.count_nonzero(cl_lo | cl_hi)))


def hessian_fields(grid: SupportGrid, det_floor: float = 1e-10):
    """Clamped interior Hessian determinant and speed arrays of a grid."""
    k = _kernel(grid.values, grid.spacings(), grid.n, det_floor)
    return k.det, k.speed


def hessian_det(grid: SupportGrid, node, det_floor: float = 1e-10) -> float:
    """Clamped centered-difference Hessian determinant at one interior node."""
    idx = _interior_index(grid, node)
    k = _kernel(grid.values, grid.spacings(), grid.n, det_floor)
    return float(k.det[idx])


def speed(grid: SupportGrid, node, det_floor: float = 1e-10) -> float:
    """Flow speed ``-(det d^2 s)^(-1/(n+2))`` at one interior node."""
    idx = _interior_index(grid, node)
    k = _kernel(grid.values, grid.spacings(), grid.n, det_floor)
    val = float(k.speed[idx])
    if not np.isfinite(val):
        raise DegenerateHessianError(f"speed undefined at node {tuple(node)}")
    return val


def _interior_index(grid: SupportGrid, node) -> tuple:
    node = tuple(int(i) for i in np.atleast_1d(node))
    if len(node) != grid.n:
        raise IndexError(f"node index needs {grid.n} entries")
    for i, m in zip(node, grid.resolution):
        if not 1 <= i <= m - 2:
            raise IndexError(f"node {node} is not interior")
    return tuple(i - 1 for i in node)


def stable_dt(grid: SupportGrid, dt_safety: float = 0.25,
              det_floor: float = 1e-10) -> float:
    """Largest explicit step: ``dt_safety * min_nodes 1/(2 sum_i M_ii/h_i^2)``.

    For an unclamped node with uniform spacing h this is the classical
    ``dt_safety * h^2 / (2 trace M)`` with M the local diffusion matrix.
    Fully clamped (flat) regions impose no restriction; the run loop caps
    the step by ``min(h)^2`` independently.
    """
    k = _kernel(grid.values, grid.spacings(), grid.n, det_floor)
    if not np.all(np.isfinite(k.diffusion)):
        raise DegenerateHessianError("diffusion bound is not finite")
    peak = float(np.max(k.diffusion)) if k.diffusion.size else 0.0
    if peak <= 0.0:
        return math.inf
    return dt_safety / (2.0 * peak)


def step(grid: SupportGrid, dt: float, det_floor: float = 1e-10,
         boundary: Callable[[np.ndarray, float], np.ndarray] | None = None
         ) -> SupportGrid:
    """One explicit Euler step of size dt.

    Interior nodes move by ``dt * speed``; boundary nodes are held fixed or,
    when ``boundary`` is given, set from it at the new time.  ``dt`` must
    not exceed the raw stability bound (`stable_dt` at safety 1) so the
    update stays monotone in the neighbor values.
    """
    limit = stable_dt(grid, dt_safety=1.0, det_floor=det_floor)
    if dt > limit * (1.0 + 1e-9):
        raise StabilityError(f"dt={dt:g} exceeds stable step {limit:g}")
    k = _kernel(grid.values, grid.spacings(), grid.n, det_floor)
    new_vals = grid.values.copy()
    interior = tuple(slice(1, -1) for _ in range(grid.n))
    new_vals[interior] += dt * k.speed
    t_new = grid.time + dt
    if boundary is not None:
        mask = _boundary_mask(grid.resolution)
        coords = grid.node_coords()[mask]
        new_vals[mask] = boundary(coords, t_new)
    return grid.with_values(new_vals, time=t_new)


def _boundary_mask(shape: tuple) -> np.ndarray:
    mask = np.ones(shape, dtype=bool)
    mask[tuple(slice(1, -1) for _ in shape)] = False
    return mask


# ---------------------------------------------------------------------------
# Extinction measure
# ---------------------------------------------------------------------------

def _boundary_plane_fit(grid: SupportGrid):
    """Least-squares affine fit to the boundary values (pseudo-inverse)."""
    mask = _boundary_mask(grid.resolution)
    coords = grid.node_coords().reshape(-1, grid.n)
    b_flat = np.flatnonzero(mask.ravel())
    design = np.column_stack([np.ones(b_flat.size), coords[b_flat]])
    pinv = np.linalg.pinv(design)
    full = np.column_stack([np.ones(coords.shape[0]), coords])
    return mask, b_flat, pinv, full


def _sag(values: np.ndarray, b_flat, pinv, full) -> float:
    """Max gap between the boundary-fitted plane and the interior values.

    Convexity keeps the gap nonnegative; it collapses toward zero exactly
    when the grid can no longer resolve the body above a supporting plane.
    """
    coeffs = pinv @ values.ravel()[b_flat]
    plane = (full @ coeffs).reshape(values.shape)
    gap = plane - values
    return float(np.max(gap[tuple(slice(1, -1) for _ in values.shape)]))


# ---------------------------------------------------------------------------
# Run orchestration
# ---------------------------------------------------------------------------

def initial_grid(config: FlowConfig) -> SupportGrid:
    """Materialize the configured initial support grid at t = 0."""
    init = config.initial
    if init.kind == "soliton":
        return solitons.soliton_support_grid(
            init.soliton, config.bounds, config.resolution, 0.0,
            boundary_mode=config.boundary_mode)
    if init.kind == "points":
        body = support.load_points(init.path)
        if body.ambient_dim != config.n + 1:
            raise ConfigError(
                f"initial: point cloud is {body.ambient_dim}-dimensional, "
                f"expected {config.n + 1}")
        return support.grid_from_support(
            config.n, config.bounds, config.resolution,
            lambda y: support.support_values(
                body, np.concatenate([y, -np.ones(y.shape[:-1] + (1,))], axis=-1)),
            boundary_mode=config.boundary_mode)
    from . import artifacts  # file parsing lives with the other IO
    grid = artifacts.read_snapshot_csv(init.path)
    if grid.n != config.n or grid.resolution != tuple(config.resolution):
        raise ConfigError("initial: grid file does not match n/resolution")
    return replace(grid, time=0.0, boundary_mode=config.boundary_mode)


def _boundary_fn(config: FlowConfig):
    if config.boundary_mode != "exact-soliton":
        return None
    spec = config._boundary_spec()
    return lambda coords, t: solitons.slice_support(spec, coords, t)


def _boundary_closure(spec: solitons.SolitonSpec, coords: np.ndarray):
    """Precompiled boundary evaluator t -> values for fixed slice points.

    Every catalog entry separates into (node profile) x (function of t), so
    the per-step boundary update reduces to one scalar time factor.
    """
    Y = np.concatenate([coords, -np.ones((len(coords), 1))], axis=1)
    mapped = Y if spec.map is None else Y @ np.asarray(spec.map, dtype=float)
    off = 0.0 if spec.offset is None else Y @ np.asarray(spec.offset, dtype=float)
    kind, n = spec.kind, spec.n
    if kind in ("sphere", "ellipsoid"):
        norms = np.sqrt(np.sum(mapped * mapped, axis=1))
        return lambda t: spec.radius(t) * norms + off
    if kind == "paraboloid":
        u = mapped[:, :-1]
        w = mapped[:, -1]
        if np.any(w >= 0.0):
            raise DomainError("paraboloid boundary data unbounded on the window")
        base = np.sum(u * u, axis=1) / (-2.0 * w) + off
        return lambda t: base + t * w
    if np.any(mapped > 0.0):
        raise DomainError("orthant boundary data unbounded on the window")
    pref = -(n + 1.0) * (solitons.calabi_constant(n)
                         * np.prod(np.abs(mapped), axis=1)) ** (1.0 / (n + 1.0))
    q = (n + 2.0) / (2.0 * (n + 1.0))
    return lambda t: pref * t ** q + off


def _snapshot_times(t_end: float, every: float | None) -> list:
    if t_end == 0.0:
        return []
    if every is None:
        return [t_end]
    count = int(math.floor(t_end / every + _SNAP_EPS))
    times = [k * every for k in range(1, count + 1)]
    if not times or times[-1] < t_end * (1.0 - _SNAP_EPS):
        times.append(t_end)
    else:
        times[-1] = t_end  # absorb rounding when t_end is a multiple
    return times


def run(config: FlowConfig) -> FlowTrajectory:
    """Advance the configured flow to t_end (or extinction/error).

    Snapshots are recorded at t = 0, at every multiple of
    ``snapshot_every``, and at ``t_end``.  Convexity clamps are aggregated
    into one event per snapshot interval.  Deterministic for a fixed
    config.
    """
    traj = FlowTrajectory(config=config)
    grid = initial_grid(config)
    grid.validate()
    traj.snapshots.append(grid)
    _advance(traj, grid, config)
    if config.monitors and traj.status in ("completed", "extinct"):
        from . import monitors as monitors_mod
        for spec in config.monitors:
            traj.monitor_records.append(
                monitors_mod.evaluate_named(dict(spec), traj))
    return traj


def _advance(traj: FlowTrajectory, grid: SupportGrid, config: FlowConfig) -> None:
    snap_times = _snapshot_times(config.t_end, config.snapshot_every)
    spacings = grid.spacings()
    dt_cap = float(np.min(spacings)) ** 2
    mask, b_flat, pinv, full = _boundary_plane_fit(grid)
    boundary = None
    if config.boundary_mode == "exact-soliton":
        boundary = _boundary_closure(config._boundary_spec(),
                                     grid.node_coords()[mask])
    extinct_below = 10.0 * dt_cap
    interior = tuple(slice(1, -1) for _ in range(config.n))
    clamp_bucket = {"steps": 0, "nodes": 0, "t_start": grid.time}

    def flush_clamps(t_now):
        if clamp_bucket["steps"]:
            traj.events.append({
                "kind": "clamp", "t_start": clamp_bucket["t_start"],
                "t_end": t_now, "steps": clamp_bucket["steps"],
                "nodes": clamp_bucket["nodes"],
            })
        clamp_bucket.update(steps=0, nodes=0, t_start=t_now)

    vals = grid.values.copy()
    flat = vals.ravel()
    t = grid.time
    since_sag = 0
    try:
        for target in snap_times:
            while t < target - _SNAP_EPS * max(1.0, target):
                k = _kernel(vals, spacings, config.n, config.det_floor)
                peak = float(np.max(k.diffusion)) if k.diffusion.size else 0.0
                if not peak >= 0.0:  # NaN values propagate into the peak
                    raise DegenerateHessianError("non-finite speed field")
                dt_stable = (config.dt_safety / (2.0 * peak)
                             if peak > 0.0 else math.inf)
                dt = min(dt_stable, dt_cap, target - t)
                if dt <= 0.0:
                    raise StabilityError("step size underflow")
                t = target if target - (t + dt) < _SNAP_EPS else t + dt
                vals[interior] += dt * k.speed
                if boundary is not None:
                    flat[b_flat] = boundary(t)
                if k.clamped:
                    clamp_bucket["steps"] += 1
                    clamp_bucket["nodes"] = max(clamp_bucket["nodes"], k.clamped)
                since_sag += 1
                if since_sag >= 4:
                    since_sag = 0
                    if _sag(vals, b_flat, pinv, full) < extinct_below:
                        flush_clamps(t)
                        traj.snapshots.append(
                            grid.with_values(vals.copy(), time=t))
                        traj.status = "extinct"
                        return
            flush_clamps(t)
            traj.snapshots.append(grid.with_values(vals.copy(), time=t))
        traj.status = "completed"
    except AffineFlowError as exc:
        flush_clamps(t)
        traj.status = "error"
        traj.error = f"{type(exc).__name__}: {exc}"


def run_pair(config1: FlowConfig, config2: FlowConfig):
    """Advance two flows in lockstep with a shared step sequence.

    Both configs must share n, window, resolution, cadence, and safety
    parameters.  Each step uses the smaller of the two stable steps, so the
    shared update stays monotone for both grids; node-wise support ordering
    of the initial data is then preserved to rounding.
    """
    for attr in ("n", "bounds", "resolution", "t_end", "dt_safety",
                 "snapshot_every", "det_floor"):
        if getattr(config1, attr) != getattr(config2, attr):
            raise InvalidInputError(f"run_pair configs differ in {attr}")
    t1 = FlowTrajectory(config=config1)
    t2 = FlowTrajectory(config=config2)
    g1, g2 = initial_grid(config1), initial_grid(config2)
    g1.validate()
    g2.validate()
    t1.snapshots.append(g1)
    t2.snapshots.append(g2)
    snap_times = _snapshot_times(config1.t_end, config1.snapshot_every)
    spacings = g1.spacings()
    dt_cap = float(np.min(spacings)) ** 2
    n = config1.n
    interior = tuple(slice(1, -1) for _ in range(n))
    mask = _boundary_mask(g1.resolution)
    b_flat = np.flatnonzero(mask.ravel())
    coords = g1.node_coords()[mask]
    closures = []
    for cfg in (config1, config2):
        closures.append(_boundary_closure(cfg._boundary_spec(), coords)
                        if cfg.boundary_mode == "exact-soliton" else None)
    vals1, vals2 = g1.values.copy(), g2.values.copy()
    t = g1.time
    for target in snap_times:
        while t < target - _SNAP_EPS * max(1.0, target):
            k1 = _kernel(vals1, spacings, n, config1.det_floor)
            k2 = _kernel(vals2, spacings, n, config2.det_floor)
            peak = max(float(np.max(k1.diffusion)), float(np.max(k2.diffusion)))
            dt_stable = config1.dt_safety / (2.0 * peak) if peak > 0 else math.inf
            dt = min(dt_stable, dt_cap, target - t)
            t = target if target - (t + dt) < _SNAP_EPS else t + dt
            for vals, k, b in ((vals1, k1, closures[0]), (vals2, k2, closures[1])):
                vals[interior] += dt * k.speed
                if b is not None:
                    vals.ravel()[b_flat] = b(t)
        t1.snapshots.append(g1.with_values(vals1.copy(), time=t))
        t2.snapshots.append(g2.with_values(vals2.copy(), time=t))
    t1.status = t2.status = "completed"
    return t1, t2


# ---------------------------------------------------------------------------
# Hypersurface recovery and scaling law
# ---------------------------------------------------------------------------

def recover_points(grid: SupportGrid) -> ConvexBodySample:
    """Points of the evolving hypersurface from the support gradient.

    The total derivative of the support function is the embedding: with
    ``Y = (y, -1)``, the ambient point over an interior node is
    ``(grad s, y . grad s - s)``, accurate to O(h^2) from centered
    differences.
    """
    s = grid.values
    h = grid.spacings()
    n = grid.n
    if n == 1:
        ds = (s[2:] - s[:-2]) / (2.0 * h[0])
        y = grid.axes()[0][1:-1]
        pts = np.column_stack([ds, y * ds - s[1:-1]])
    else:
        sx = (s[2:, 1:-1] - s[:-2, 1:-1]) / (2.0 * h[0])
        sy = (s[1:-1, 2:] - s[1:-1, :-2]) / (2.0 * h[1])
        coords = grid.node_coords()[1:-1, 1:-1]
        height = coords[..., 0] * sx + coords[..., 1] * sy - s[1:-1, 1:-1]
        pts = np.stack([sx, sy, height], axis=-1).reshape(-1, 3)
    return ConvexBodySample(points=pts, ambient_dim=n + 1)


@dataclass(frozen=True)
class ScalingReport:
    """Node-wise support discrepancy between a scaled flow and its rescaling."""

    lam: float
    exponent: float          # (2n+2)/(n+2), the time-rescaling power
    times: tuple             # snapshot times of the scaled run
    max_discrepancy: float


def scaling_law_check(config: FlowConfig, lam: float) -> ScalingReport:
    """Verify ``flow_t(lam K) = lam flow_{t lam^(-(2n+2)/(n+2))}(K)`` numerically.

    Runs both sides on the same window and reports the worst node-wise
    support difference at matched times.  The initial body must be closed
    under scaling (sphere/ellipsoid by parameter change, the orthant cone
    exactly).
    """
    if lam <= 0:
        raise InvalidInputError("scale factor must be positive")
    if config.initial.kind != "soliton":
        raise DomainError("scaling check needs a catalog initial body")
    beta = (2.0 * config.n + 2.0) / (config.n + 2.0)
    spec = config.initial.soliton
    if spec.kind == "sphere":
        scaled = replace(spec, params={"r0": lam * spec.params["r0"]})
    elif spec.kind == "ellipsoid":
        scaled = replace(spec, params={"t0": spec.params["t0"] * lam ** beta})
    elif spec.kind == "calabi":
        scaled = spec  # cones are invariant under homothety
    else:
        raise DomainError("initial body is not closed under scaling")

    cfg_scaled = replace(config, initial=replace(config.initial, soliton=scaled))
    factor = lam ** (-beta)
    cfg_base = replace(
        config, t_end=config.t_end * factor,
        snapshot_every=(None if config.snapshot_every is None
                        else config.snapshot_every * factor))
    traj_scaled = run(cfg_scaled)
    traj_base = run(cfg_base)
    if traj_scaled.status == "error" or traj_base.status == "error":
        raise DomainError(
            f"scaling runs failed: {traj_scaled.error or traj_base.error}")
    worst = 0.0
    times = []
    for ga, gb in zip(traj_scaled.snapshots, traj_base.snapshots):
        worst = max(worst, float(np.max(np.abs(ga.values - lam * gb.values))))
        times.append(ga.time)
    return ScalingReport(lam=lam, exponent=beta, times=tuple(times),
                         max_discrepancy=worst)
