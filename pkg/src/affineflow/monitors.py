"""Runtime monitors for the quantitative estimates along flow trajectories.

Each monitor turns one of the flow's a-priori estimates into a checkable
report over a `FlowTrajectory`:

* `cubic_decay_monitor`   -- sup |C|^2 against the n(n+2)/(2t) decay bound;
* `andrews_speed_monitor` -- the normalized speed q = -d_t s/(s - r/2)
  against an enclosing envelope a + b t^(-n/(2n+2));
* `gh_quantity`           -- the Pogorelov-style quantity
  w = |u| u_bb exp((u_b)^2/2) on a bowl-shaped sublevel region;
* `containment_monitor`   -- node-wise support ordering of two trajectories.

The estimates' constants are existential, so the speed and Hessian
monitors verify the functional form (envelope shape, boundedness) rather
than absolute constants; the decay monitor has an explicit bound and a
slack for discretization.  Monitors are pure over immutable trajectories.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from . import flow
from .errors import AffineFlowError, DomainError, InvalidInputError
from .frame import affine_frame_at
from .oracles import PolynomialGraph
from .support import SupportGrid, TOL_ORDER, hessian_components

#: Multiplicative slack on the |C|^2 decay bound, absorbing patch-fitting
#: and finite-difference error.
DECAY_SLACK = 0.5

#: Allowed deviation of the fitted envelope's log-log slope from the
#: predicted exponent -n/(2n+2).
EXPONENT_TOL = 0.15


@dataclass(frozen=True)
class MonitorReport:
    """Outcome of one monitor over a trajectory."""

    name: str
    times: tuple
    samples: tuple            # monitored quantity per sampled time
    bounds: tuple             # bound value per sampled time (may be empty)
    worst_ratio: float
    passed: bool
    fitted: dict = field(default_factory=dict)
    note: str = ""
    errors: int = 0           # per-node extraction failures, excluded

    def as_dict(self) -> dict:
        out = {"name": self.name, "pass": bool(self.passed),
               "worst_ratio": float(self.worst_ratio)}
        if self.fitted:
            out["fitted"] = {k: float(v) for k, v in self.fitted.items()}
        if self.note:
            out["note"] = self.note
        if self.errors:
            out["errors"] = int(self.errors)
        return out


# ---------------------------------------------------------------------------
# Local patch fitting on recovered hypersurface points
# ---------------------------------------------------------------------------

def _rotation_to_frame(tangents, normal) -> np.ndarray:
    rows = [t / np.linalg.norm(t) for t in tangents]
    rows.append(normal / np.linalg.norm(normal))
    return np.array(rows)


def fit_local_patch(points: np.ndarray, center: int | tuple,
                    half_window: int, n: int, degree: int = 4) -> PolynomialGraph:
    """Polynomial graph fitted to recovered points around one node.

    The window is translated to the center point and rotated so the local
    tangent is horizontal (a volume-preserving motion, so affine invariants
    of the fit match the hypersurface's); the height is then fitted by
    least squares with total degree <= ``degree``.
    """
    if n == 1:
        j = int(center)
        lo, hi = j - half_window, j + half_window + 1
        if lo < 0 or hi > len(points):
            raise DomainError("fit window leaves the recovered point set")
        win = points[lo:hi] - points[j]
        tangent = win[-1] - win[0]
        normal = np.array([-tangent[1], tangent[0]])
        R = _rotation_to_frame([tangent], normal)
        local = win @ R.T
        coeffs = np.polynomial.polynomial.polyfit(local[:, 0], local[:, 1], degree)
        return PolynomialGraph(1, {(k,): c for k, c in enumerate(coeffs)})
    i, j = (int(c) for c in center)
    shape = points.shape[:2]
    if not (half_window <= i < shape[0] - half_window
            and half_window <= j < shape[1] - half_window):
        raise DomainError("fit window leaves the recovered point set")
    win = (points[i - half_window:i + half_window + 1,
                  j - half_window:j + half_window + 1]
           - points[i, j])
    u1 = points[i + 1, j] - points[i - 1, j]
    u2 = points[i, j + 1] - points[i, j - 1]
    normal = np.cross(u1, u2)
    t1 = u1 / np.linalg.norm(u1)
    t2 = np.cross(normal / np.linalg.norm(normal), t1)
    R = _rotation_to_frame([t1, t2], np.cross(t1, t2))
    local = win.reshape(-1, 3) @ R.T
    exps = [(a, b) for a in range(degree + 1) for b in range(degree + 1 - a)]
    design = np.column_stack([local[:, 0] ** a * local[:, 1] ** b
                              for a, b in exps])
    sol, *_ = np.linalg.lstsq(design, local[:, 2], rcond=None)
    return PolynomialGraph(2, dict(zip(exps, sol)))


def cubic_norm_samples(grid: SupportGrid, sample_count: int = 7,
                       half_window: int = 8) -> tuple:
    """|C|^2 at sampled interior nodes of one snapshot via local patch fits.

    Returns ``(values, failures)``; nodes whose extraction fails are
    excluded and counted.
    """
    pts = flow.recover_points(grid).points
    n = grid.n
    vals, failures = [], 0
    if n == 1:
        m = len(pts)
        idx = np.unique(np.linspace(half_window, m - 1 - half_window,
                                    sample_count).astype(int))
        centers = [int(k) for k in idx]
    else:
        shape = tuple(r - 2 for r in grid.resolution)
        pts = pts.reshape(shape + (3,))
        side = max(2, int(round(np.sqrt(sample_count))))
        ii = np.unique(np.linspace(half_window, shape[0] - 1 - half_window,
                                   side).astype(int))
        jj = np.unique(np.linspace(half_window, shape[1] - 1 - half_window,
                                   side).astype(int))
        centers = [(int(a), int(b)) for a in ii for b in jj]
    for c in centers:
        try:
            patch = fit_local_patch(pts, c, half_window, n)
            fr = affine_frame_at(patch, np.zeros(n))
            vals.append(fr.C_norm_sq)
        except (AffineFlowError, np.linalg.LinAlgError):
            failures += 1
    return vals, failures


def cubic_decay_monitor(trajectory: flow.FlowTrajectory,
                        sample_count: int = 7, half_window: int = 8,
                        slack: float = DECAY_SLACK,
                        t_min: float | None = None) -> MonitorReport:
    """Check ``sup |C|^2 <= (1 + slack) n(n+2)/(2t)`` along a trajectory.

    |C|^2 is measured by recovering hypersurface points from each snapshot,
    fitting local polynomial patches, and extracting the frame at the fit
    centers.  Snapshots at t <= 0 (or below ``t_min``) are skipped: the
    bound is vacuous at the initial instant.
    """
    n = trajectory.snapshots[0].n
    times, samples, bounds = [], [], []
    failures = 0
    floor = 0.0 if t_min is None else t_min
    for grid in trajectory.snapshots:
        if grid.time <= floor:
            continue
        vals, bad = cubic_norm_samples(grid, sample_count, half_window)
        failures += bad
        if not vals:
            continue
        times.append(grid.time)
        samples.append(max(vals))
        bounds.append(n * (n + 2.0) / (2.0 * grid.time))
    if not times:
        return MonitorReport(name="cubic-decay", times=(), samples=(),
                             bounds=(), worst_ratio=np.inf, passed=False,
                             note="no usable snapshots", errors=failures)
    ratios = np.array(samples) / ((1.0 + slack) * np.array(bounds))
    worst = float(np.max(ratios))
    return MonitorReport(name="cubic-decay", times=tuple(times),
                         samples=tuple(samples), bounds=tuple(bounds),
                         worst_ratio=worst, passed=worst <= 1.0,
                         errors=failures)


def decay_bound(n: int, t: float) -> float:
    """The cubic-form decay bound ``n(n+2)/(2t)``."""
    if t <= 0:
        raise DomainError("decay bound needs t > 0")
    return n * (n + 2.0) / (2.0 * t)


# ---------------------------------------------------------------------------
# Speed envelope
# ---------------------------------------------------------------------------

def _min_enclosing_line(X: np.ndarray, q: np.ndarray) -> tuple:
    """Smallest (a, b), by a + b, with a + b X_i >= q_i and a, b >= 0."""
    tol = 1e-12 * max(1.0, float(np.max(np.abs(q))))
    best = None
    candidates = [(float(np.max(q)), 0.0), (0.0, float(np.max(q / X)))]
    for i, j in combinations(range(len(X)), 2):
        if X[i] == X[j]:
            continue
        b = (q[i] - q[j]) / (X[i] - X[j])
        a = q[i] - b * X[i]
        candidates.append((a, b))
    for a, b in candidates:
        if a < -tol or b < -tol:
            continue
        if np.all(a + b * X >= q - tol):
            if best is None or a + b < best[0] + best[1]:
                best = (max(a, 0.0), max(b, 0.0))
    return best


def andrews_speed_monitor(trajectory: flow.FlowTrajectory, r: float,
                          exponent_tol: float = EXPONENT_TOL) -> MonitorReport:
    """Envelope check of the normalized contraction speed.

    Per node and snapshot the monitor forms ``q = -d_t s / (s - r/2)`` with
    the support rescaled to unit directions (``s(y)/sqrt(1+|y|^2)``), takes
    the per-time max, and fits the smallest envelope ``a + b t^(-n/(2n+2))``
    enclosing all samples.  It passes when the envelope's log-log slope over
    the sampled times is within ``exponent_tol`` of the predicted exponent.

    The underlying estimate needs ``s >= r`` on the sampled directions for
    the whole window; on a truncated slice that hypothesis is only
    checkable on the sampled directions, so a violation makes the monitor
    report itself inapplicable rather than failed.
    """
    snaps = trajectory.snapshots
    if len(snaps) < 3:
        raise InvalidInputError("speed monitor needs at least three snapshots")
    n = snaps[0].n
    beta = n / (2.0 * n + 2.0)
    norm = np.sqrt(1.0 + np.sum(snaps[0].node_coords() ** 2, axis=-1))
    sph = [g.values / norm for g in snaps]
    times = [g.time for g in snaps]
    low = min(float(np.min(v)) for v in sph)
    if low < r / 2.0:
        raise DomainError(f"support dropped to {low:g} < r/2 = {r / 2:g}")
    if low < r:
        return MonitorReport(
            name="andrews-speed", times=tuple(times), samples=(), bounds=(),
            worst_ratio=np.inf, passed=False,
            note=f"inapplicable: min sampled support {low:g} < r = {r:g}")

    interior = tuple(slice(1, -1) for _ in range(n))
    q_max, q_times = [], []
    for k in range(len(snaps)):
        if k == 0:
            dsdt = (sph[1] - sph[0]) / (times[1] - times[0])
        elif k == len(snaps) - 1:
            dsdt = (sph[-1] - sph[-2]) / (times[-1] - times[-2])
        else:
            dsdt = (sph[k + 1] - sph[k - 1]) / (times[k + 1] - times[k - 1])
        q = (-dsdt / (sph[k] - r / 2.0))[interior]
        q_max.append(float(np.max(q)))
        q_times.append(times[k])
    fit_mask = np.array(q_times) > 0
    tt = np.array(q_times)[fit_mask]
    qq = np.array(q_max)[fit_mask]
    if len(tt) < 2:
        raise InvalidInputError("need at least two positive-time samples")
    X = tt ** (-beta)
    a, b = _min_enclosing_line(X, qq)
    env = a + b * X
    slope = float(np.polyfit(np.log(tt), np.log(env), 1)[0])
    passed = abs(slope - (-beta)) <= exponent_tol
    worst = float(np.max(qq / env))
    return MonitorReport(
        name="andrews-speed", times=tuple(q_times), samples=tuple(q_max),
        bounds=tuple(a + b * np.array(q_times, dtype=float) ** (-beta)
                     if np.all(np.array(q_times) > 0) else ()),
        worst_ratio=worst, passed=passed,
        fitted={"a": a, "b": b, "slope": slope, "exponent": -beta})


# ---------------------------------------------------------------------------
# Pogorelov-style quantity
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GhReport:
    """Field and maximum of w = |u| u_bb exp((u_b)^2 / 2) over the bowl."""

    w: np.ndarray             # NaN outside the bowl {u <= 0}
    max_value: float
    max_node: tuple
    max_inside: bool          # attained strictly inside (u < 0), not on u = 0


def gh_quantity(u_grid: SupportGrid, beta) -> GhReport:
    """Evaluate the Hessian-bound quantity on a bowl-shaped region.

    ``u`` must vanish on the parabolic boundary of its bowl and be <= 0
    inside; nodes with u > 0 lie outside the bowl and are masked.  The
    quantity must be formed from u (support minus its supporting cap), not
    from the raw support function: it is then invariant under adding any
    time-independent affine function before re-basing.
    """
    beta = np.asarray(beta, dtype=float)
    if beta.shape != (u_grid.n,) or not np.isclose(np.linalg.norm(beta), 1.0):
        raise InvalidInputError("beta must be a unit direction of the slice")
    u = u_grid.values
    h = u_grid.spacings()
    n = u_grid.n
    interior = tuple(slice(1, -1) for _ in range(n))
    if np.all(u[interior] > 0):
        raise DomainError("u > 0 throughout the interior: no bowl")
    if n == 1:
        du = (u[2:] - u[:-2]) / (2 * h[0])
        grad_b = beta[0] * du
        hess_b = beta[0] ** 2 * (u[2:] - 2 * u[1:-1] + u[:-2]) / h[0] ** 2
    else:
        ux = (u[2:, 1:-1] - u[:-2, 1:-1]) / (2 * h[0])
        uy = (u[1:-1, 2:] - u[1:-1, :-2]) / (2 * h[1])
        sxx, syy, sxy = hessian_components(u, h, n)
        grad_b = beta[0] * ux + beta[1] * uy
        hess_b = (beta[0] ** 2 * sxx + 2 * beta[0] * beta[1] * sxy
                  + beta[1] ** 2 * syy)
    core = u[interior]
    w = np.abs(core) * hess_b * np.exp(0.5 * grad_b ** 2)
    w = np.where(core <= 0.0, w, np.nan)
    flat = np.nanargmax(w) if np.any(np.isfinite(w)) else None
    if flat is None:
        raise DomainError("bowl contains no interior nodes")
    node = np.unravel_index(int(flat), w.shape)
    max_value = float(w[node])
    grid_node = tuple(i + 1 for i in node)
    return GhReport(w=w, max_value=max_value, max_node=grid_node,
                    max_inside=bool(core[node] < 0.0))


def gh_monitor(trajectory: flow.FlowTrajectory, beta,
               vertex: tuple | None = None,
               blowup_factor: float = 10.0) -> MonitorReport:
    """Track the bowl maximum of the Hessian quantity along a trajectory.

    ``u(y, t) = s(y, t) - T(y)`` with T the tangent plane of the initial
    support at the bowl vertex (default: the window center), so u = 0 on
    the parabolic boundary of the growing bowl.  The bound constants of the
    underlying estimate are implicit, so the report asserts no blow-up:
    ``max_t w <= blowup_factor * w(first sampled time)``.
    """
    snaps = trajectory.snapshots
    first = snaps[0]
    n = first.n
    if vertex is None:
        vertex = tuple(m // 2 for m in first.resolution)
    h = first.spacings()
    s0 = first.values
    grad = np.empty(n)
    for ax in range(n):
        up = tuple(v + (1 if a == ax else 0) for a, v in enumerate(vertex))
        dn = tuple(v - (1 if a == ax else 0) for a, v in enumerate(vertex))
        grad[ax] = (s0[up] - s0[dn]) / (2 * h[ax])
    coords = first.node_coords()
    y0 = coords[vertex]
    cap = s0[vertex] + (coords - y0) @ grad

    times, samples = [], []
    for g in snaps[1:]:
        try:
            rep = gh_quantity(g.with_values(g.values - cap), beta)
        except DomainError:
            continue
        times.append(g.time)
        samples.append(rep.max_value)
    if not samples:
        return MonitorReport(name="gh", times=(), samples=(), bounds=(),
                             worst_ratio=np.inf, passed=False,
                             note="bowl never opened")
    ref = blowup_factor * samples[0]
    worst = float(max(samples) / ref) if ref > 0 else np.inf
    return MonitorReport(name="gh", times=tuple(times), samples=tuple(samples),
                         bounds=tuple(ref for _ in samples),
                         worst_ratio=worst, passed=worst <= 1.0,
                         fitted={"first": samples[0], "peak": max(samples)})


# ---------------------------------------------------------------------------
# Containment
# ---------------------------------------------------------------------------

def containment_monitor(traj1: flow.FlowTrajectory, traj2: flow.FlowTrajectory,
                        tol_order: float = TOL_ORDER) -> MonitorReport:
    """Assert node-wise ``s1 <= s2 + tol`` at every matched snapshot.

    This is the discrete form of the geometric maximum principle: bodies
    that start nested stay nested under the flow.
    """
    if len(traj1.snapshots) != len(traj2.snapshots):
        raise InvalidInputError("trajectories have different snapshot counts")
    times, worst = [], []
    for g1, g2 in zip(traj1.snapshots, traj2.snapshots):
        if not g1.same_geometry(g2) or abs(g1.time - g2.time) > 1e-12:
            raise InvalidInputError("snapshots are not on matched grids/times")
        times.append(g1.time)
        worst.append(float(np.max(g1.values - g2.values)))
    peak = max(worst)
    return MonitorReport(name="containment", times=tuple(times),
                         samples=tuple(worst),
                         bounds=tuple(tol_order for _ in worst),
                         worst_ratio=peak / tol_order if peak > 0 else 0.0,
                         passed=peak <= tol_order)


# ---------------------------------------------------------------------------
# Config-driven dispatch
# ---------------------------------------------------------------------------

def evaluate_named(spec: dict, trajectory: flow.FlowTrajectory) -> MonitorReport:
    """Run a monitor described by a config entry ``{"name": ..., params...}``."""
    spec = dict(spec)
    name = spec.pop("name", None)
    if name == "cubic-decay":
        return cubic_decay_monitor(trajectory, **spec)
    if name == "andrews-speed":
        return andrews_speed_monitor(trajectory, **spec)
    if name == "gh":
        beta = spec.pop("beta", [1.0] + [0.0] * (trajectory.snapshots[0].n - 1))
        return gh_monitor(trajectory, beta, **spec)
    raise InvalidInputError(f"unknown monitor {name!r}")
