"""Support functions of convex bodies and their grid discretization.

A convex body is represented by a finite point sample (V-representation).
Its support function ``s(Y) = max_x <x, Y>`` is evaluated exactly over the
sample.  For the flow solver the support function is restricted to the
affine hyperplane slice ``Y = (y^1, ..., y^n, -1)`` and discretized on a
rectangular grid (`SupportGrid`).

Everything here is a pure function of immutable inputs; there is no shared
mutable state.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import IncompatibleGridsError, InvalidInputError

#: Node-wise tolerance for support-function ordering checks.  Well above
#: accumulated rounding on <= 1e6-node grids, far below discretization error.
TOL_ORDER = 1e-10

#: Tolerance on discrete-Hessian eigenvalues when asserting grid convexity.
#: Centered differences of smooth convex functions incur O(h^2) error.
TOL_CONVEXITY = 1e-8


@dataclass(frozen=True)
class ConvexBodySample:
    """Finite point set spanning a convex body in (n+1)-space.

    Support evaluations over the sample are exact maxima: adding a convex
    combination of existing points never changes any support value, so the
    sample may contain redundant interior points without harm.
    """

    points: np.ndarray  # shape (m, ambient_dim)
    ambient_dim: int

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[0] == 0:
            raise InvalidInputError("body needs a nonempty 2-d point array")
        if pts.shape[1] != self.ambient_dim:
            raise InvalidInputError(
                f"points have dimension {pts.shape[1]}, expected {self.ambient_dim}"
            )
        if not np.all(np.isfinite(pts)):
            raise InvalidInputError("body points must be finite")
        object.__setattr__(self, "points", pts)

    def support(self, direction) -> float:
        return support_value(self, direction)


@dataclass(frozen=True)
class DirectionSlice:
    """Hyperplane-slice convention for directions: ``Y = (y, -1)``.

    ``n`` is the spatial dimension of the slice; pure support evaluation
    allows n in {1, 2, 3}, the flow solver only n in {1, 2}.
    """

    n: int

    def __post_init__(self):
        if self.n not in (1, 2, 3):
            raise InvalidInputError(f"slice dimension must be 1, 2 or 3, got {self.n}")

    def embed(self, y) -> np.ndarray:
        """Lift slice coordinates ``y`` to ambient directions ``(y, -1)``.

        Accepts a single point of shape (n,) or a batch (..., n); the output
        gains one trailing coordinate equal to -1.
        """
        y = np.atleast_1d(np.asarray(y, dtype=float))
        if y.shape[-1] != self.n:
            raise InvalidInputError(f"expected trailing dimension {self.n}")
        return np.concatenate([y, -np.ones(y.shape[:-1] + (1,))], axis=-1)


def load_points(path) -> ConvexBodySample:
    """Load a point cloud from a plain-text file, one point per line.

    Coordinates are whitespace-separated decimals; the line count and a
    consistent dimension are validated on load.
    """
    rows = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            rows.append([float(tok) for tok in line.split()])
        except ValueError as exc:
            raise InvalidInputError(f"{path}:{lineno}: unparseable coordinate") from exc
    if not rows:
        raise InvalidInputError(f"{path}: no points found")
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise InvalidInputError(f"{path}: inconsistent coordinate count across lines")
    return ConvexBodySample(points=np.array(rows, dtype=float), ambient_dim=width)


def support_value(body: ConvexBodySample, direction) -> float:
    """Support value ``max_x <x, Y>`` of the sampled body in direction Y.

    Homogeneous of degree one in the direction; returns 0 at Y = 0.
    """
    y = np.asarray(direction, dtype=float)
    if y.shape != (body.ambient_dim,):
        raise InvalidInputError(
            f"direction has shape {y.shape}, expected ({body.ambient_dim},)"
        )
    if not np.all(np.isfinite(y)):
        raise InvalidInputError("direction must be finite")
    return float(np.max(body.points @ y))


def support_values(body: ConvexBodySample, directions) -> np.ndarray:
    """Vectorized `support_value` over an array of directions (..., dim)."""
    dirs = np.asarray(directions, dtype=float)
    return np.max(dirs @ body.points.T, axis=-1)


def membership_by_duality(support: Callable[[np.ndarray], float], x,
                          probe_directions) -> str:
    """Classify ``x`` against a body given only by its support evaluator.

    Returns ``"outside"`` if some probe direction Y has ``<x, Y> > s(Y)``,
    ``"inside"`` if every probe satisfies ``<x, Y> <= s(Y)``, and
    ``"undetermined"`` if a probe evaluation is NaN.  The inside certificate
    is approximate: it holds only up to the probe set, not over all of
    ambient space.
    """
    x = np.asarray(x, dtype=float)
    probes = [np.asarray(p, dtype=float) for p in probe_directions]
    if len(probes) == 0:
        raise InvalidInputError("probe_directions must be nonempty")
    undetermined = False
    for p in probes:
        if not np.any(p):
            raise InvalidInputError("probe directions must be nonzero")
        s = float(support(p))
        if np.isnan(s):
            undetermined = True
            continue
        if float(x @ p) > s:
            return "outside"
    return "undetermined" if undetermined else "inside"


def affine_image_support(support: Callable[[np.ndarray], float], A, b, Y) -> float:
    """Support value of the affine image ``A K + b`` in direction Y.

    Uses ``s_{AK+b}(Y) = s_K(A^T Y) + <b, Y>``.  Callers doing
    flow-equivariance checks are responsible for ``det A = +-1``.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if not np.all(np.isfinite(A)):
        raise InvalidInputError("affine map must be finite")
    return float(support(A.T @ Y) + b @ Y)


# ---------------------------------------------------------------------------
# Support grids on the hyperplane slice
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SupportGrid:
    """Discretized slice support function ``s(y, t)`` on a rectangular window.

    ``values`` has one axis per slice coordinate (shape = per-axis node
    counts, C order).  ``boundary_mode`` records how the enclosing run
    treats the window edge; it does not affect evaluations here.
    """

    n: int
    bounds: tuple  # ((lo, hi), ...) per axis
    values: np.ndarray
    time: float = 0.0
    boundary_mode: str = "fixed"

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        bounds = tuple((float(lo), float(hi)) for lo, hi in self.bounds)
        if self.n not in (1, 2):
            raise InvalidInputError(f"grid dimension must be 1 or 2, got {self.n}")
        if len(bounds) != self.n or vals.ndim != self.n:
            raise InvalidInputError("bounds/values rank must equal n")
        if any(hi <= lo for lo, hi in bounds):
            raise InvalidInputError("each axis needs lo < hi")
        if any(m < 5 for m in vals.shape):
            raise InvalidInputError("resolution must be >= 5 nodes per axis")
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "bounds", bounds)

    @property
    def resolution(self) -> tuple:
        return self.values.shape

    def axes(self):
        """Per-axis node coordinate arrays."""
        return [np.linspace(lo, hi, m)
                for (lo, hi), m in zip(self.bounds, self.values.shape)]

    def spacings(self) -> np.ndarray:
        return np.array([(hi - lo) / (m - 1)
                         for (lo, hi), m in zip(self.bounds, self.values.shape)])

    def node_coords(self) -> np.ndarray:
        """Node coordinates as an array of shape ``resolution + (n,)``."""
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack(mesh, axis=-1)

    def interior(self) -> np.ndarray:
        """View of the interior nodes."""
        sl = tuple(slice(1, -1) for _ in range(self.n))
        return self.values[sl]

    def with_values(self, values, time=None) -> "SupportGrid":
        return replace(self, values=values,
                       time=self.time if time is None else float(time))

    def same_geometry(self, other: "SupportGrid") -> bool:
        return (self.n == other.n and self.bounds == other.bounds
                and self.values.shape == other.values.shape)

    def validate(self, tol_convexity: float = TOL_CONVEXITY) -> None:
        """Check finiteness and discrete convexity of the interior Hessian."""
        if not np.all(np.isfinite(self.values)):
            raise InvalidInputError("grid values must be finite")
        lams = hessian_eigenvalues(self.values, self.spacings(), self.n)
        if lams.size and float(lams.min()) < -tol_convexity:
            raise InvalidInputError(
                f"grid is not discretely convex: min Hessian eigenvalue "
                f"{lams.min():.3e} < -{tol_convexity:g}"
            )


def grid_from_support(n, bounds, resolution, support,
                      time=0.0, boundary_mode="fixed") -> SupportGrid:
    """Fill a grid by evaluating a slice support function ``s(y)``.

    ``support`` is called with the node-coordinate array of shape
    ``resolution + (n,)`` and must return values of shape ``resolution``.
    """
    shell = SupportGrid(n=n, bounds=tuple(bounds),
                        values=np.zeros(tuple(resolution)), time=time,
                        boundary_mode=boundary_mode)
    vals = np.asarray(support(shell.node_coords()), dtype=float)
    return shell.with_values(vals)


def hessian_components(values: np.ndarray, spacings, n: int):
    """Centered-difference Hessian entries at all interior nodes.

    Returns ``(sxx,)`` for n=1 and ``(sxx, syy, sxy)`` for n=2, each shaped
    like the interior block.
    """
    s = np.asarray(values, dtype=float)
    h = np.asarray(spacings, dtype=float)
    if n == 1:
        sxx = (s[2:] - 2.0 * s[1:-1] + s[:-2]) / h[0] ** 2
        return (sxx,)
    c = s[1:-1, 1:-1]
    sxx = (s[2:, 1:-1] - 2.0 * c + s[:-2, 1:-1]) / h[0] ** 2
    syy = (s[1:-1, 2:] - 2.0 * c + s[1:-1, :-2]) / h[1] ** 2
    sxy = (s[2:, 2:] - s[2:, :-2] - s[:-2, 2:] + s[:-2, :-2]) / (4.0 * h[0] * h[1])
    return (sxx, syy, sxy)


def hessian_eigenvalues(values: np.ndarray, spacings, n: int) -> np.ndarray:
    """Eigenvalues of the interior centered-difference Hessian.

    Shape is ``interior + (n,)``; for n=2 the closed-form symmetric 2x2
    eigenvalues are used.
    """
    comps = hessian_components(values, spacings, n)
    if n == 1:
        return comps[0][..., None]
    sxx, syy, sxy = comps
    mean = 0.5 * (sxx + syy)
    rad = np.sqrt((0.5 * (sxx - syy)) ** 2 + sxy ** 2)
    return np.stack([mean - rad, mean + rad], axis=-1)


@dataclass(frozen=True)
class OrderReport:
    """Outcome of a node-wise support ordering check."""

    contained: bool
    witness: tuple | None = None   # node index of the worst violation
    violation: float = 0.0         # max(s1 - s2), positive when not contained


def containment_order(s1: SupportGrid, s2: SupportGrid,
                      tol_order: float = TOL_ORDER) -> OrderReport:
    """Decide ``body(s1) subset body(s2)`` from node-wise support ordering.

    Containment of convex bodies is equivalent to the support functions
    being ordered, so ``contained`` iff ``s1 <= s2 + tol_order`` at every
    node; otherwise the worst node is reported as a witness.
    """
    if not s1.same_geometry(s2) or s1.time != s2.time:
        raise IncompatibleGridsError("grids must share geometry and time")
    diff = s1.values - s2.values
    worst = np.unravel_index(int(np.argmax(diff)), diff.shape)
    violation = float(diff[worst])
    if violation <= tol_order:
        return OrderReport(contained=True)
    return OrderReport(contained=False, witness=worst, violation=violation)


@dataclass(frozen=True)
class ExhaustionReport:
    monotone: bool
    max_gap: float


def exhaustion_limit_check(sequence: Sequence[SupportGrid],
                           target: SupportGrid,
                           tol_order: float = TOL_ORDER) -> ExhaustionReport:
    """Check a nested approximating sequence against its limit grid.

    ``monotone`` iff each successive support grid increases node-wise (up
    to ``tol_order``), as for bodies exhausting the target from inside;
    ``max_gap`` is the worst node-wise distance of the last element from
    the target.
    """
    if len(sequence) < 2:
        raise InvalidInputError("exhaustion check needs at least two grids")
    for g in sequence:
        if not g.same_geometry(target):
            raise IncompatibleGridsError("all grids must share the target geometry")
    monotone = all(
        float(np.min(b.values - a.values)) >= -tol_order
        for a, b in zip(sequence, sequence[1:])
    )
    max_gap = float(np.max(np.abs(target.values - sequence[-1].values)))
    return ExhaustionReport(monotone=monotone, max_gap=max_gap)
