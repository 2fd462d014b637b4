"""Closed-form self-similar solutions of the support-function flow.

The catalog covers the shrinking round sphere, the normalized shrinking
ellipsoid, the translating paraboloid, and the expanding first-orthant cone
solution.  Each entry provides its slice support function ``s(y, t)`` (and
where it exists, the full ambient support function), so entries can serve
as exact solutions, initial data, boundary data, and barriers.

All functions are pure and trivially reentrant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, ExtinctionError, InvalidInputError
from .support import SupportGrid, grid_from_support

#: Config-file vocabulary for catalog entries.
KINDS = ("sphere", "ellipsoid", "paraboloid", "calabi")


def sphere_radius(r0: float, n: int, t: float) -> float:
    """Radius at time t of a shrinking sphere with initial radius r0.

    ``r(t) = (r0^((2n+2)/(n+2)) - ((2n+2)/(n+2)) t)^((n+2)/(2n+2))``.
    """
    if r0 <= 0:
        raise InvalidInputError("r0 must be positive")
    p = (2.0 * n + 2.0) / (n + 2.0)
    core = r0 ** p - p * t
    if core <= 0.0:
        raise ExtinctionError(
            f"t={t:g} is at or past the extinction time {extinction_time(r0, n):g}"
        )
    return core ** (1.0 / p)


def extinction_time(r0: float, n: int) -> float:
    """Extinction time ``((n+2)/(2n+2)) r0^((2n+2)/(n+2))`` of a sphere."""
    if r0 <= 0:
        raise InvalidInputError("r0 must be positive")
    p = (2.0 * n + 2.0) / (n + 2.0)
    return r0 ** p / p


def ellipsoid_support(y, t: float, n: int) -> np.ndarray | float:
    """Slice support of the normalized shrinking-ellipsoid soliton.

    ``s = (-(2n+2)/(n+2) t)^((n+2)/(2n+2)) sqrt(1+|y|^2)`` for t < 0, with
    extinction at t = 0.  Arbitrary ellipsoids are affine images of this
    gauge (compose with `affine_image_support`).
    """
    if t >= 0:
        raise DomainError("normalized ellipsoid soliton needs t < 0")
    y = np.asarray(y, dtype=float)
    p = (2.0 * n + 2.0) / (n + 2.0)
    amp = (-p * t) ** (1.0 / p)
    out = amp * np.sqrt(1.0 + np.sum(y * y, axis=-1))
    return float(out) if out.ndim == 0 else out


def paraboloid_support(y, t: float) -> np.ndarray | float:
    """Slice support ``|y|^2/2 - t`` of the translating paraboloid.

    Exact translator: the slice Hessian has determinant one identically,
    so the flow speed is -1 for all y and t.
    """
    y = np.asarray(y, dtype=float)
    out = 0.5 * np.sum(y * y, axis=-1) - t
    return float(out) if out.ndim == 0 else out


def calabi_constant(n: int) -> float:
    """Dimensional constant ``c_n = (n+1)^(1/2) (2/(n+2))^((n+2)/2)``."""
    return math.sqrt(n + 1.0) * (2.0 / (n + 2.0)) ** ((n + 2.0) / 2.0)


def calabi_level(t: float, n: int) -> float:
    """Coordinate-product level ``c_n t^((n+2)/2)`` of the expanding orthant.

    The evolving hypersurface is ``{prod_i x^i = calabi_level(t, n), x >= 0}``;
    at t = 0 it is the boundary of the first orthant itself.
    """
    if t < 0:
        raise DomainError("orthant solution needs t >= 0")
    return calabi_constant(n) * t ** ((n + 2.0) / 2.0)


def calabi_support(Y, t: float, n: int) -> np.ndarray | float:
    """Ambient support function of the expanding-orthant solution.

    ``+inf`` where any coordinate of Y is positive, otherwise
    ``-(n+1) (calabi_level(t, n) prod_i |y^i|)^(1/(n+1))``.  The level
    exponent is validated against direct maximization of <x, Y> over the
    level set in the test suite.
    """
    level = calabi_level(t, n)
    Y = np.asarray(Y, dtype=float)
    if Y.shape[-1] != n + 1:
        raise InvalidInputError(f"direction needs {n + 1} coordinates")
    prod = np.prod(np.abs(Y), axis=-1)
    vals = -(n + 1.0) * (level * prod) ** (1.0 / (n + 1.0))
    out = np.where(np.any(Y > 0.0, axis=-1), np.inf, vals)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class SolitonSpec:
    """Named catalog entry with parameters.

    kind      one of ``sphere`` (param r0), ``ellipsoid`` (param t0 < 0,
              the time offset to extinction), ``paraboloid``, ``calabi``.
    n         slice dimension.
    map/offset  optional ambient affine image (A, b) applied to the body;
              A is (n+1)x(n+1), used for shears and translated copies.
    """

    kind: str
    n: int
    params: dict = field(default_factory=dict)
    map: tuple | None = None
    offset: tuple | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidInputError(f"unknown soliton kind {self.kind!r}")
        if self.kind == "sphere":
            if self.params.get("r0", 0.0) <= 0:
                raise InvalidInputError("sphere soliton needs r0 > 0")
        elif self.kind == "ellipsoid":
            if self.params.get("t0", 0.0) >= 0:
                raise InvalidInputError("ellipsoid soliton needs t0 < 0")
        elif self.params:
            raise InvalidInputError(f"{self.kind} soliton takes no parameters")
        if self.map is not None:
            A = np.asarray(self.map, dtype=float)
            if A.shape != (self.n + 1, self.n + 1) or not np.all(np.isfinite(A)):
                raise InvalidInputError("map must be a finite (n+1)x(n+1) matrix")
            object.__setattr__(self, "map", tuple(map(tuple, A.tolist())))
        if self.offset is not None:
            b = np.asarray(self.offset, dtype=float)
            if b.shape != (self.n + 1,):
                raise InvalidInputError("offset must be an (n+1)-vector")
            object.__setattr__(self, "offset", tuple(b.tolist()))

    def radius(self, t: float) -> float:
        """Current sphere/ellipsoid radius in the normalized gauge."""
        if self.kind == "sphere":
            return sphere_radius(self.params["r0"], self.n, t)
        if self.kind == "ellipsoid":
            tt = self.params["t0"] + t
            if tt >= 0:
                raise ExtinctionError("ellipsoid soliton extinct")
            p = (2.0 * self.n + 2.0) / (self.n + 2.0)
            return (-p * tt) ** (1.0 / p)
        raise DomainError(f"{self.kind} soliton has no radius")


def ambient_support(spec: SolitonSpec, Y, t: float) -> np.ndarray:
    """Ambient support values of the catalog body at time t, batched over Y.

    Directions with unbounded support evaluate to +inf; grid builders
    reject those.  The optional affine image of ``spec`` is applied via
    ``s_{AK+b}(Y) = s_K(A^T Y) + <b, Y>``.
    """
    Y = np.asarray(Y, dtype=float)
    mapped = Y if spec.map is None else Y @ np.asarray(spec.map, dtype=float)
    out = _ambient_base(spec, mapped, t)
    if spec.offset is not None:
        out = out + Y @ np.asarray(spec.offset, dtype=float)
    return out


def _ambient_base(spec: SolitonSpec, Y: np.ndarray, t: float) -> np.ndarray:
    n = spec.n
    if spec.kind in ("sphere", "ellipsoid"):
        return spec.radius(t) * np.sqrt(np.sum(Y * Y, axis=-1))
    if spec.kind == "paraboloid":
        u = Y[..., :-1]
        w = Y[..., -1]
        usq = np.sum(u * u, axis=-1)
        with np.errstate(divide="ignore", invalid="ignore"):
            vals = usq / (-2.0 * w) + t * w
        out = np.where(w < 0.0, vals, np.where(usq == 0.0, 0.0, np.inf))
        return out
    if spec.kind == "calabi":
        return np.asarray(calabi_support(Y, t, n))
    raise InvalidInputError(f"unknown soliton kind {spec.kind!r}")


def slice_support(spec: SolitonSpec, y, t: float) -> np.ndarray:
    """Slice support ``s(y, t)`` of the catalog body, batched over y (..., n)."""
    y = np.asarray(y, dtype=float)
    Y = np.concatenate([y, -np.ones(y.shape[:-1] + (1,))], axis=-1)
    return ambient_support(spec, Y, t)


def soliton_support_grid(spec: SolitonSpec, bounds, resolution, t: float,
                         boundary_mode: str = "fixed") -> SupportGrid:
    """Fill a `SupportGrid` from a catalog entry's closed form at time t."""
    _validate_time(spec, t)
    if spec.kind == "calabi" and spec.map is None:
        if any(hi >= 0.0 for _, hi in bounds):
            raise DomainError(
                "orthant grids need a window strictly inside y < 0 per axis"
            )
    grid = grid_from_support(spec.n, bounds, resolution,
                             lambda y: slice_support(spec, y, t),
                             time=t, boundary_mode=boundary_mode)
    if not np.all(np.isfinite(grid.values)):
        raise DomainError("support is unbounded on part of the requested window")
    return grid


def _validate_time(spec: SolitonSpec, t: float) -> None:
    if spec.kind == "sphere":
        sphere_radius(spec.params["r0"], spec.n, t)
    elif spec.kind == "ellipsoid":
        spec.radius(t)
    elif spec.kind == "calabi" and t < 0:
        raise DomainError("orthant solution needs t >= 0")


# ---------------------------------------------------------------------------
# Flow-equation residuals of catalog entries
# ---------------------------------------------------------------------------

_D1 = (np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0,
       np.array([-2, -1, 0, 1, 2]))
_D2 = (np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / 12.0,
       np.array([-2, -1, 0, 1, 2]))


def flow_residual(spec: SolitonSpec, y, t: float,
                  dy: float = 1e-2, dt: float = 1e-3) -> float:
    """Residual of ``ds/dt + (det d^2 s)^(-1/(n+2))`` at one sample (y, t).

    Both derivatives use fourth-order central differences of the closed
    form; a catalog entry solving the flow exactly leaves a residual at
    the stencil truncation level.
    """
    y = np.asarray(y, dtype=float).reshape(spec.n)
    n = spec.n
    if spec.kind == "calabi":
        dt = min(dt, t / 4.0) if t > 0 else dt
        dy = min(dy, float(np.min(np.abs(y))) / 4.0)
    w1, off = _D1
    st = sum(w * slice_support(spec, y, t + k * dt) for w, k in zip(w1, off)) / dt

    hess = np.empty((n, n))
    for i in range(n):
        w2, off2 = _D2
        e_i = np.zeros(n)
        e_i[i] = 1.0
        hess[i, i] = sum(
            w * slice_support(spec, y + k * dy * e_i, t) for w, k in zip(w2, off2)
        ) / dy ** 2
        for j in range(i + 1, n):
            e_j = np.zeros(n)
            e_j[j] = 1.0
            acc = 0.0
            for wi, ki in zip(w1, off):
                for wj, kj in zip(w1, off):
                    acc += wi * wj * slice_support(
                        spec, y + ki * dy * e_i + kj * dy * e_j, t)
            hess[i, j] = hess[j, i] = acc / dy ** 2
    det = float(np.linalg.det(hess))
    if det <= 0:
        raise DomainError("sampled Hessian is not positive definite")
    return float(st + det ** (-1.0 / (n + 2.0)))
