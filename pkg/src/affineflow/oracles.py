"""Hypersurface patch oracles: parametrizations with derivatives to order 3.

A `PatchOracle` supplies a local embedding ``F(x)`` of a strictly convex
hypersurface patch together with partial derivatives up to third order,
either from closed forms (analytic mode) or from fourth-order central
stencils on ``evaluate`` (finite-difference mode, step ``h_fd``).

The built-in registry is keyed by name + parameters: ``sphere(r)``,
``ellipsoid(a, b[, c])``, ``paraboloid``, ``hyperboloid``,
``graph-of-polynomial(coefficients)``.  These names appear in the CLI.

Oracles must be safe for concurrent evaluation; all built-ins are pure.
"""

from __future__ import annotations

import math
from typing import Callable

import numpy as np

from . import solitons
from .errors import DomainError, InvalidInputError

# Fourth-order central stencils (weights, integer offsets) for the first
# three derivative orders.
_STENCILS = {
    1: (np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0, np.arange(-2, 3)),
    2: (np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / 12.0, np.arange(-2, 3)),
    3: (np.array([1.0, -8.0, 13.0, 0.0, -13.0, 8.0, -1.0]) / 8.0, np.arange(-3, 4)),
}


def _check_alpha(n: int, alpha) -> tuple:
    alpha = tuple(int(a) for a in alpha)
    if len(alpha) != n or any(a < 0 for a in alpha) or not 1 <= sum(alpha) <= 3:
        raise InvalidInputError(f"multi-index {alpha} invalid for order<=3, n={n}")
    return alpha


class PatchOracle:
    """Base class; subclasses implement `evaluate` and usually `derivative`."""

    def __init__(self, n: int, mode: str = "analytic", h_fd: float = 1e-3):
        self.n = int(n)
        self.mode = mode
        self.h_fd = float(h_fd)

    def evaluate(self, x) -> np.ndarray:
        raise NotImplementedError

    def derivative(self, x, alpha) -> np.ndarray:
        """Partial derivative of F for a multi-index, finite differences."""
        alpha = _check_alpha(self.n, alpha)
        return _fd_derivative(self.evaluate, np.asarray(x, float), alpha, self.h_fd)


def _fd_derivative(f: Callable, x: np.ndarray, alpha: tuple, h: float) -> np.ndarray:
    axis = next(i for i, a in enumerate(alpha) if a > 0)
    order = alpha[axis]
    rest = tuple(0 if i == axis else a for i, a in enumerate(alpha))
    weights, offsets = _STENCILS[order]

    def slice_eval(xp):
        if sum(rest) == 0:
            return np.asarray(f(xp), dtype=float)
        return _fd_derivative(f, xp, rest, h)

    e = np.zeros_like(x)
    e[axis] = 1.0
    acc = sum(w * slice_eval(x + k * h * e) for w, k in zip(weights, offsets))
    return acc / h ** order


class FiniteDifferencePatch(PatchOracle):
    """Wrap a bare evaluator; all derivatives come from stencils on it."""

    def __init__(self, n: int, func: Callable, h_fd: float = 1e-3):
        super().__init__(n, mode="finite-difference", h_fd=h_fd)
        self._func = func

    def evaluate(self, x) -> np.ndarray:
        return np.asarray(self._func(np.asarray(x, dtype=float)), dtype=float)


class GraphPatch(PatchOracle):
    """Graph embedding ``F(x) = (x, f(x))`` with analytic scalar derivatives.

    ``df(x, alpha)`` returns the scalar partial of f for a multi-index.
    """

    def __init__(self, n: int, f: Callable, df: Callable, h_fd: float = 1e-3):
        super().__init__(n, mode="analytic", h_fd=h_fd)
        self._f = f
        self._df = df

    def evaluate(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.append(x, self._f(x))

    def derivative(self, x, alpha) -> np.ndarray:
        alpha = _check_alpha(self.n, alpha)
        x = np.asarray(x, dtype=float)
        out = np.zeros(self.n + 1)
        if sum(alpha) == 1:
            out[alpha.index(1)] = 1.0
        out[-1] = self._df(x, alpha)
        return out


class AffineImagePatch(PatchOracle):
    """Ambient affine image ``A F(x) + b`` of a base patch."""

    def __init__(self, base: PatchOracle, A, b=None):
        super().__init__(base.n, mode=base.mode, h_fd=base.h_fd)
        self.base = base
        self.A = np.asarray(A, dtype=float)
        self.b = np.zeros(base.n + 1) if b is None else np.asarray(b, dtype=float)
        if self.A.shape != (base.n + 1, base.n + 1):
            raise InvalidInputError("map must be (n+1)x(n+1)")

    def evaluate(self, x) -> np.ndarray:
        return self.A @ self.base.evaluate(x) + self.b

    def derivative(self, x, alpha) -> np.ndarray:
        return self.A @ self.base.derivative(x, alpha)


# ---------------------------------------------------------------------------
# Closed-form graph kernels
# ---------------------------------------------------------------------------

def _radical_df(sign_f: float, sign_xx: float, const: float):
    """Derivatives of f = sign_f * sqrt(const + sign_xx*|x|^2) up to order 3."""

    def df(x, alpha):
        u = const + sign_xx * float(x @ x)
        if u <= 0:
            raise DomainError("point outside the patch chart")
        order = sum(alpha)
        idx = [i for i, a in enumerate(alpha) for _ in range(a)]
        if order == 1:
            (i,) = idx
            return sign_f * sign_xx * x[i] * u ** -0.5
        if order == 2:
            i, j = idx
            d = 1.0 if i == j else 0.0
            return sign_f * sign_xx * (d * u ** -0.5
                                       - sign_xx * x[i] * x[j] * u ** -1.5)
        i, j, k = idx
        dij = 1.0 if i == j else 0.0
        dik = 1.0 if i == k else 0.0
        djk = 1.0 if j == k else 0.0
        lin = dij * x[k] + dik * x[j] + djk * x[i]
        return sign_f * sign_xx * (-sign_xx * lin * u ** -1.5
                                   + 3.0 * x[i] * x[j] * x[k] * u ** -2.5)

    return df


def sphere_patch(r: float, n: int, h_fd: float = 1e-3) -> GraphPatch:
    """Lower hemisphere graph ``x -> (x, -sqrt(r^2 - |x|^2))``, |x| < r."""
    if r <= 0:
        raise InvalidInputError("sphere radius must be positive")
    f = lambda x: -math.sqrt(r * r - float(x @ x))
    return GraphPatch(n, f, _radical_df(-1.0, -1.0, r * r), h_fd=h_fd)


def hyperboloid_patch(n: int, h_fd: float = 1e-3) -> GraphPatch:
    """Upper hyperboloid sheet graph ``x -> (x, sqrt(1 + |x|^2))``."""
    f = lambda x: math.sqrt(1.0 + float(x @ x))
    return GraphPatch(n, f, _radical_df(1.0, 1.0, 1.0), h_fd=h_fd)


def paraboloid_patch(n: int, shift: float = 0.0, h_fd: float = 1e-3) -> GraphPatch:
    """Paraboloid graph ``x -> (x, |x|^2/2 + shift)``."""

    def df(x, alpha):
        order = sum(alpha)
        if order == 1:
            return x[alpha.index(1)]
        if order == 2:
            idx = [i for i, a in enumerate(alpha) for _ in range(a)]
            return 1.0 if idx[0] == idx[1] else 0.0
        return 0.0

    return GraphPatch(n, lambda x: 0.5 * float(x @ x) + shift, df, h_fd=h_fd)


def ellipsoid_patch(semi_axes, h_fd: float = 1e-3) -> AffineImagePatch:
    """Axis-aligned ellipsoid as a diagonal image of the unit sphere patch."""
    axes = np.asarray(semi_axes, dtype=float)
    if axes.ndim != 1 or axes.size < 2 or np.any(axes <= 0):
        raise InvalidInputError("ellipsoid needs positive semi-axes (a, b[, c])")
    n = axes.size - 1
    return AffineImagePatch(sphere_patch(1.0, n, h_fd=h_fd), np.diag(axes))


class PolynomialGraph(GraphPatch):
    """Graph of a multivariate polynomial given by {multi-index: coefficient}."""

    def __init__(self, n: int, coefficients: dict, h_fd: float = 1e-3):
        coeffs = {}
        for key, c in coefficients.items():
            key = tuple(int(k) for k in (key if isinstance(key, (tuple, list)) else (key,)))
            if len(key) != n or any(k < 0 for k in key):
                raise InvalidInputError(f"bad monomial exponent {key} for n={n}")
            coeffs[key] = float(c)
        self.coefficients = coeffs
        super().__init__(n, self._poly, self._dpoly, h_fd=h_fd)

    def _poly(self, x):
        return sum(c * np.prod(x ** np.array(k)) for k, c in self.coefficients.items())

    def _dpoly(self, x, alpha):
        total = 0.0
        for k, c in self.coefficients.items():
            term = c
            for xi, ki, ai in zip(x, k, alpha):
                if ki < ai:
                    term = 0.0
                    break
                term *= math.perm(ki, ai) * xi ** (ki - ai)
            total += term
        return total


_REGISTRY = {
    "sphere": lambda n, p: sphere_patch(p.get("r", 1.0), n),
    "ellipsoid": lambda n, p: ellipsoid_patch(
        [p.get(k) for k in ("a", "b", "c")[: n + 1]]),
    "paraboloid": lambda n, p: paraboloid_patch(n),
    "hyperboloid": lambda n, p: hyperboloid_patch(n),
    "graph-of-polynomial": lambda n, p: PolynomialGraph(n, p["coefficients"]),
}


def oracle_names() -> tuple:
    return tuple(sorted(_REGISTRY))


def make_oracle(name: str, n: int = 2, params: dict | None = None) -> PatchOracle:
    """Instantiate a registered oracle by name and parameter dict."""
    if name not in _REGISTRY:
        raise InvalidInputError(
            f"unknown oracle {name!r}; known: {', '.join(oracle_names())}")
    try:
        return _REGISTRY[name](n, params or {})
    except (KeyError, TypeError) as exc:
        raise InvalidInputError(f"bad parameters for oracle {name!r}: {exc}") from exc


def soliton_patch_family(spec: solitons.SolitonSpec) -> Callable[[float], PatchOracle]:
    """Time-indexed analytic patches for soliton families.

    Supported kinds: ``sphere`` (shrinking, graph about the south pole) and
    ``paraboloid`` (translating).  Both have the property that the scalar
    invariants entering the evolution identities are either constant over
    the patch or exactly transported, so fixed-chart time differencing is
    valid.
    """
    if spec.kind == "sphere":
        r0, n = spec.params["r0"], spec.n
        return lambda t: sphere_patch(solitons.sphere_radius(r0, n, t), n)
    if spec.kind == "paraboloid":
        return lambda t: paraboloid_patch(spec.n, shift=t)
    raise DomainError(f"no analytic patch family for soliton kind {spec.kind!r}")
