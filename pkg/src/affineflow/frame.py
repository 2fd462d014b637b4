"""Affine differential invariants of strictly convex hypersurface patches.

From a `PatchOracle` this module extracts, at a parameter point:

* Euclidean data: induced metric, second fundamental form, inward unit
  normal, Gauss curvature;
* the affine normal field ``xi`` and curvature scale ``phi = K^(1/(n+2))``;
* the full affine frame: affine metric g, cubic form C, shape operator A,
  affine mean curvature H, and |C|^2;
* residuals of the structure equations (apolarity, normal-as-Laplacian,
  both Codazzi equations, volume-form normalization), used as numerical
  correctness checks;
* finite-difference-in-time residuals of the evolution identities on
  closed-form soliton families.

Derivative extraction strategy: third-order patch data comes from the
oracle (analytic or stencil-backed); the Levi-Civita connection of g and
the derivative of ``xi`` needed for A are obtained by fourth-order central
differencing of pointwise-exact quantities over a parameter stencil of
step ``h_fd``, since no closed form for them is assumed of the oracle.

Everything here is pure and reentrant provided the oracle is.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import permutations, product

import numpy as np

from .errors import ConditioningError, ConvexityError, ImmersionError
from .oracles import PatchOracle

#: Fourth-order first-derivative stencil used for frame-level differencing.
_W1 = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0
_OFF1 = np.array([-2, -1, 0, 1, 2])

_COND_LIMIT = 1e10


@dataclass(frozen=True)
class EuclideanData:
    """Euclidean first/second fundamental forms, inward normal and K."""

    gbar: np.ndarray   # (n, n) induced metric
    h: np.ndarray      # (n, n) second fundamental form, positive definite
    nu: np.ndarray     # (n+1,) inward unit normal
    K: float           # Gauss curvature det h / det gbar > 0


@dataclass(frozen=True)
class AffineFrame:
    """Per-point bundle of affine invariants (all tensor indices lowered by g)."""

    g: np.ndarray          # (n, n) affine metric
    phi: float             # K^(1/(n+2))
    xi: np.ndarray         # (n+1,) affine normal
    shape_op: np.ndarray   # (n, n) A_ij
    cubic: np.ndarray      # (n, n, n) C_ijk
    H: float               # affine mean curvature, trace of A^i_j
    C_norm_sq: float       # |C|^2 with respect to g

    def validate(self, tol: float = 1e-6) -> None:
        """Assert the frame invariants within ``tol`` (scale-relative)."""
        g, A, C = self.g, self.shape_op, self.cubic
        scale = max(1.0, float(np.max(np.abs(C))), float(np.max(np.abs(A))))
        if np.max(np.abs(g - g.T)) > tol or np.any(np.linalg.eigvalsh(g) <= 0):
            raise ConvexityError("affine metric is not symmetric positive definite")
        if np.max(np.abs(A - A.T)) > tol * scale:
            raise ConvexityError("shape operator is not symmetric")
        for perm in permutations(range(3)):
            if np.max(np.abs(C - np.transpose(C, perm))) > tol * scale:
                raise ConvexityError("cubic form is not totally symmetric")
        g_inv = np.linalg.inv(g)
        if np.max(np.abs(np.einsum("ij,ijk->k", g_inv, C))) > tol * scale:
            raise ConvexityError("apolarity violated beyond tolerance")


def _first_derivs(patch: PatchOracle, x: np.ndarray) -> np.ndarray:
    n = patch.n
    return np.stack([
        patch.derivative(x, tuple(1 if j == i else 0 for j in range(n)))
        for i in range(n)
    ])  # rows F_{,i}


def _second_derivs(patch: PatchOracle, x: np.ndarray) -> np.ndarray:
    n = patch.n
    out = np.empty((n, n, n + 1))
    for i in range(n):
        for j in range(i, n):
            alpha = [0] * n
            alpha[i] += 1
            alpha[j] += 1
            out[i, j] = out[j, i] = patch.derivative(x, tuple(alpha))
    return out


def _unit_normal(F1: np.ndarray) -> np.ndarray:
    # Null vector of the tangent rows via SVD; orientation fixed afterwards.
    _, sing, vt = np.linalg.svd(F1)
    if sing.min() < 1e-12 * max(sing.max(), 1.0):
        raise ImmersionError("patch first derivatives are linearly dependent")
    return vt[-1]


def euclidean_data(patch: PatchOracle, x) -> EuclideanData:
    """Induced metric, second fundamental form, inward normal and K at x.

    The normal is oriented so the second fundamental form is positive
    definite; an indefinite form is a convexity failure, not a silent flip.
    """
    x = np.asarray(x, dtype=float)
    F1 = _first_derivs(patch, x)
    F2 = _second_derivs(patch, x)
    gbar = F1 @ F1.T
    det_gbar = float(np.linalg.det(gbar))
    if det_gbar <= 0 or not np.isfinite(det_gbar):
        raise ImmersionError("induced metric is degenerate")
    nu = _unit_normal(F1)
    h = F2 @ nu
    eig = np.linalg.eigvalsh(h)
    if eig[0] > 0:
        pass
    elif eig[-1] < 0:
        nu, h = -nu, -h
    else:
        raise ConvexityError("second fundamental form is indefinite")
    K = float(np.linalg.det(h) / det_gbar)
    return EuclideanData(gbar=gbar, h=h, nu=nu, K=K)


def _phi_grad(patch: PatchOracle, x: np.ndarray, eu: EuclideanData,
              F1: np.ndarray, F2: np.ndarray) -> tuple:
    """phi and its patch gradient from third-order oracle data."""
    n = patch.n
    phi = eu.K ** (1.0 / (n + 2.0))
    gbar_inv = np.linalg.inv(eu.gbar)
    h_inv = np.linalg.inv(eu.h)
    # dnu_i = -h_il gbar^{lm} F_{,m}
    dnu = -eu.h @ gbar_inv @ F1
    dphi = np.empty(n)
    for i in range(n):
        alpha_i = [0] * n
        alpha_i[i] += 1
        dh = np.empty((n, n))
        dgbar = np.empty((n, n))
        for j in range(n):
            for k in range(j, n):
                alpha = list(alpha_i)
                alpha[j] += 1
                alpha[k] += 1
                F3 = patch.derivative(x, tuple(alpha))
                dh[j, k] = dh[k, j] = F3 @ eu.nu + F2[j, k] @ dnu[i]
                val = F2[i, j] @ F1[k] + F1[j] @ F2[i, k]
                dgbar[j, k] = dgbar[k, j] = val
        dlogK = float(np.sum(h_inv * dh) - np.sum(gbar_inv * dgbar))
        dphi[i] = phi * dlogK / (n + 2.0)
    return phi, dphi


def affine_normal(patch: PatchOracle, x) -> np.ndarray:
    """Affine normal ``xi = -h^{ki} phi_{,i} F_{,k} + phi nu`` at x.

    This is the unique inward, equiaffine, volume-normalized transverse
    field; it is invariant under volume-preserving affine maps of ambient
    space.
    """
    x = np.asarray(x, dtype=float)
    F1 = _first_derivs(patch, x)
    F2 = _second_derivs(patch, x)
    eu = euclidean_data(patch, x)
    phi, dphi = _phi_grad(patch, x, eu, F1, F2)
    h_inv = np.linalg.inv(eu.h)
    return -(h_inv @ dphi) @ F1 + phi * eu.nu


def _metric_at(patch: PatchOracle, x: np.ndarray) -> np.ndarray:
    eu = euclidean_data(patch, x)
    phi = eu.K ** (1.0 / (patch.n + 2.0))
    return eu.h / phi


def _fd_field(func, x: np.ndarray, axis: int, step: float) -> np.ndarray:
    e = np.zeros_like(x)
    e[axis] = 1.0
    return sum(w * np.asarray(func(x + k * step * e))
               for w, k in zip(_W1, _OFF1) if w != 0.0) / step


def _christoffel(patch: PatchOracle, x: np.ndarray, g_inv: np.ndarray,
                 step: float) -> np.ndarray:
    n = patch.n
    dg = np.stack([_fd_field(lambda p: _metric_at(patch, p), x, l, step)
                   for l in range(n)])  # dg[l, i, j] = partial_l g_ij
    gamma = np.empty((n, n, n))
    for k, i, j in product(range(n), repeat=3):
        gamma[k, i, j] = 0.5 * sum(
            g_inv[k, l] * (dg[i, j, l] + dg[j, i, l] - dg[l, i, j])
            for l in range(n)
        )
    return gamma  # Gamma^k_{ij}


def _frame_solve(F1: np.ndarray, xi: np.ndarray) -> np.ndarray:
    """Inverse of the frame matrix with columns (F_{,1}, ..., F_{,n}, xi)."""
    B = np.column_stack([*F1, xi])
    cond = np.linalg.cond(B)
    if not np.isfinite(cond) or cond > _COND_LIMIT:
        raise ConditioningError("tangent frame is ill-conditioned", cond)
    return np.linalg.inv(B)


def affine_frame_at(patch: PatchOracle, x, step: float | None = None) -> AffineFrame:
    """Full affine frame at x.

    The cubic form comes from projecting ``F_{,ij} - g_ij xi`` onto the
    tangent frame and subtracting the Levi-Civita connection of g; the
    shape operator from solving ``xi_{,i} = -A^k_i F_{,k}`` with ``xi``
    differenced over the parameter stencil.
    """
    x = np.asarray(x, dtype=float)
    n = patch.n
    step = patch.h_fd if step is None else float(step)
    F1 = _first_derivs(patch, x)
    F2 = _second_derivs(patch, x)
    eu = euclidean_data(patch, x)
    phi, dphi = _phi_grad(patch, x, eu, F1, F2)
    h_inv = np.linalg.inv(eu.h)
    xi = -(h_inv @ dphi) @ F1 + phi * eu.nu
    g = eu.h / phi
    g_inv = np.linalg.inv(g)

    B_inv = _frame_solve(F1, xi)
    conn = np.empty((n, n, n))  # (Gamma + C)^k_{ij}
    for i in range(n):
        for j in range(i, n):
            coeffs = B_inv @ (F2[i, j] - g[i, j] * xi)
            conn[:, i, j] = conn[:, j, i] = coeffs[:n]
    gamma = _christoffel(patch, x, g_inv, step)
    C_up = conn - gamma                      # C^k_{ij}
    C = np.einsum("kl,kij->ijl", g, C_up)    # C_ijk (last index lowered)

    dxi = np.stack([_fd_field(lambda p: affine_normal(patch, p), x, i, step)
                    for i in range(n)])
    A_mixed = np.empty((n, n))               # A^k_i
    for i in range(n):
        A_mixed[:, i] = -(B_inv @ dxi[i])[:n]
    H = float(np.trace(A_mixed))
    A_low = np.einsum("kj,ki->ij", g, A_mixed)
    c_norm = float(np.einsum("ijk,pqr,ip,jq,kr->", C, C, g_inv, g_inv, g_inv))
    return AffineFrame(g=g, phi=phi, xi=xi, shape_op=A_low, cubic=C,
                       H=H, C_norm_sq=c_norm)


@dataclass(frozen=True)
class StructureResiduals:
    """Max-norm defects of the structure equations at one point."""

    apolarity: float
    laplace: float       # |xi - (Laplace F)/n|
    codazzi_A: float
    codazzi_C: float
    volume_form: float   # relative defect of det g = det(F_{,1},...,F_{,n}, xi)^2

    def max_residual(self) -> float:
        return max(self.apolarity, self.laplace, self.codazzi_A,
                   self.codazzi_C, self.volume_form)


def check_structure(patch: PatchOracle, x, step: float | None = None) -> StructureResiduals:
    """Numeric residuals of the structure equations around x.

    Covariant derivatives of A and C are taken with the connection of the
    affine metric, with partials from the same fourth-order stencil as the
    frame extraction.
    """
    x = np.asarray(x, dtype=float)
    n = patch.n
    step = patch.h_fd if step is None else float(step)
    fr = affine_frame_at(patch, x, step=step)
    g_inv = np.linalg.inv(fr.g)
    gamma = _christoffel(patch, x, g_inv, step)
    F1 = _first_derivs(patch, x)
    F2 = _second_derivs(patch, x)

    r_apolar = float(np.max(np.abs(np.einsum("ij,ijk->k", g_inv, fr.cubic))))

    lap = np.einsum("ij,ijc->c", g_inv,
                    F2 - np.einsum("kij,kc->ijc", gamma, F1))
    r_laplace = float(np.max(np.abs(fr.xi - lap / n)))

    dA = np.stack([_fd_field(lambda p: affine_frame_at(patch, p, step=step).shape_op,
                             x, i, step) for i in range(n)])
    dC = np.stack([_fd_field(lambda p: affine_frame_at(patch, p, step=step).cubic,
                             x, i, step) for i in range(n)])
    # A_{jk,i} and C_{ijl,k}
    A_cov = (dA
             - np.einsum("mij,mk->ijk", gamma, fr.shape_op)
             - np.einsum("mik,jm->ijk", gamma, fr.shape_op))
    C_cov = (dC
             - np.einsum("mki,mjl->kijl", gamma, fr.cubic)
             - np.einsum("mkj,iml->kijl", gamma, fr.cubic)
             - np.einsum("mkl,ijm->kijl", gamma, fr.cubic))

    # Lowered form of the affine-curvature Codazzi equation:
    # A_{jk,i} - A_{ik,j} = A^l_i C_{ljk} - A^l_j C_{lik}
    A_up = g_inv @ fr.shape_op  # A^l_i = g^{lm} A_mi
    r_cod_A = 0.0
    for i, j, k in product(range(n), repeat=3):
        lhs = A_cov[i, j, k] - A_cov[j, i, k]
        rhs = (A_up[:, i] @ fr.cubic[:, j, k]
               - A_up[:, j] @ fr.cubic[:, i, k])
        r_cod_A = max(r_cod_A, abs(lhs - rhs))

    r_cod_C = 0.0
    A = fr.shape_op
    g = fr.g
    for i, j, l, k in product(range(n), repeat=4):
        lhs = C_cov[k, i, j, l] - C_cov[j, i, k, l]
        rhs = 0.5 * (g[i, j] * A[k, l] - g[i, k] * A[j, l]
                     + g[l, j] * A[k, i] - g[l, k] * A[j, i])
        r_cod_C = max(r_cod_C, abs(lhs - rhs))

    B = np.column_stack([*F1, fr.xi])
    det_g = float(np.linalg.det(fr.g))
    det_B = float(np.linalg.det(B))
    r_vol = abs(det_g - det_B ** 2) / max(1.0, abs(det_g))

    return StructureResiduals(apolarity=r_apolar, laplace=r_laplace,
                              codazzi_A=r_cod_A, codazzi_C=r_cod_C,
                              volume_form=r_vol)


@dataclass(frozen=True)
class EvolutionResiduals:
    """Time-differenced defects of the flow identities on a soliton family."""

    support: float   # |d_t s + phi|
    gauss: float     # |d_t K - H K|
    phi: float       # |d_t phi - H phi/(n+2)|

    def max_residual(self) -> float:
        return max(self.support, self.gauss, self.phi)


def evolution_identity_check(family, x, t: float,
                             dt: float = 1e-4) -> EvolutionResiduals:
    """Check the evolution identities on a closed-form family at (x, t).

    ``family(t)`` must return a `PatchOracle`; time derivatives are central
    differences with step ``dt``.  A time stencil that crosses the family's
    extinction raises the underlying domain error.
    """
    x = np.asarray(x, dtype=float)

    def scalars(tt):
        patch = family(tt)
        eu = euclidean_data(patch, x)
        F = patch.evaluate(x)
        s = -float(F @ eu.nu)
        return s, eu.K, eu.K ** (1.0 / (patch.n + 2.0))

    s_m, K_m, phi_m = scalars(t - dt)
    s_p, K_p, phi_p = scalars(t + dt)
    patch0 = family(t)
    fr = affine_frame_at(patch0, x)
    n2 = patch0.n + 2.0
    ds, dK, dphi = ((s_p - s_m) / (2 * dt), (K_p - K_m) / (2 * dt),
                    (phi_p - phi_m) / (2 * dt))
    return EvolutionResiduals(
        support=abs(ds + fr.phi),
        gauss=abs(dK - fr.H * (K_m + K_p) / 2.0),
        phi=abs(dphi - fr.H * fr.phi / n2),
    )
