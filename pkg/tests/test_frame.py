from itertools import permutations

import numpy as np
import pytest

from affineflow.errors import ConvexityError, ExtinctionError, ImmersionError
from affineflow.frame import (
    affine_frame_at,
    affine_normal,
    check_structure,
    euclidean_data,
    evolution_identity_check,
)
from affineflow.oracles import (
    AffineImagePatch,
    FiniteDifferencePatch,
    GraphPatch,
    PolynomialGraph,
    ellipsoid_patch,
    hyperboloid_patch,
    make_oracle,
    paraboloid_patch,
    soliton_patch_family,
    sphere_patch,
)
from affineflow.solitons import SolitonSpec

STRUCTURE_TOL = 1e-6
QUADRIC_C_TOL_ANALYTIC = 1e-10
QUADRIC_C_TOL_FD = 1e-4

QUADRICS = {
    "sphere": (sphere_patch(1.0, 2), np.array([0.12, -0.07])),
    "ellipsoid": (ellipsoid_patch([2.0, 2.0, 1.0]), np.array([0.1, 0.06])),
    "paraboloid": (paraboloid_patch(2), np.array([0.25, -0.15])),
    "hyperboloid": (hyperboloid_patch(2), np.array([0.2, 0.1])),
}


class TestEuclideanData:
    def test_unit_sphere_south_pole(self):
        eu = euclidean_data(sphere_patch(1.0, 2), np.zeros(2))
        assert eu.K == pytest.approx(1.0)
        assert np.allclose(eu.h, np.eye(2))
        assert np.allclose(eu.nu, [0.0, 0.0, 1.0])

    def test_sphere_radius_two_curvature(self):
        # K = r^(-n) = 1/4; consistent with |xi| = K^(1/(n+2)) = 2^(-1/2).
        # Cross-check the analytic chain against a stencil-only oracle
        # built from the bare embedding.
        analytic = euclidean_data(sphere_patch(2.0, 2), np.array([0.3, -0.2]))
        assert analytic.K == pytest.approx(0.25, rel=1e-12)
        bare = FiniteDifferencePatch(
            2, lambda x: np.append(x, -np.sqrt(4.0 - x @ x)))
        fd = euclidean_data(bare, np.array([0.3, -0.2]))
        assert fd.K == pytest.approx(analytic.K, rel=1e-8)

    def test_paraboloid_origin(self):
        eu = euclidean_data(paraboloid_patch(2), np.zeros(2))
        assert np.allclose(eu.h, np.eye(2))
        assert eu.K == pytest.approx(1.0)

    def test_immersion_failure(self):
        degenerate = GraphPatch(1, lambda x: 0.0, lambda x, a: 0.0)
        collapsed = AffineImagePatch(degenerate, np.zeros((2, 2)))
        with pytest.raises(ImmersionError):
            euclidean_data(collapsed, np.zeros(1))

    def test_indefinite_form_is_an_error(self):
        saddle = PolynomialGraph(2, {(2, 0): 0.5, (0, 2): -0.5})
        with pytest.raises(ConvexityError):
            euclidean_data(saddle, np.zeros(2))


class TestAffineNormal:
    def test_unit_sphere_inward_normal(self):
        p = sphere_patch(1.0, 2)
        for x in (np.zeros(2), np.array([0.2, 0.3]), np.array([-0.4, 0.1])):
            xi = affine_normal(p, x)
            assert np.allclose(xi, -p.evaluate(x), atol=1e-12)

    def test_sphere_radius_two_magnitude(self):
        xi = affine_normal(sphere_patch(2.0, 2), np.array([0.3, 0.1]))
        assert np.linalg.norm(xi) == pytest.approx(2.0 ** -0.5, rel=1e-12)

    def test_paraboloid_constant_vertical(self):
        p = paraboloid_patch(2)
        for x in (np.zeros(2), np.array([0.5, -0.3])):
            assert np.allclose(affine_normal(p, x), [0.0, 0.0, 1.0], atol=1e-12)

    def test_unimodular_equivariance(self):
        p = sphere_patch(1.0, 2)
        x = np.array([0.15, -0.1])
        shear = np.array([[1.0, 0.4, 0.0], [0.0, 1.0, 0.0], [0.2, 0.0, 1.0]])
        assert np.linalg.det(shear) == pytest.approx(1.0)
        sheared = AffineImagePatch(p, shear, b=np.array([0.3, 0.0, -0.2]))
        lhs = affine_normal(sheared, x)
        rhs = shear @ affine_normal(p, x)
        assert np.max(np.abs(lhs - rhs)) <= 1e-8


class TestAffineFrame:
    def test_unit_sphere_frame(self):
        fr = affine_frame_at(sphere_patch(1.0, 2), np.array([0.1, 0.2]))
        assert np.max(np.abs(fr.cubic)) <= 1e-9
        # A = identity in the g-orthonormal sense: lowered A equals g
        assert np.allclose(fr.shape_op, fr.g, atol=1e-8)
        assert fr.H == pytest.approx(2.0, abs=1e-8)
        fr.validate()

    def test_paraboloid_frame(self):
        fr = affine_frame_at(paraboloid_patch(2), np.array([0.3, -0.1]))
        assert np.max(np.abs(fr.cubic)) <= 1e-10
        assert np.max(np.abs(fr.shape_op)) <= 1e-10
        assert fr.H == pytest.approx(0.0, abs=1e-10)

    def test_ellipsoid_cubic_vanishes(self):
        fr = affine_frame_at(ellipsoid_patch([2.0, 2.0, 1.0]),
                             np.array([0.17, -0.23]))
        assert fr.C_norm_sq <= 1e-6

    @pytest.mark.parametrize("name", sorted(QUADRICS))
    def test_quadric_cubic_norm_analytic(self, name):
        patch, x = QUADRICS[name]
        assert affine_frame_at(patch, x).C_norm_sq <= QUADRIC_C_TOL_ANALYTIC

    @pytest.mark.parametrize("name", sorted(QUADRICS))
    def test_quadric_cubic_norm_finite_difference(self, name):
        patch, x = QUADRICS[name]
        fd = FiniteDifferencePatch(2, patch.evaluate, h_fd=1e-3)
        assert affine_frame_at(fd, x).C_norm_sq <= QUADRIC_C_TOL_FD

    def test_cubic_totally_symmetric(self):
        # non-quadric surface: C != 0 but symmetric under all permutations
        patch = PolynomialGraph(2, {(2, 0): 0.5, (0, 2): 0.5, (3, 0): 0.1,
                                    (2, 1): 0.05, (0, 3): -0.04})
        fr = affine_frame_at(patch, np.array([0.1, -0.05]))
        scale = np.max(np.abs(fr.cubic))
        assert scale > 1e-3
        for perm in permutations(range(3)):
            assert np.max(np.abs(fr.cubic - np.transpose(fr.cubic, perm))) \
                <= 1e-10 * scale

    def test_volume_form_normalization(self):
        for name, (patch, x) in QUADRICS.items():
            fr = affine_frame_at(patch, x)
            F1 = np.stack([patch.derivative(x, a) for a in ((1, 0), (0, 1))])
            B = np.column_stack([*F1, fr.xi])
            det_g = np.linalg.det(fr.g)
            rel = abs(det_g - np.linalg.det(B) ** 2) / abs(det_g)
            assert rel <= 1e-8, name


class TestStructureEquations:
    @pytest.mark.parametrize("name", sorted(QUADRICS))
    def test_residuals_small_on_quadrics(self, name):
        patch, x = QUADRICS[name]
        res = check_structure(patch, x)
        assert res.max_residual() <= STRUCTURE_TOL, res

    def test_residuals_small_on_generic_convex_graph(self):
        patch = PolynomialGraph(2, {(2, 0): 0.6, (0, 2): 0.5, (1, 1): 0.1,
                                    (3, 0): 0.04, (1, 2): 0.03, (4, 0): 0.02})
        res = check_structure(patch, np.array([0.05, -0.1]))
        assert res.max_residual() <= STRUCTURE_TOL, res

    def test_registry_names_work(self):
        oracle = make_oracle("graph-of-polynomial", n=1,
                             params={"coefficients": {(2,): 0.5, (4,): 0.1}})
        res = check_structure(oracle, np.array([0.2]))
        assert res.max_residual() <= STRUCTURE_TOL


class TestEvolutionIdentities:
    def test_shrinking_sphere_n2(self):
        family = soliton_patch_family(SolitonSpec("sphere", 2, {"r0": 1.0}))
        res = evolution_identity_check(family, np.array([0.1, 0.05]), 0.3)
        assert res.max_residual() <= 1e-6

    def test_shrinking_circle_phi_identity(self):
        family = soliton_patch_family(SolitonSpec("sphere", 1, {"r0": 1.0}))
        res = evolution_identity_check(family, np.array([0.2]), 0.375)
        assert res.phi <= 1e-6
        assert res.max_residual() <= 1e-6

    def test_translator_gauss_identity_exact(self):
        family = soliton_patch_family(SolitonSpec("paraboloid", 2))
        res = evolution_identity_check(family, np.array([0.4, -0.2]), 1.3)
        # K is constant along the translation and H = 0
        assert res.gauss <= 1e-12
        assert res.max_residual() <= 1e-9

    def test_time_stencil_crossing_extinction(self):
        family = soliton_patch_family(SolitonSpec("sphere", 1, {"r0": 1.0}))
        with pytest.raises(ExtinctionError):
            evolution_identity_check(family, np.array([0.0]), 0.7499999)
