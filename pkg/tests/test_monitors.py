import numpy as np
import pytest

from affineflow.errors import DomainError, InvalidInputError
from affineflow.flow import FlowConfig, FlowTrajectory, InitialSpec, run, run_pair
from affineflow.monitors import (
    andrews_speed_monitor,
    containment_monitor,
    cubic_decay_monitor,
    decay_bound,
    evaluate_named,
    gh_monitor,
    gh_quantity,
)
from affineflow.solitons import (
    SolitonSpec,
    extinction_time,
    soliton_support_grid,
    sphere_radius,
)
from affineflow.support import grid_from_support


def exact_trajectory(spec, bounds, res, times):
    traj = FlowTrajectory()
    for t in times:
        traj.snapshots.append(soliton_support_grid(spec, bounds, res, t))
    traj.status = "completed"
    return traj


def sphere_trajectory(n, r0=1.0, t_hi_frac=0.55, count=24, res=None):
    spec = SolitonSpec("sphere", n, {"r0": r0})
    bounds = tuple((-1.0, 1.0) for _ in range(n))
    res = res or ((41,) if n == 1 else (21, 21))
    times = np.linspace(0.01, t_hi_frac * extinction_time(r0, n), count)
    return exact_trajectory(spec, bounds, res, times)


class TestDecayBound:
    def test_values(self):
        assert decay_bound(2, 0.5) == pytest.approx(8.0)
        assert decay_bound(1, 0.25) == pytest.approx(6.0)

    def test_needs_positive_time(self):
        with pytest.raises(DomainError):
            decay_bound(2, 0.0)


class TestCubicDecayMonitor:
    def test_exact_circle_passes_with_margin(self):
        spec = SolitonSpec("sphere", 1, {"r0": 1.0})
        traj = exact_trajectory(spec, ((-2.0, 2.0),), (129,),
                                np.linspace(0.1, 0.4, 4))
        rep = cubic_decay_monitor(traj)
        assert rep.passed
        assert rep.worst_ratio <= 1e-3
        assert rep.errors == 0
        assert rep.bounds[0] == pytest.approx(decay_bound(1, 0.1))

    def test_perturbed_sphere_flow_respects_bound(self):
        # 0.1-amplitude smooth perturbation of the unit 2-sphere support
        def s0(y):
            rho = np.linalg.norm(
                np.concatenate([y, -np.ones(y.shape[:-1] + (1,))], -1), axis=-1)
            u = y / rho[..., None]
            pert = 0.1 * (u[..., 0] ** 2 - u[..., 1] ** 2)
            return rho * (1.0 + pert)

        g0 = grid_from_support(2, ((-2.0, 2.0), (-2.0, 2.0)), (49, 49), s0)
        g0.validate()
        import affineflow.artifacts as artifacts
        import tempfile, os
        with tempfile.TemporaryDirectory() as td:
            path = os.path.join(td, "g0.csv")
            z = np.zeros(tuple(m - 2 for m in g0.resolution))
            artifacts.write_snapshot_csv(path, g0, z, z)
            T = extinction_time(1.0, 2)
            cfg = FlowConfig(n=2, bounds=g0.bounds, resolution=g0.resolution,
                             initial=InitialSpec("grid", path=path),
                             boundary_mode="fixed", t_end=0.3 * T,
                             snapshot_every=0.1 * T)
            traj = run(cfg)
        assert traj.status == "completed"
        rep = cubic_decay_monitor(traj, sample_count=4, half_window=6,
                                  t_min=0.05 * T)
        assert rep.errors == 0
        assert rep.passed, (rep.samples, rep.bounds)


class TestAndrewsMonitor:
    def test_initial_q_value_matches_closed_form(self):
        traj = sphere_trajectory(2, count=240)
        rep = andrews_speed_monitor(traj, r=0.5)
        # q(0+) = r^(-n/(n+2)) / (r - 0.25) evaluated at r(0.01) ~ 4/3
        r_t = sphere_radius(1.0, 2, 0.01)
        expected = r_t ** -0.5 / (r_t - 0.25)
        assert rep.samples[0] == pytest.approx(expected, rel=2e-2)
        assert rep.samples[0] == pytest.approx(4.0 / 3.0, rel=3e-2)

    @pytest.mark.parametrize("n", [1, 2])
    def test_envelope_exponent_on_exact_spheres(self, n):
        rep = andrews_speed_monitor(sphere_trajectory(n), r=0.5)
        assert rep.passed
        target = -n / (2.0 * n + 2.0)
        assert abs(rep.fitted["slope"] - target) <= 0.15
        assert rep.fitted["exponent"] == pytest.approx(target)
        assert rep.worst_ratio <= 1.0 + 1e-12

    def test_exponent_values(self):
        assert -2 / 6.0 == pytest.approx(-1.0 / 3.0)
        rep = andrews_speed_monitor(sphere_trajectory(1), r=0.5)
        assert rep.fitted["exponent"] == pytest.approx(-0.25)

    def test_inapplicable_when_support_below_r(self):
        # window reaches r(t) ~ 0.55 < r while staying above r/2
        rep = andrews_speed_monitor(sphere_trajectory(1, t_hi_frac=0.55),
                                    r=1.05)
        assert not rep.passed
        assert "inapplicable" in rep.note

    def test_division_domain_error(self):
        # window reaching r(t) < r/2 trips the hard precondition
        traj = sphere_trajectory(1, t_hi_frac=0.999, count=60)
        with pytest.raises(DomainError):
            andrews_speed_monitor(traj, r=1.9)


class TestGhQuantity:
    def u_grid(self):
        return grid_from_support(
            2, ((-2.0, 2.0), (-2.0, 2.0)), (33, 33),
            lambda y: 0.5 * (np.sum(y * y, axis=-1) - 1.0))

    def test_center_value(self):
        rep = gh_quantity(self.u_grid(), beta=(1.0, 0.0))
        # at y = 0: |u| = 1/2, u_bb = 1, grad u = 0
        assert rep.w[15, 15] == pytest.approx(0.5, abs=1e-12)

    def test_zero_on_bowl_boundary(self):
        rep = gh_quantity(self.u_grid(), beta=(1.0, 0.0))
        # y = (1, 0) sits on {u = 0}: the quantity vanishes there
        assert rep.w[23, 15] == pytest.approx(0.0, abs=1e-12)

    def test_max_attained_strictly_inside(self):
        rep = gh_quantity(self.u_grid(), beta=(1.0, 0.0))
        assert rep.max_inside

    def test_no_bowl_is_an_error(self):
        g = grid_from_support(2, ((-1.0, 1.0), (-1.0, 1.0)), (9, 9),
                              lambda y: 1.0 + np.sum(y * y, axis=-1))
        with pytest.raises(DomainError):
            gh_quantity(g, beta=(1.0, 0.0))

    def test_beta_must_be_unit(self):
        with pytest.raises(InvalidInputError):
            gh_quantity(self.u_grid(), beta=(2.0, 0.0))

    def test_invariant_under_affine_rebasing(self):
        # adding a time-independent affine function to s must not change w
        # once u is re-based on the tangent cap
        spec = SolitonSpec("paraboloid", 2)
        times = np.linspace(0.0, 1.0, 6)
        base = exact_trajectory(spec, ((-2.0, 2.0), (-2.0, 2.0)), (33, 33),
                                times)
        shifted = FlowTrajectory(status="completed")
        for g in base.snapshots:
            lin = 0.3 * g.node_coords()[..., 0] + 0.1
            shifted.snapshots.append(g.with_values(g.values + lin))
        r1 = gh_monitor(base, beta=(1.0, 0.0))
        r2 = gh_monitor(shifted, beta=(1.0, 0.0))
        assert np.allclose(r1.samples, r2.samples, atol=1e-10)

    def test_translator_stays_bounded(self):
        spec = SolitonSpec("paraboloid", 2)
        traj = exact_trajectory(spec, ((-2.0, 2.0), (-2.0, 2.0)), (33, 33),
                                np.linspace(0.2, 1.0, 9))
        rep = gh_monitor(traj, beta=(1.0, 0.0))
        assert rep.passed
        assert rep.worst_ratio < 1.0


class TestContainmentMonitor:
    def sphere_cfg(self, r0, **kw):
        base = dict(n=1, bounds=((-2.0, 2.0),), resolution=(65,), t_end=0.15,
                    snapshot_every=0.05, boundary_mode="exact-soliton")
        base.update(kw)
        return FlowConfig(initial=InitialSpec(
            "soliton", SolitonSpec("sphere", 1, {"r0": r0})), **base)

    def test_identical_trajectories_zero_margin(self):
        t1, t2 = run_pair(self.sphere_cfg(1.0), self.sphere_cfg(1.0))
        rep = containment_monitor(t1, t2)
        assert rep.passed
        assert max(rep.samples) == 0.0

    def test_nested_balls_ordered(self):
        t1, t2 = run_pair(self.sphere_cfg(0.8), self.sphere_cfg(1.0))
        rep = containment_monitor(t1, t2)
        assert rep.passed
        assert rep.worst_ratio <= 1.0

    def test_ball_inside_translator(self):
        base = dict(n=1, bounds=((-2.0, 2.0),), resolution=(65,), t_end=0.15,
                    snapshot_every=0.05, boundary_mode="exact-soliton")
        ball = FlowConfig(initial=InitialSpec(
            "soliton", SolitonSpec("sphere", 1, {"r0": 1.0})), **base)
        # translator s = |y|^2/2 + 1 - t contains the unit disk on [-2, 2]
        trans = FlowConfig(initial=InitialSpec(
            "soliton", SolitonSpec("paraboloid", 1, offset=(0.0, -1.0))),
            **base)
        g_ball = soliton_support_grid(SolitonSpec("sphere", 1, {"r0": 1.0}),
                                      ((-2.0, 2.0),), (65,), 0.0)
        g_tr = soliton_support_grid(
            SolitonSpec("paraboloid", 1, offset=(0.0, -1.0)),
            ((-2.0, 2.0),), (65,), 0.0)
        assert np.all(g_ball.values <= g_tr.values + 1e-12)
        t1, t2 = run_pair(ball, trans)
        rep = containment_monitor(t1, t2)
        assert rep.passed

    def test_mismatched_counts_rejected(self):
        t1, _ = run_pair(self.sphere_cfg(1.0), self.sphere_cfg(1.0))
        t2, _ = run_pair(self.sphere_cfg(1.0, t_end=0.1),
                         self.sphere_cfg(1.0, t_end=0.1))
        with pytest.raises(InvalidInputError):
            containment_monitor(t1, t2)


class TestDispatch:
    def test_named_monitors(self):
        traj = sphere_trajectory(1)
        rep = evaluate_named({"name": "andrews-speed", "r": 0.5}, traj)
        assert rep.name == "andrews-speed"
        with pytest.raises(InvalidInputError):
            evaluate_named({"name": "nope"}, traj)

    def test_report_serialization(self):
        rep = andrews_speed_monitor(sphere_trajectory(1), r=0.5)
        doc = rep.as_dict()
        assert doc["name"] == "andrews-speed"
        assert set(doc) >= {"pass", "worst_ratio", "fitted"}
