"""End-to-end acceptance suite.

Each test exercises one acceptance criterion at its stated tolerance and
prints a single pass/fail line (run ``pytest -s tests/test_acceptance.py``
to see them live).  Criteria 1 and 2 carry wall-clock budgets and dominate
the suite's runtime.
"""

import time

import numpy as np
import pytest

from affineflow import artifacts
from affineflow.cli import cmd_verify
from affineflow.flow import (
    FlowConfig,
    FlowTrajectory,
    InitialSpec,
    run,
    run_pair,
)
from affineflow.monitors import (
    andrews_speed_monitor,
    containment_monitor,
    cubic_decay_monitor,
)
from affineflow.solitons import (
    SolitonSpec,
    calabi_constant,
    extinction_time,
    slice_support,
    soliton_support_grid,
    sphere_radius,
)
from affineflow.support import grid_from_support


def report(idx, name, passed, detail):
    line = f"criterion {idx:2d} [{'PASS' if passed else 'FAIL'}] {name}: {detail}"
    print(line)
    assert passed, line


def timed_run(config):
    t0 = time.perf_counter()
    traj = run(config)
    return traj, time.perf_counter() - t0


def sphere_flow_config(n, r0, bounds, res, t_end, every):
    return FlowConfig(n=n, bounds=bounds, resolution=res,
                      initial=InitialSpec(
                          "soliton", SolitonSpec("sphere", n, {"r0": r0})),
                      boundary_mode="exact-soliton", t_end=t_end,
                      snapshot_every=every)


def circle_error(res):
    cfg = sphere_flow_config(1, 1.0, ((-3.0, 3.0),), (res,), 0.375, 0.375)
    traj, elapsed = timed_run(cfg)
    assert traj.status == "completed"
    g = traj.snapshots[-1]
    exact = sphere_radius(1.0, 1, 0.375) * np.sqrt(1.0 + g.axes()[0] ** 2)
    rel = (np.abs(g.values - exact) / exact)[1:-1]
    return float(rel.max()), elapsed


def perturbed_circle_support(amplitude=0.1, waves=3):
    def s0(y):
        y1 = y[..., 0]
        theta = np.arctan2(-1.0, y1)
        return np.sqrt(1.0 + y1 * y1) * (1.0 + amplitude * np.cos(waves * theta))
    return s0


def test_criterion_1_circle_shrinkage_and_refinement():
    err_257, elapsed = circle_error(257)
    err_513, _ = circle_error(513)
    ratio = err_257 / err_513
    ok = err_257 <= 1e-2 and elapsed <= 60.0 and ratio >= 3.0
    report(1, "circle n=1 shrinkage", ok,
           f"max_rel_err={err_257:.3e} (tol 1e-2), runtime={elapsed:.1f}s "
           f"(limit 60s), refine_ratio={ratio:.2f} (>=3)")


def test_criterion_2_sphere_tracking_n2():
    T = extinction_time(1.0, 2)
    cfg = sphere_flow_config(2, 1.0, ((-2.0, 2.0), (-2.0, 2.0)), (129, 129),
                             0.8 * T, 0.1 * T)
    traj, elapsed = timed_run(cfg)
    assert traj.status == "completed"
    center = tuple(m // 2 for m in cfg.resolution)
    worst = 0.0
    for g in traj.snapshots:
        r = sphere_radius(1.0, 2, g.time)
        worst = max(worst, abs(g.values[center] - r) / r)
    ok = worst <= 0.02 and elapsed <= 600.0
    report(2, "sphere n=2 center tracking", ok,
           f"max_rel_err={worst:.3e} (tol 2e-2), runtime={elapsed:.0f}s "
           f"(limit 600s)")


def test_criterion_3_translator_n2():
    spec = SolitonSpec("paraboloid", 2)
    cfg = FlowConfig(n=2, bounds=((-2.0, 2.0), (-2.0, 2.0)),
                     resolution=(65, 65),
                     initial=InitialSpec("soliton", spec),
                     boundary_mode="exact-soliton", t_end=1.0,
                     snapshot_every=0.25)
    traj, _ = timed_run(cfg)
    assert traj.status == "completed"
    worst = 0.0
    for g in traj.snapshots:
        exact = slice_support(spec, g.node_coords(), g.time)
        worst = max(worst, float(np.abs(g.values - exact)[1:-1, 1:-1].max()))
    report(3, "paraboloid translator n=2", worst <= 1e-3,
           f"max_interior_err={worst:.3e} (tol 1e-3) over t in [0,1]")


def test_criterion_4_calabi_orthant_n1():
    spec = SolitonSpec("calabi", 1)
    cfg = FlowConfig(n=1, bounds=((-1.0, -0.05),), resolution=(129,),
                     initial=InitialSpec("soliton", spec),
                     boundary_mode="exact-soliton", t_end=1.0,
                     snapshot_every=0.2, det_floor=1e-3)
    traj, _ = timed_run(cfg)
    assert traj.status == "completed"
    c1 = calabi_constant(1)
    assert c1 == pytest.approx(0.769800, abs=1e-6)
    worst = 0.0
    for g in traj.snapshots:
        if g.time < 0.2:
            continue
        y = g.axes()[0]
        exact = -2.0 * np.sqrt(c1 * g.time ** 1.5 * np.abs(y))
        quarter = len(y) // 4
        mid = slice(quarter, -quarter)
        rel = np.abs(g.values - exact)[mid] / np.abs(exact)[mid]
        worst = max(worst, float(rel.max()))
    report(4, "expanding orthant n=1", worst <= 0.05,
           f"mid-window max_rel_err={worst:.3e} (tol 5e-2) for t in [0.2,1]")


def test_criterion_5_shear_equivariance_n1():
    shear = ((1.0, 0.5), (0.0, 1.0))
    t_star = 0.3 * extinction_time(1.0, 1)
    bounds, res = ((-3.0, 3.0),), (257,)
    base = sphere_flow_config(1, 1.0, bounds, res, t_star, t_star)
    sheared = FlowConfig(
        n=1, bounds=bounds, resolution=res,
        initial=InitialSpec("soliton",
                            SolitonSpec("sphere", 1, {"r0": 1.0}, map=shear)),
        boundary_mode="exact-soliton", t_end=t_star, snapshot_every=t_star)
    g_base = run(base).snapshots[-1]
    g_shear = run(sheared).snapshots[-1]
    y = g_base.axes()[0]
    # flow-then-shear: s_sheared(y) = (1 - y/2) * s_base(y / (1 - y/2)),
    # valid where the pulled-back point stays inside the window
    scale = 1.0 - 0.5 * y
    pulled = y / scale
    usable = (scale > 0) & (np.abs(pulled) <= 2.9)
    flowed_then_sheared = scale[usable] * np.interp(pulled[usable], y,
                                                    g_base.values)
    rel = np.abs(flowed_then_sheared - g_shear.values[usable]) \
        / np.abs(g_shear.values[usable])
    worst = float(rel.max())
    report(5, "unimodular shear equivariance", worst <= 0.02,
           f"max_rel_gap={worst:.3e} (tol 2e-2) at t=0.3T on "
           f"{int(usable.sum())} matched nodes")


def test_criterion_6_cubic_decay_perturbed_circle(tmp_path):
    T = extinction_time(1.0, 1)
    g0 = grid_from_support(1, ((-3.0, 3.0),), (257,),
                           perturbed_circle_support(0.1))
    g0.validate()
    path = tmp_path / "perturbed.csv"
    z = np.zeros(g0.resolution[0] - 2)
    artifacts.write_snapshot_csv(path, g0, z, z)
    cfg = FlowConfig(n=1, bounds=g0.bounds, resolution=g0.resolution,
                     initial=InitialSpec("grid", path=str(path)),
                     boundary_mode="fixed", t_end=0.6 * T,
                     snapshot_every=0.1 * T)
    traj, _ = timed_run(cfg)
    assert traj.status == "completed"
    rep = cubic_decay_monitor(traj, t_min=0.1 * T - 1e-12)
    ok = rep.passed and rep.errors == 0 and min(rep.times) >= 0.1 * T - 1e-9
    report(6, "cubic-form decay bound", ok,
           f"worst |C|^2/bound ratio={rep.worst_ratio:.3e} (slack 0.5) over "
           f"t in [{min(rep.times):.3f},{max(rep.times):.3f}]")


def test_criterion_7_maximum_principle_random_pairs(tmp_path):
    rng = np.random.default_rng(20240811)
    worst = 0.0
    for k in range(20):
        amps = rng.uniform(-0.05, 0.05, size=3)
        phases = rng.uniform(0.0, 2 * np.pi, size=3)
        lam = rng.uniform(1.0, 2.0)

        def s0(y, amps=amps, phases=phases):
            y1 = y[..., 0]
            theta = np.arctan2(-1.0, y1)
            bump = sum(a * np.cos((j + 2) * theta + p)
                       for j, (a, p) in enumerate(zip(amps, phases)))
            return np.sqrt(1.0 + y1 * y1) * (1.0 + bump)

        inner = grid_from_support(1, ((-2.5, 2.5),), (65,), s0)
        inner.validate()
        paths = []
        for tag, g in (("in", inner),
                       ("out", inner.with_values(lam * inner.values))):
            p = tmp_path / f"pair{k}_{tag}.csv"
            z = np.zeros(g.resolution[0] - 2)
            artifacts.write_snapshot_csv(p, g, z, z)
            paths.append(str(p))
        mk = lambda path: FlowConfig(
            n=1, bounds=inner.bounds, resolution=inner.resolution,
            initial=InitialSpec("grid", path=path), boundary_mode="fixed",
            t_end=0.1, snapshot_every=0.025)
        t1, t2 = run_pair(mk(paths[0]), mk(paths[1]))
        rep = containment_monitor(t1, t2)
        worst = max(worst, max(rep.samples))
        assert rep.passed
    report(7, "maximum principle, 20 nested pairs", worst <= 1e-10,
           f"worst node-wise violation={worst:.3e} (tol 1e-10)")


def test_criterion_8_structure_equation_suite():
    lines, ok = cmd_verify("structure")
    worst = max(float(line.split("value=")[1].split()[0]) for line in lines
                if ".residuals" in line)
    report(8, "structure equations on four quadrics", ok,
           f"max residual={worst:.3e} (tol 1e-6), |C|^2 <= 1e-10 on all")


def test_criterion_9_soliton_pde_residuals():
    from affineflow.cli import _verify_solitons
    checks = _verify_solitons(samples=100)
    worst = max(c[2] for c in checks)
    ok = all(c[1] for c in checks)
    report(9, "catalog flow-equation residuals", ok,
           f"max residual={worst:.3e} (tol 1e-6) over 100 samples x "
           f"{len(checks)} entries")


def test_criterion_10_andrews_envelope_exponent():
    deviations = {}
    for n in (1, 2):
        spec = SolitonSpec("sphere", n, {"r0": 1.0})
        bounds = tuple((-1.0, 1.0) for _ in range(n))
        res = (41,) if n == 1 else (21, 21)
        times = np.linspace(0.01, 0.55 * extinction_time(1.0, n), 24)
        traj = FlowTrajectory(status="completed")
        for t in times:
            traj.snapshots.append(soliton_support_grid(spec, bounds, res, t))
        rep = andrews_speed_monitor(traj, r=0.5)
        target = -n / (2.0 * n + 2.0)
        deviations[n] = abs(rep.fitted["slope"] - target)
        assert rep.passed
    ok = all(d <= 0.15 for d in deviations.values())
    report(10, "speed-envelope exponent", ok,
           f"slope deviation n=1: {deviations[1]:.3f}, n=2: "
           f"{deviations[2]:.3f} (tol 0.15)")
