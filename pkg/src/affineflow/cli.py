"""Command-line interface.

Subcommands:

* ``flow run <config> -o <dir>``   run a configured flow, emit snapshot
  CSVs plus a deterministic summary document, print the run manifest.
* ``soliton eval <name> --t <t> [--y ...]``  evaluate a catalog entry.
* ``geometry check <oracle> --at <x>``  structure-equation residuals of a
  registered patch oracle at a point.
* ``verify <suite>``  run a named verification suite (structure | solitons
  | monitors) with machine-readable pass/fail lines.

Exit status is 0 iff every requested check or run succeeded.  The
environment variable ``AFFINEFLOW_OUT`` sets the default output root for
``flow run``.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np
import yaml

from . import artifacts, flow, monitors, solitons
from .config import config_to_dict, load_config
from .errors import AffineFlowError
from .frame import affine_frame_at, check_structure
from .oracles import make_oracle, oracle_names

OUTPUT_ROOT_ENV = "AFFINEFLOW_OUT"


def cmd_flow(config_path, output_dir) -> artifacts.RunManifest:
    """Run one configured flow and emit its artifacts."""
    config = load_config(config_path)
    echo = config_to_dict(config)
    outdir = Path(output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    manifest = artifacts.RunManifest(config=echo)
    with artifacts.Stopwatch() as watch:
        try:
            traj = flow.run(config)
        except AffineFlowError as exc:
            manifest.status = "error"
            manifest.error = f"{type(exc).__name__}: {exc}"
            manifest.duration_seconds = 0.0
            return manifest
    manifest.duration_seconds = watch.elapsed
    manifest.status = traj.status
    manifest.error = traj.error
    for i, grid in enumerate(traj.snapshots):
        det, speed = flow.hessian_fields(grid, config.det_floor)
        path = outdir / f"snapshot_{i:04d}.csv"
        artifacts.write_snapshot_csv(path, grid, det, speed)
        manifest.snapshot_paths.append(str(path))
    summary = outdir / "summary.yaml"
    artifacts.write_summary(summary, traj, echo)
    manifest.summary_path = str(summary)
    return manifest


def cmd_verify(suite: str):
    """Run a named verification suite; returns (lines, all_passed)."""
    if suite == "structure":
        checks = _verify_structure()
    elif suite == "solitons":
        checks = _verify_solitons()
    elif suite == "monitors":
        checks = _verify_monitors()
    else:
        raise AffineFlowError(f"unknown verify suite {suite!r}")
    lines = []
    ok = True
    for name, passed, value, threshold in checks:
        ok = ok and passed
        tag = "PASS" if passed else "FAIL"
        lines.append(f"{tag} {suite}/{name} value={value:.3e} "
                     f"threshold={threshold:.3e}")
    return lines, ok


_STRUCTURE_CASES = (
    ("sphere", {"r": 1.0}, (0.1, -0.05)),
    ("ellipsoid", {"a": 1.2, "b": 1.0, "c": 0.8}, (0.1, 0.05)),
    ("paraboloid", {}, (0.2, -0.1)),
    ("hyperboloid", {}, (0.15, 0.1)),
)


def _verify_structure():
    checks = []
    for name, params, x in _STRUCTURE_CASES:
        oracle = make_oracle(name, n=2, params=params)
        res = check_structure(oracle, np.array(x))
        checks.append((f"{name}.residuals", res.max_residual() <= 1e-6,
                       res.max_residual(), 1e-6))
        fr = affine_frame_at(oracle, np.array(x))
        checks.append((f"{name}.cubic_norm", fr.C_norm_sq <= 1e-10,
                       fr.C_norm_sq, 1e-10))
    return checks


def _soliton_cases():
    return (
        (solitons.SolitonSpec("sphere", 1, {"r0": 1.0}), (-1.5, 1.5), (0.05, 0.6)),
        (solitons.SolitonSpec("sphere", 2, {"r0": 1.0}), (-1.5, 1.5), (0.05, 0.5)),
        (solitons.SolitonSpec("ellipsoid", 2, {"t0": -1.0}), (-1.5, 1.5), (0.05, 0.8)),
        (solitons.SolitonSpec("paraboloid", 1), (-2.0, 2.0), (0.0, 1.0)),
        (solitons.SolitonSpec("paraboloid", 2), (-2.0, 2.0), (0.0, 1.0)),
        (solitons.SolitonSpec("calabi", 1), (-2.0, -0.3), (0.2, 1.0)),
        (solitons.SolitonSpec("calabi", 2), (-2.0, -0.3), (0.2, 1.0)),
    )


def _verify_solitons(samples: int = 100):
    rng = np.random.default_rng(20240901)
    checks = []
    for spec, (ylo, yhi), (tlo, thi) in _soliton_cases():
        worst = 0.0
        for _ in range(samples):
            y = rng.uniform(ylo, yhi, size=spec.n)
            t = rng.uniform(tlo, thi)
            worst = max(worst, abs(solitons.flow_residual(spec, y, t)))
        label = f"{spec.kind}_n{spec.n}.flow_residual"
        checks.append((label, worst <= 1e-6, worst, 1e-6))
    return checks


def _exact_trajectory(spec, bounds, resolution, times):
    traj = flow.FlowTrajectory()
    for t in times:
        traj.snapshots.append(
            solitons.soliton_support_grid(spec, bounds, resolution, t))
    traj.status = "completed"
    return traj


def _verify_monitors():
    checks = []
    # Nested spheres stay nested (lockstep runs).
    base = dict(n=1, bounds=((-2.0, 2.0),), resolution=(65,), t_end=0.2,
                snapshot_every=0.05, boundary_mode="exact-soliton")
    cfg1 = flow.FlowConfig(initial=flow.InitialSpec(
        "soliton", solitons.SolitonSpec("sphere", 1, {"r0": 0.8})), **base)
    cfg2 = flow.FlowConfig(initial=flow.InitialSpec(
        "soliton", solitons.SolitonSpec("sphere", 1, {"r0": 1.0})), **base)
    t1, t2 = flow.run_pair(cfg1, cfg2)
    rep = monitors.containment_monitor(t1, t2)
    checks.append(("containment.nested_spheres", rep.passed,
                   max(rep.samples), 1e-10))
    # Speed envelope exponent on exact sphere trajectories.
    for n, bounds, res in ((1, ((-1.0, 1.0),), (41,)),
                           (2, ((-1.0, 1.0), (-1.0, 1.0)), (21, 21))):
        spec = solitons.SolitonSpec("sphere", n, {"r0": 1.0})
        t_upper = 0.55 * solitons.extinction_time(1.0, n)
        times = np.linspace(0.01, t_upper, 24)
        traj = _exact_trajectory(spec, bounds, res, times)
        rep = monitors.andrews_speed_monitor(traj, r=0.5)
        target = n / (2.0 * n + 2.0)
        err = abs(rep.fitted["slope"] + target)
        checks.append((f"andrews.sphere_n{n}_exponent", rep.passed, err, 0.15))
    # Pogorelov quantity stays bounded on the translator.
    spec = solitons.SolitonSpec("paraboloid", 2)
    times = np.linspace(0.2, 1.0, 9)
    traj = _exact_trajectory(spec, ((-2.0, 2.0), (-2.0, 2.0)), (33, 33), times)
    rep = monitors.gh_monitor(traj, beta=(1.0, 0.0))
    checks.append(("gh.translator_bounded", rep.passed, rep.worst_ratio, 1.0))
    # Cubic decay on an exact circle trajectory (quadric: |C|^2 ~ 0).
    spec = solitons.SolitonSpec("sphere", 1, {"r0": 1.0})
    times = np.linspace(0.1, 0.4, 4)
    traj = _exact_trajectory(spec, ((-2.0, 2.0),), (129,), times)
    rep = monitors.cubic_decay_monitor(traj)
    checks.append(("cubic_decay.circle", rep.passed, rep.worst_ratio, 1.0))
    return checks


# ---------------------------------------------------------------------------
# argparse plumbing
# ---------------------------------------------------------------------------

def _parse_point(text: str) -> np.ndarray:
    return np.array([float(tok) for tok in text.replace(",", " ").split()])


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="affineflow",
                                 description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p_flow = sub.add_parser("flow", help="flow solver runs")
    flow_sub = p_flow.add_subparsers(dest="flow_command", required=True)
    p_run = flow_sub.add_parser("run", help="run a configured flow")
    p_run.add_argument("config", help="path to a YAML config")
    p_run.add_argument("-o", "--output", default=None,
                       help=f"output directory (default: ${OUTPUT_ROOT_ENV} "
                            "or cwd, plus the config stem)")

    p_sol = sub.add_parser("soliton", help="closed-form catalog")
    sol_sub = p_sol.add_subparsers(dest="soliton_command", required=True)
    p_eval = sol_sub.add_parser("eval", help="evaluate a catalog entry")
    p_eval.add_argument("name", choices=solitons.KINDS)
    p_eval.add_argument("--t", type=float, required=True)
    p_eval.add_argument("--y", type=float, nargs="*", default=None)
    p_eval.add_argument("--n", type=int, default=1)
    p_eval.add_argument("--r0", type=float, default=None)
    p_eval.add_argument("--t0", type=float, default=None)

    p_geom = sub.add_parser("geometry", help="patch-oracle checks")
    geom_sub = p_geom.add_subparsers(dest="geometry_command", required=True)
    p_check = geom_sub.add_parser("check", help="structure residuals at a point")
    p_check.add_argument("oracle", choices=oracle_names())
    p_check.add_argument("--at", required=True,
                         help="parameter point, e.g. '0.1,-0.05'")
    p_check.add_argument("--n", type=int, default=2)
    p_check.add_argument("--params", default=None,
                         help="oracle parameters as YAML, e.g. 'r: 2.0'")

    p_verify = sub.add_parser("verify", help="named verification suites")
    p_verify.add_argument("suite", choices=("structure", "solitons", "monitors"))
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "flow":
            if args.output is None:
                root = Path(os.environ.get(OUTPUT_ROOT_ENV, "."))
                outdir = root / Path(args.config).stem
            else:
                outdir = Path(args.output)
            manifest = cmd_flow(args.config, outdir)
            print(yaml.safe_dump(manifest.as_dict(), sort_keys=False), end="")
            return 0 if manifest.status in ("completed", "extinct") else 1
        if args.command == "soliton":
            return _run_soliton_eval(args)
        if args.command == "geometry":
            point = _parse_point(args.at)
            params = yaml.safe_load(args.params) if args.params else {}
            oracle = make_oracle(args.oracle, n=args.n, params=params or {})
            res = check_structure(oracle, point)
            fr = affine_frame_at(oracle, point)
            print(yaml.safe_dump({
                "oracle": args.oracle,
                "at": [float(v) for v in point],
                "residuals": {
                    "apolarity": float(res.apolarity),
                    "laplace": float(res.laplace),
                    "codazzi_A": float(res.codazzi_A),
                    "codazzi_C": float(res.codazzi_C),
                    "volume_form": float(res.volume_form),
                },
                "cubic_norm_sq": float(fr.C_norm_sq),
                "affine_mean_curvature": float(fr.H),
            }, sort_keys=False), end="")
            return 0
        if args.command == "verify":
            lines, ok = cmd_verify(args.suite)
            print("\n".join(lines))
            return 0 if ok else 1
    except AffineFlowError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


def _run_soliton_eval(args) -> int:
    params = {}
    if args.name == "sphere":
        params["r0"] = 1.0 if args.r0 is None else args.r0
    if args.name == "ellipsoid":
        params["t0"] = -1.0 if args.t0 is None else args.t0
    spec = solitons.SolitonSpec(args.name, args.n, params)
    out = {"soliton": args.name, "n": args.n, "t": args.t}
    if args.name in ("sphere", "ellipsoid"):
        out["radius"] = spec.radius(args.t)
        if args.name == "sphere":
            out["extinction_time"] = solitons.extinction_time(params["r0"], args.n)
    if args.name == "calabi":
        out["level"] = solitons.calabi_level(args.t, args.n)
    if args.y is not None:
        if len(args.y) != args.n:
            raise AffineFlowError(f"--y needs {args.n} coordinates")
        out["support"] = float(solitons.slice_support(
            spec, np.array(args.y), args.t))
    print(yaml.safe_dump(out, sort_keys=False), end="")
    return 0


if __name__ == "__main__":
    sys.exit(main())
