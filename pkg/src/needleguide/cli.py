"""Command-line front end.

Every subcommand echoes its resolved configuration to stderr as one JSON line
(reproducibility) and writes results to stdout or to files. Errors print a
single machine-parseable line `error: <Type>: <message>` and exit nonzero.
"""

from __future__ import annotations

import argparse
import json
import re
import sys
from pathlib import Path

import numpy as np

from .axis import AxisState, simulate_move, write_trace_csv
from .config import AXIS_KEYS, RobotConfig, load_robot_config
from .errors import NeedleGuideError
from .evaluation import (
    ErrorModel,
    TargetGridSpec,
    report_to_csv,
    report_to_json,
    run_experiment,
)
from .geometry import Point3, fiducials_from_json, fit_rigid_transform
from .kinematics import (
    CarriagePose,
    TargetPlan,
    evaluate_plan,
    forward_kinematics,
    incline_deg,
)
from .planner import execute_plan, write_step_log
from .robot import RobotSim
from .workspace import (
    cloud_to_csv,
    cloud_to_json,
    coverage_ratio,
    load_stl,
    sample_workspace,
)

_KEY_TO_AXIS = {v: k for k, v in AXIS_KEYS.items()}

_NUM = r"-?(\d+(\.\d*)?|\.\d+)"


class _Parser(argparse.ArgumentParser):
    """ArgumentParser that accepts comma-joined negative coordinates.

    Stock argparse treats `--target -20,-10,-100` as a missing value followed
    by an unknown option. Widening the negative-number matcher lets tuples
    that start with a minus sign pass through as ordinary values.
    """

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self._negative_number_matcher = re.compile(f"^-({_NUM})(,{_NUM})*$")


def _xyz(text: str) -> np.ndarray:
    parts = [float(v) for v in text.split(",")]
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"expected x,y,z got {text!r}")
    return np.array(parts)


def _pose(text: str) -> CarriagePose:
    parts = [float(v) for v in text.split(",")]
    if len(parts) != 4:
        raise argparse.ArgumentTypeError(f"expected x_u,y_u,x_l,y_l got {text!r}")
    return CarriagePose(*parts)


def _load_config(args) -> RobotConfig:
    cfg = load_robot_config(args.config) if args.config else RobotConfig.default()
    echo = {"command": args.cmd, "config": cfg.to_json_dict()}
    for key in ("seed", "jobs", "depth_mm", "dt"):
        if hasattr(args, key):
            echo[key] = getattr(args, key)
    print(json.dumps(echo), file=sys.stderr)
    return cfg


def _print(doc) -> None:
    print(json.dumps(doc, indent=2))


def cmd_ik(args) -> int:
    cfg = _load_config(args)
    plan = TargetPlan(Point3.from_xyz(args.entry), Point3.from_xyz(args.target))
    sol = evaluate_plan(plan, cfg.params)
    _print(
        {
            "pose_mm": {
                "x_u": sol.pose.x_u,
                "y_u": sol.pose.y_u,
                "x_l": sol.pose.x_l,
                "y_l": sol.pose.y_l,
            },
            "incline_deg": sol.incline_deg,
            "feasible": sol.ok,
            "violations": [[n, a] for n, a in sol.violations],
        }
    )
    return 0 if sol.ok else 3


def cmd_fk(args) -> int:
    cfg = _load_config(args)
    line = forward_kinematics(args.pose, cfg.params)
    doc = {
        "origin_mm": list(line.origin.xyz),
        "direction": list(line.direction.xyz),
        "incline_deg": incline_deg(args.pose, cfg.params),
    }
    if args.plane_z is not None:
        doc["point_at_plane_mm"] = list(line.point_at_plane(args.plane_z).xyz)
    if args.depth is not None:
        z = cfg.params.z_lower_mm - args.depth
        doc["point_at_depth_mm"] = list(line.point_at_plane(z).xyz)
    _print(doc)
    return 0


def cmd_plan(args) -> int:
    cfg = _load_config(args)
    plan = TargetPlan(Point3.from_xyz(args.entry), Point3.from_xyz(args.target))
    sol = evaluate_plan(plan, cfg.params)
    if not sol.ok:
        print(
            f"error: Infeasible: {['%s over by %.3f' % (n, a) for n, a in sol.violations]}",
            file=sys.stderr,
        )
        return 3
    robot = RobotSim(cfg, start=args.start)
    result = execute_plan(robot, sol.pose, dt=args.dt)
    if args.out:
        write_step_log(args.out, result.steps)
    _print(
        {
            "pose_mm": list(sol.pose.as_array()),
            "incline_deg": sol.incline_deg,
            "reached": result.reached,
            "n_steps": len(result.steps),
            "elapsed_s": result.elapsed_s,
            "max_incline_deg": result.max_incline_deg,
            "final_pose_mm": list(result.final_pose.as_array()),
            "step_log": args.out,
        }
    )
    return 0


def cmd_run(args) -> int:
    cfg = _load_config(args)
    axis = _KEY_TO_AXIS[args.axis]
    params = cfg.axes[axis]
    state = AxisState(position_mm=args.start)
    trace, elapsed = simulate_move(params, state, args.to, dt=args.dt)
    if args.out:
        write_trace_csv(args.out, trace)
    _print(
        {
            "axis": args.axis,
            "from_mm": args.start,
            "to_mm": args.to,
            "elapsed_s": elapsed,
            "final_mm": state.position_mm,
            "error_mm": state.position_mm - args.to,
            "trace": args.out,
            "samples": len(trace),
        }
    )
    return 0


def cmd_workspace(args) -> int:
    cfg = _load_config(args)
    d0, d1 = (float(v) for v in args.depth_range.split(","))
    cloud = sample_workspace(cfg.params, (d0, d1), args.resolution)
    out = Path(args.out)
    if out.suffix == ".json":
        cloud_to_json(out, cloud)
    else:
        cloud_to_csv(out, cloud)
    _print(
        {
            "points": len(cloud),
            "depth_range_mm": [d0, d1],
            "resolution_mm": args.resolution,
            "out": str(out),
        }
    )
    return 0


def cmd_coverage(args) -> int:
    cfg = _load_config(args)
    d0, d1 = (float(v) for v in args.depth_range.split(","))
    cloud = sample_workspace(cfg.params, (d0, d1), args.resolution)
    organ = load_stl(args.mesh)
    rep = coverage_ratio(cloud, organ, standoff_mm=args.standoff, voxel_pitch_mm=args.pitch)
    _print(
        {
            "coverage": rep.ratio,
            "voxels_inside": rep.n_inside,
            "voxels_reachable": rep.n_reachable,
            "voxel_pitch_mm": rep.voxel_pitch_mm,
            "standoff_mm": rep.standoff_mm,
        }
    )
    return 0


def cmd_register(args) -> int:
    _load_config(args)
    fids = fiducials_from_json(Path(args.pairs))
    result = fit_rigid_transform(fids)
    _print(
        {
            "rms_residual_mm": result.rms_residual_mm,
            "residuals_mm": result.residuals_mm.tolist(),
            "rotation": result.transform.rotation.tolist(),
            "translation_mm": result.transform.translation.tolist(),
        }
    )
    return 0


def cmd_evaluate(args) -> int:
    cfg = _load_config(args)
    model = ErrorModel.ideal() if args.model == "ideal" else ErrorModel.calibrated()
    if args.ideal_axes:
        cfg = RobotConfig.ideal()
    report = run_experiment(
        config=cfg,
        model=model,
        grid=TargetGridSpec(),
        depth_mm=args.depth_mm,
        seed=args.seed,
        dt=args.dt,
        jobs=args.jobs,
    )
    if args.out:
        report_to_json(args.out, report)
    if args.csv:
        report_to_csv(args.csv, report)
    doc = report.to_json_dict()
    del doc["records"]
    _print(doc)
    return 0


def cmd_serve(args) -> int:
    cfg = _load_config(args)
    from .service import serve

    serve(cfg, host=args.host, port=args.port, time_scale=args.time_scale, seed=args.seed)
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(
        prog="needleguide",
        description="Plan, simulate and evaluate a stacked-Cartesian needle guide.",
    )
    sub = ap.add_subparsers(dest="cmd", required=True)

    def common(p):
        p.add_argument("--config", help="robot config JSON (defaults to bench values)")

    p = sub.add_parser("ik", help="carriage pose for an entry/target pair")
    common(p)
    p.add_argument("--entry", type=_xyz, required=True, metavar="X,Y,Z")
    p.add_argument("--target", type=_xyz, required=True, metavar="X,Y,Z")
    p.set_defaults(fn=cmd_ik)

    p = sub.add_parser("fk", help="needle line for a carriage pose")
    common(p)
    p.add_argument("--pose", type=_pose, required=True, metavar="XU,YU,XL,YL")
    p.add_argument("--plane-z", type=float, default=None)
    p.add_argument("--depth", type=float, default=None, help="mm below lower bearing")
    p.set_defaults(fn=cmd_fk)

    p = sub.add_parser("plan", help="plan and simulate a move to an entry/target pair")
    common(p)
    p.add_argument("--entry", type=_xyz, required=True, metavar="X,Y,Z")
    p.add_argument("--target", type=_xyz, required=True, metavar="X,Y,Z")
    p.add_argument("--start", type=_pose, default=CarriagePose.home(), metavar="XU,YU,XL,YL")
    p.add_argument("--dt", type=float, default=0.1)
    p.add_argument("--out", help="step log path (JSON lines)")
    p.set_defaults(fn=cmd_plan)

    p = sub.add_parser("run", help="simulate one stage move, optionally tracing CSV")
    common(p)
    p.add_argument("--axis", choices=sorted(_KEY_TO_AXIS), required=True)
    p.add_argument("--start", type=float, default=0.0)
    p.add_argument("--to", type=float, required=True)
    p.add_argument("--dt", type=float, default=0.1)
    p.add_argument("--out", help="trace CSV path")
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("workspace", help="sample the reachable volume to CSV/JSON")
    common(p)
    p.add_argument("--depth-range", default="0,100", metavar="MIN,MAX")
    p.add_argument("--resolution", type=float, default=2.0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_workspace)

    p = sub.add_parser("coverage", help="organ coverage ratio for an STL mesh")
    common(p)
    p.add_argument("--mesh", required=True)
    p.add_argument("--standoff", type=float, default=0.0, help="extra z offset, mm")
    p.add_argument("--depth-range", default="0,200", metavar="MIN,MAX")
    p.add_argument("--resolution", type=float, default=5.0)
    p.add_argument("--pitch", type=float, default=2.0, help="voxel pitch, mm")
    p.set_defaults(fn=cmd_coverage)

    p = sub.add_parser("register", help="fit a rigid transform to fiducial pairs")
    common(p)
    p.add_argument("--pairs", required=True, help="fiducial pairs JSON")
    p.set_defaults(fn=cmd_register)

    p = sub.add_parser("evaluate", help="run the free-space targeting experiment")
    common(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--depth-mm", type=float, default=80.0)
    p.add_argument("--dt", type=float, default=0.5)
    p.add_argument("--model", choices=["calibrated", "ideal"], default="calibrated")
    p.add_argument("--ideal-axes", action="store_true", help="error-free stages")
    p.add_argument("--out", help="full report JSON path")
    p.add_argument("--csv", help="per-trial CSV path")
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("serve", help="run the HTTP control service")
    common(p)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8040)
    p.add_argument("--time-scale", type=float, default=10.0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_serve)

    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except NeedleGuideError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
