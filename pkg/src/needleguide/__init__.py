"""needleguide: simulation and planning for a stacked-Cartesian needle guide.

The mechanism this package models is a pair of XY carriages stacked 45.7 mm
apart, each carrying a spherical bearing; a needle guide threaded through
both bearings points wherever the relative carriage displacement sends it
(up to a 30 degree incline), and translates wherever the common displacement
sends it (55 x 30 mm of travel). Pneumatic cylinders with bang-bang valve
control drive the stages one at a time.

What lives where:

* geometry      frames, rigid transforms, point-set registration
* kinematics    entry/target line -> carriage pose and back, incline math
* axis          bang-bang single-stage simulation (valves, encoder, coast)
* robot         four stages plus a common clock
* planner       alternating one-stage-at-a-time moving strategy with an
                incline guard
* workspace     analytic reachable-volume membership, STL meshes, coverage
* evaluation    the free-space targeting experiment with a seeded error model
* service       HTTP + server-sent-events control API
* cli           command-line front end (needleguide <subcommand>)

Quick taste::

    from needleguide import (RobotParams, TargetPlan, Point3,
                             solve_inverse_kinematics)

    plan = TargetPlan(Point3(20.0, 10.0, 0.0), Point3(-20.0, -10.0, -100.0))
    pose = solve_inverse_kinematics(plan, RobotParams())
    # pose.x_u, pose.y_u = 5.4, 2.7; pose.x_l, pose.y_l = -12.88, -6.44

All lengths are millimetres, all angles degrees, z points up, and both
bearing planes sit at negative z below the robot origin.
"""

__version__ = "0.1.0"

from .axis import AxisId, AxisParams, AxisState, Valve, settle, simulate_move, tick
from .config import RobotConfig, load_robot_config, save_robot_config
from .errors import NeedleGuideError
from .geometry import (
    FiducialSet,
    Point3,
    RegistrationResult,
    RigidTransform,
    Vec3,
    fiducials_from_json,
    fit_rigid_transform,
)
from .kinematics import (
    CarriagePose,
    IkSolution,
    NeedleLine,
    RobotParams,
    TargetPlan,
    evaluate_plan,
    forward_kinematics,
    incline_deg,
    project_to_plane,
    solve_inverse_kinematics,
)
from .planner import MoveResult, PlanStep, execute_plan, plan_step, write_step_log
from .robot import RobotSim
from .evaluation import (
    ErrorModel,
    EvalReport,
    TargetGridSpec,
    run_experiment,
)
from .workspace import (
    TriMesh,
    WorkspaceCloud,
    coverage_ratio,
    ellipsoid_mesh,
    load_stl,
    reachable_mask,
    sample_workspace,
    save_stl,
)

__all__ = [
    "AxisId",
    "AxisParams",
    "AxisState",
    "CarriagePose",
    "ErrorModel",
    "EvalReport",
    "FiducialSet",
    "IkSolution",
    "MoveResult",
    "NeedleGuideError",
    "NeedleLine",
    "PlanStep",
    "Point3",
    "RegistrationResult",
    "RigidTransform",
    "RobotConfig",
    "RobotParams",
    "RobotSim",
    "TargetGridSpec",
    "TargetPlan",
    "TriMesh",
    "Valve",
    "Vec3",
    "WorkspaceCloud",
    "coverage_ratio",
    "ellipsoid_mesh",
    "evaluate_plan",
    "execute_plan",
    "fiducials_from_json",
    "fit_rigid_transform",
    "forward_kinematics",
    "incline_deg",
    "load_robot_config",
    "load_stl",
    "plan_step",
    "project_to_plane",
    "reachable_mask",
    "run_experiment",
    "sample_workspace",
    "save_robot_config",
    "save_stl",
    "settle",
    "simulate_move",
    "solve_inverse_kinematics",
    "tick",
    "write_step_log",
]
