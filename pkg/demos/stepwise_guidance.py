# Drive the guide to a target pose one axis at a time and print the step
# schedule the planner produced.

import numpy as np

from needleguide.config import RobotConfig
from needleguide.geometry import Point3
from needleguide.kinematics import CarriagePose, RobotParams, TargetPlan, evaluate_plan
from needleguide.planner import execute_plan
from needleguide.robot import RobotSim

params = RobotParams()
plan = TargetPlan(Point3(10.0, 5.0, 0.0), Point3(-5.0, -8.0, -120.0))
sol = evaluate_plan(plan, params)
print(f"target pose {np.round(sol.pose.as_array(), 4)}  "
      f"incline {sol.incline_deg:.3f} deg")

robot = RobotSim(RobotConfig.default())
result = execute_plan(robot, sol.pose, dt=0.1)

print(f"\n{'step':>4} {'t [s]':>8} {'axis':>8} {'delta [mm]':>11} "
      f"{'incline [deg]':>14} {'settle [s]':>11}")
for i, step in enumerate(result.steps):
    print(f"{i:>4} {step.t_s:>8.1f} {step.axis.name.lower():>8} "
          f"{step.delta_mm:>11.3f} {step.incline_deg:>14.3f} "
          f"{step.settle_s:>11.1f}")

print(f"\nreached: {result.reached} after {result.elapsed_s:.1f} s of axis time")
print(f"final true pose    {np.round(result.final_pose.as_array(), 3)}")
print(f"final encoder pose {np.round(result.final_encoder_pose.as_array(), 3)}")
print(f"worst incline while moving: {result.max_incline_deg:.3f} deg")

# a pose change where x must grow while y is still deflected: unguarded,
# the transient carriage offset exceeds what the bearings allow
start = CarriagePose(8.5, 7.1, -8.5, -7.1)
goal = CarriagePose(13.0, -2.0, -13.0, 2.0)
guarded = execute_plan(RobotSim(RobotConfig.default(), start=start), goal, dt=0.1)
free = execute_plan(
    RobotSim(RobotConfig.default(), start=start), goal, dt=0.1, guard=False
)
print(f"\nnear-limit sweep, guard on : {len(guarded.steps)} steps, "
      f"max incline {guarded.max_incline_deg:.2f} deg")
print(f"near-limit sweep, guard off: {len(free.steps)} steps, "
      f"max incline {free.max_incline_deg:.2f} deg (past the 30 deg bearing limit)")
