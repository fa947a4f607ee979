# Solve carriage poses for a few entry/target pairs and look at the
# geometric error bounds of the two-plane guide.

import numpy as np

from needleguide.geometry import Point3
from needleguide.kinematics import (
    CarriagePose,
    RobotParams,
    TargetPlan,
    evaluate_plan,
    forward_kinematics,
    incline_deg,
    project_to_plane,
)

params = RobotParams()
print("guide geometry")
print(f"  upper bearing plane z = {params.z_upper_mm} mm")
print(f"  lower bearing plane z = {params.z_lower_mm} mm")
print(f"  bearing span          = {params.bearing_span_mm} mm")
print(f"  travel                = {params.travel_x_mm} x {params.travel_y_mm} mm")
print(f"  incline limit         = {params.max_incline_deg} deg "
      f"(max carriage offset {params.max_rel_displacement_mm:.4f} mm)")

plans = [
    TargetPlan(Point3(20.0, 10.0, 0.0), Point3(-20.0, -10.0, -100.0)),
    TargetPlan(Point3(0.0, 0.0, 0.0), Point3(0.0, 0.0, -120.0)),
    TargetPlan(Point3(10.0, 5.0, 0.0), Point3(-5.0, -8.0, -120.0)),
    # too steep: lateral throw larger than the bearing clearance allows
    TargetPlan(Point3(25.0, 14.0, 0.0), Point3(-25.0, -14.0, -60.0)),
]

print("\nentry -> target solutions")
for plan in plans:
    sol = evaluate_plan(plan, params)
    pose = sol.pose.as_array()
    if sol.ok:
        status = "ok"
    else:
        over = ", ".join(f"{name} by {amount:.2f}" for name, amount in sol.violations)
        status = f"infeasible ({over})"
    print(f"  entry {plan.entry.xyz} target {plan.target.xyz}")
    print(f"    pose (x_u y_u x_l y_l) = {np.round(pose, 4)}  "
          f"incline {sol.incline_deg:.4f} deg  {status}")
    if sol.ok:
        line = forward_kinematics(sol.pose, params)
        tip = line.point_at_plane(plan.target.z)
        print(f"    needle line re-hits target at {np.round(tip.xyz, 12)}")

# What does half a millimetre of opposed carriage error do at depth?
nominal = CarriagePose(0.0, 0.0, 0.0, 0.0)
worst = CarriagePose(0.5, 0.5, -0.5, -0.5)
plane_z = params.z_lower_mm - 100.0
tip_shift = np.linalg.norm(
    project_to_plane(worst, params, plane_z).xyz
    - project_to_plane(nominal, params, plane_z).xyz
)
print("\nworst-case carriage deviation of 0.5 mm per axis, opposed")
print(f"  tip shift 100 mm below the lower bearing: {tip_shift:.4f} mm")
print(f"  angular error: {incline_deg(worst, params):.5f} deg")
