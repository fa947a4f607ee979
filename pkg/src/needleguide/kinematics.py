"""Needle-guide kinematics for the stacked-Cartesian mechanism.

Two XY carriages ride at fixed heights z_upper and z_lower below the robot
origin; spherical bearings on each carriage constrain the needle guide to the
line through both bearing centres. Inverse kinematics therefore reduces to
evaluating the entry-target line at the two bearing planes, and forward
kinematics to rebuilding that line from the four stage positions.

The mechanism's only orientation limit is the spherical-bearing incline: the
angle between the guide and vertical, atan(relative carriage displacement /
bearing span). Travel limits are per-stage box constraints.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import List, Tuple

import numpy as np

from .errors import (
    DegeneratePlan,
    FrameMismatch,
    InclineExceeded,
    OutOfTravel,
    ParallelToPlane,
)
from .geometry import Point3, Vec3, line_plane_intersection_xyz

# Violations smaller than this are numerical fuzz, not infeasibility.
FEASIBILITY_TOL_MM = 1e-6


@dataclass(frozen=True)
class RobotParams:
    """Geometry of the guide mechanism. Lengths mm, angles degrees."""

    z_upper_mm: float = -36.5
    z_lower_mm: float = -82.2
    travel_x_mm: float = 55.0
    travel_y_mm: float = 30.0
    max_incline_deg: float = 30.0

    def __post_init__(self):
        if not self.z_upper_mm > self.z_lower_mm:
            raise ValueError("upper bearing plane must sit above the lower one")
        if self.travel_x_mm <= 0 or self.travel_y_mm <= 0:
            raise ValueError("travels must be positive")
        if not 0 < self.max_incline_deg < 90:
            raise ValueError("max incline must be in (0, 90) degrees")

    @property
    def bearing_span_mm(self) -> float:
        return self.z_upper_mm - self.z_lower_mm

    @property
    def x_range(self) -> Tuple[float, float]:
        return (-self.travel_x_mm / 2.0, self.travel_x_mm / 2.0)

    @property
    def y_range(self) -> Tuple[float, float]:
        return (-self.travel_y_mm / 2.0, self.travel_y_mm / 2.0)

    @property
    def max_rel_displacement_mm(self) -> float:
        """Carriage-to-carriage offset norm at the incline limit."""
        return self.bearing_span_mm * np.tan(np.radians(self.max_incline_deg))

    def to_json_dict(self) -> dict:
        return {
            "z_u_mm": self.z_upper_mm,
            "z_l_mm": self.z_lower_mm,
            "travel_x_mm": self.travel_x_mm,
            "travel_y_mm": self.travel_y_mm,
            "max_incline_deg": self.max_incline_deg,
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "RobotParams":
        return cls(
            z_upper_mm=float(doc.get("z_u_mm", -36.5)),
            z_lower_mm=float(doc.get("z_l_mm", -82.2)),
            travel_x_mm=float(doc.get("travel_x_mm", 55.0)),
            travel_y_mm=float(doc.get("travel_y_mm", 30.0)),
            max_incline_deg=float(doc.get("max_incline_deg", 30.0)),
        )


@dataclass(frozen=True)
class CarriagePose:
    """Stage positions of both carriages, mm in the robot frame."""

    x_u: float
    y_u: float
    x_l: float
    y_l: float

    def as_array(self) -> np.ndarray:
        return np.array([self.x_u, self.y_u, self.x_l, self.y_l])

    @classmethod
    def from_array(cls, a) -> "CarriagePose":
        x_u, y_u, x_l, y_l = np.asarray(a, dtype=float)
        return cls(float(x_u), float(y_u), float(x_l), float(y_l))

    @classmethod
    def home(cls) -> "CarriagePose":
        return cls(0.0, 0.0, 0.0, 0.0)

    def upper_point(self, params: RobotParams) -> Point3:
        return Point3(self.x_u, self.y_u, params.z_upper_mm)

    def lower_point(self, params: RobotParams) -> Point3:
        return Point3(self.x_l, self.y_l, params.z_lower_mm)

    def relative_displacement(self) -> np.ndarray:
        return np.array([self.x_u - self.x_l, self.y_u - self.y_l])


@dataclass(frozen=True)
class TargetPlan:
    """Desired needle line given by skin entry and target points."""

    entry: Point3
    target: Point3

    def __post_init__(self):
        if self.entry.frame != self.target.frame:
            raise FrameMismatch(
                f"entry frame {self.entry.frame!r} != target frame {self.target.frame!r}"
            )


@dataclass(frozen=True)
class NeedleLine:
    """Guide axis as origin + unit direction, pointing down (insertion)."""

    origin: Point3
    direction: Vec3

    def __post_init__(self):
        if self.origin.frame != self.direction.frame:
            raise FrameMismatch("needle line origin and direction frames differ")
        if abs(self.direction.norm - 1.0) > 1e-9:
            raise ValueError("needle direction must be a unit vector")
        if self.direction.z >= 0:
            raise ValueError("needle direction must point downward (z < 0)")

    def point_at_plane(self, plane_z: float) -> Point3:
        p = line_plane_intersection_xyz(self.origin.xyz, self.direction.xyz, plane_z)
        return Point3(float(p[0]), float(p[1]), float(plane_z), self.origin.frame)


def incline_from_rel(rel_xy, span_mm: float) -> np.ndarray:
    """Incline angle (deg) from relative carriage displacement, vectorised."""
    rel = np.asarray(rel_xy, dtype=float)
    r = np.linalg.norm(rel, axis=-1)
    return np.degrees(np.arctan2(r, span_mm))


def incline_deg(pose: CarriagePose, params: RobotParams) -> float:
    return float(incline_from_rel(pose.relative_displacement(), params.bearing_span_mm))


def ik_xy(entry_xyz, target_xyz, plane_z: float) -> np.ndarray:
    """Carriage xy at one bearing plane for entry/target point arrays.

    Evaluates the entry-target line at z = plane_z. Shapes (...,3) -> (...,2).
    """
    e = np.asarray(entry_xyz, dtype=float)
    t = np.asarray(target_xyz, dtype=float)
    dz = e[..., 2] - t[..., 2]
    if np.any(np.abs(dz) < 1e-12):
        raise ParallelToPlane("entry and target lie at the same height")
    frac = (plane_z - t[..., 2]) / dz
    return frac[..., None] * (e[..., :2] - t[..., :2]) + t[..., :2]


@dataclass(frozen=True)
class IkSolution:
    """IK output with feasibility annotations instead of silent clamping."""

    pose: CarriagePose
    incline_deg: float
    travel_ok: bool
    incline_ok: bool
    # (quantity, amount beyond the limit in its own unit), empty when feasible
    violations: List[Tuple[str, float]]

    @property
    def ok(self) -> bool:
        return self.travel_ok and self.incline_ok


def evaluate_plan(plan: TargetPlan, params: RobotParams) -> IkSolution:
    """Inverse kinematics with feasibility flags; never raises on violations.

    Degenerate inputs (coincident points, line parallel to the bearing
    planes) still raise since no pose exists at all.
    """
    e = plan.entry.xyz
    t = plan.target.xyz
    if np.linalg.norm(e - t) < 1e-9:
        raise DegeneratePlan("entry and target coincide")
    xy_u = ik_xy(e, t, params.z_upper_mm)
    xy_l = ik_xy(e, t, params.z_lower_mm)
    pose = CarriagePose(float(xy_u[0]), float(xy_u[1]), float(xy_l[0]), float(xy_l[1]))

    violations: List[Tuple[str, float]] = []
    half_x, half_y = params.travel_x_mm / 2.0, params.travel_y_mm / 2.0
    for name, value, half in (
        ("x_u", pose.x_u, half_x),
        ("y_u", pose.y_u, half_y),
        ("x_l", pose.x_l, half_x),
        ("y_l", pose.y_l, half_y),
    ):
        over = abs(value) - half
        if over > FEASIBILITY_TOL_MM:
            violations.append((name, over))
    travel_ok = not violations

    theta = incline_deg(pose, params)
    over_incline = theta - params.max_incline_deg
    incline_ok = over_incline <= FEASIBILITY_TOL_MM
    if not incline_ok:
        violations.append(("incline_deg", over_incline))

    return IkSolution(pose, theta, travel_ok, incline_ok, violations)


def solve_inverse_kinematics(plan: TargetPlan, params: RobotParams) -> CarriagePose:
    """Strict IK: returns the pose or raises OutOfTravel / InclineExceeded."""
    sol = evaluate_plan(plan, params)
    if not sol.travel_ok:
        worst = max((v for v in sol.violations if v[0] != "incline_deg"), key=lambda v: v[1])
        raise OutOfTravel(
            f"stage {worst[0]} exceeds travel by {worst[1]:.3f} mm",
            violations=sol.violations,
        )
    if not sol.incline_ok:
        raise InclineExceeded(
            f"incline {sol.incline_deg:.3f} deg exceeds limit "
            f"{params.max_incline_deg:.3f} deg",
            incline_deg=sol.incline_deg,
        )
    return sol.pose


def forward_kinematics(pose: CarriagePose, params: RobotParams) -> NeedleLine:
    """Needle axis through both bearing centres, direction pointing down."""
    up = np.array([pose.x_u, pose.y_u, params.z_upper_mm])
    lo = np.array([pose.x_l, pose.y_l, params.z_lower_mm])
    d = lo - up
    d = d / np.linalg.norm(d)
    return NeedleLine(Point3.from_xyz(up), Vec3.from_xyz(d))


def project_to_plane(pose: CarriagePose, params: RobotParams, plane_z: float) -> Point3:
    """Needle-axis intersection with a horizontal plane (e.g. target depth)."""
    return forward_kinematics(pose, params).point_at_plane(plane_z)
