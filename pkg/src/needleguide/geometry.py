"""Frames, rigid transforms, and point-set registration.

Conventions used throughout the package:

* Units are millimetres and degrees unless a name says otherwise.
* The robot frame has its origin on the needle-guide axis at the robot base,
  x along the wide (55 mm) travel, y along the short (30 mm) travel and z up,
  so both bearing planes and all insertion depths have negative z.
* A frame is a plain string tag ("robot", "mr", ...). Operations that mix
  two tagged quantities insist the tags match rather than guessing.

The registration here is the classic least-squares fit of a rotation and
translation to paired points (SVD of the cross-covariance with a determinant
correction so reflections are never returned).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    DegenerateFiducials,
    FrameMismatch,
    InsufficientPairs,
    ParallelToPlane,
)

ROBOT_FRAME = "robot"
MR_FRAME = "mr"

# Singular-value ratio below which a fiducial constellation is treated as
# collinear (rotation about the line unobservable).
_COLLINEAR_RTOL = 1e-6


def _as_xyz(value) -> np.ndarray:
    a = np.asarray(value, dtype=float)
    if a.shape != (3,):
        raise ValueError(f"expected 3 coordinates, got shape {a.shape}")
    return a


@dataclass(frozen=True)
class Point3:
    """A position, tagged with the frame it is expressed in."""

    x: float
    y: float
    z: float
    frame: str = ROBOT_FRAME

    @classmethod
    def from_xyz(cls, xyz, frame: str = ROBOT_FRAME) -> "Point3":
        x, y, z = _as_xyz(xyz)
        return cls(float(x), float(y), float(z), frame)

    @property
    def xyz(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])

    def require_frame(self, frame: str) -> None:
        if self.frame != frame:
            raise FrameMismatch(f"point is in frame {self.frame!r}, need {frame!r}")


@dataclass(frozen=True)
class Vec3:
    """A direction, tagged with its frame. Not automatically normalised."""

    x: float
    y: float
    z: float
    frame: str = ROBOT_FRAME

    @classmethod
    def from_xyz(cls, xyz, frame: str = ROBOT_FRAME) -> "Vec3":
        x, y, z = _as_xyz(xyz)
        return cls(float(x), float(y), float(z), frame)

    @property
    def xyz(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.xyz))

    def unit(self) -> "Vec3":
        n = self.norm
        if n == 0.0:
            raise ValueError("cannot normalise a zero vector")
        return Vec3(self.x / n, self.y / n, self.z / n, self.frame)


def _check_rotation(rot: np.ndarray) -> None:
    if rot.shape != (3, 3):
        raise ValueError(f"rotation must be 3x3, got {rot.shape}")
    err = np.abs(rot @ rot.T - np.eye(3)).max()
    if err > 1e-9:
        raise ValueError(f"matrix is not orthonormal (max deviation {err:.3g})")
    if np.linalg.det(rot) < 0.0:
        raise ValueError("matrix is a reflection, not a rotation")


@dataclass(frozen=True)
class RigidTransform:
    """Maps points from frame `src` to frame `dst`: p_dst = R @ p_src + t."""

    rotation: np.ndarray
    translation: np.ndarray
    src: str = MR_FRAME
    dst: str = ROBOT_FRAME

    def __post_init__(self):
        rot = np.array(self.rotation, dtype=float)
        t = _as_xyz(self.translation)
        _check_rotation(rot)
        rot.flags.writeable = False
        t.flags.writeable = False
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls, src: str = MR_FRAME, dst: str = ROBOT_FRAME) -> "RigidTransform":
        return cls(np.eye(3), np.zeros(3), src, dst)

    def apply(self, point: Point3) -> Point3:
        point.require_frame(self.src)
        return Point3.from_xyz(self.apply_xyz(point.xyz), self.dst)

    def apply_vec(self, vec: Vec3) -> Vec3:
        if vec.frame != self.src:
            raise FrameMismatch(f"vector is in frame {vec.frame!r}, need {self.src!r}")
        return Vec3.from_xyz(self.rotation @ vec.xyz, self.dst)

    def apply_xyz(self, xyz: np.ndarray) -> np.ndarray:
        """Apply to an (..., 3) array of raw coordinates (no frame checks)."""
        a = np.asarray(xyz, dtype=float)
        return a @ self.rotation.T + self.translation

    def inverse(self) -> "RigidTransform":
        rot = self.rotation.T
        return RigidTransform(rot, -rot @ self.translation, self.dst, self.src)

    def compose(self, first: "RigidTransform") -> "RigidTransform":
        """Return self o first (apply `first`, then self)."""
        if first.dst != self.src:
            raise FrameMismatch(
                f"cannot compose: inner maps to {first.dst!r}, outer expects {self.src!r}"
            )
        return RigidTransform(
            self.rotation @ first.rotation,
            self.rotation @ first.translation + self.translation,
            first.src,
            self.dst,
        )


@dataclass(frozen=True)
class FiducialSet:
    """Paired fiducial coordinates, image-space and robot-space, row-aligned."""

    mr: np.ndarray
    robot: np.ndarray

    def __post_init__(self):
        mr = np.atleast_2d(np.asarray(self.mr, dtype=float))
        rb = np.atleast_2d(np.asarray(self.robot, dtype=float))
        if mr.shape != rb.shape or mr.shape[1] != 3:
            raise ValueError(f"pair arrays must both be (N,3), got {mr.shape} / {rb.shape}")
        mr.flags.writeable = False
        rb.flags.writeable = False
        object.__setattr__(self, "mr", mr)
        object.__setattr__(self, "robot", rb)

    def __len__(self) -> int:
        return self.mr.shape[0]


def fiducials_from_json(source) -> FiducialSet:
    """Load fiducial pairs from a JSON document.

    Accepts a path, a JSON string, or an already-parsed dict shaped
    ``{"pairs": [{"mr": [x,y,z], "robot": [x,y,z]}, ...]}``.
    """
    if isinstance(source, (str, Path)):
        p = Path(source)
        text = p.read_text() if p.exists() else str(source)
        doc = json.loads(text)
    else:
        doc = source
    try:
        pairs = doc["pairs"]
        mr = np.array([_as_xyz(pair["mr"]) for pair in pairs])
        robot = np.array([_as_xyz(pair["robot"]) for pair in pairs])
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed fiducial document: {exc}") from exc
    if len(pairs) == 0:
        raise InsufficientPairs("fiducial document contains no pairs")
    return FiducialSet(mr, robot)


def fiducials_to_json(fids: FiducialSet) -> str:
    pairs = [
        {"mr": list(map(float, m)), "robot": list(map(float, r))}
        for m, r in zip(fids.mr, fids.robot)
    ]
    return json.dumps({"pairs": pairs}, indent=2)


def _check_not_collinear(centered: np.ndarray, label: str) -> None:
    # Rank of the centered cloud: collinear points have one dominant singular
    # value; rotation about that line would be unobservable.
    s = np.linalg.svd(centered, compute_uv=False)
    if s[0] == 0.0 or s[1] < _COLLINEAR_RTOL * s[0]:
        raise DegenerateFiducials(f"{label} fiducials are collinear (or coincident)")


@dataclass(frozen=True)
class RegistrationResult:
    transform: RigidTransform
    rms_residual_mm: float
    residuals_mm: np.ndarray = field(repr=False)


def fit_rigid_transform(fids: FiducialSet) -> RegistrationResult:
    """Least-squares rigid registration of MR fiducials onto robot fiducials.

    Returns the transform mapping mr -> robot along with the per-pair and RMS
    residuals. Requires >= 3 pairs and a non-collinear constellation on both
    sides; reflections are excluded by construction.
    """
    if len(fids) < 3:
        raise InsufficientPairs(f"need at least 3 pairs, got {len(fids)}")
    mr_c = fids.mr.mean(axis=0)
    rb_c = fids.robot.mean(axis=0)
    a = fids.mr - mr_c
    b = fids.robot - rb_c
    _check_not_collinear(a, "mr")
    _check_not_collinear(b, "robot")

    h = a.T @ b
    u, _, vt = np.linalg.svd(h)
    d = np.sign(np.linalg.det(vt.T @ u.T))
    rot = vt.T @ np.diag([1.0, 1.0, d]) @ u.T
    t = rb_c - rot @ mr_c

    xform = RigidTransform(rot, t, src=MR_FRAME, dst=ROBOT_FRAME)
    resid = xform.apply_xyz(fids.mr) - fids.robot
    per_pair = np.linalg.norm(resid, axis=1)
    rms = float(np.sqrt(np.mean(per_pair**2)))
    return RegistrationResult(xform, rms, per_pair)


def line_plane_intersection_xyz(
    origin: np.ndarray, direction: np.ndarray, plane_z: float
) -> np.ndarray:
    """Intersect line(s) origin + s*direction with the plane z = plane_z.

    Vectorised over leading dimensions; raises ParallelToPlane when any
    direction has (near) zero z-component.
    """
    o = np.asarray(origin, dtype=float)
    d = np.asarray(direction, dtype=float)
    dz = d[..., 2]
    if np.any(np.abs(dz) < 1e-12):
        raise ParallelToPlane("line direction has no z component")
    s = (plane_z - o[..., 2]) / dz
    return o + s[..., None] * d


def line_plane_intersection(origin: Point3, direction: Vec3, plane_z: float) -> Point3:
    if origin.frame != direction.frame:
        raise FrameMismatch(
            f"origin frame {origin.frame!r} != direction frame {direction.frame!r}"
        )
    p = line_plane_intersection_xyz(origin.xyz, direction.xyz, plane_z)
    # Pin z exactly; the algebra can leave it a few ulp off the plane.
    return Point3(float(p[0]), float(p[1]), float(plane_z), origin.frame)


def point_plane_distance(point: Point3, plane_z: float) -> float:
    """Signed distance from the point to the horizontal plane z = plane_z."""
    return point.z - plane_z


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Uniform random rotation matrix (QR of a Gaussian with sign fix)."""
    m = rng.standard_normal((3, 3))
    q, r = np.linalg.qr(m)
    q = q @ np.diag(np.sign(np.diag(r)))
    if np.linalg.det(q) < 0:
        q[:, [0, 1]] = q[:, [1, 0]]
    return q


def small_rotation(axis: np.ndarray, angle_deg: float) -> np.ndarray:
    """Rotation matrix about `axis` by `angle_deg` (Rodrigues)."""
    ax = _as_xyz(axis)
    n = np.linalg.norm(ax)
    if n == 0.0:
        raise ValueError("rotation axis is zero")
    ax = ax / n
    th = np.radians(angle_deg)
    k = np.array(
        [[0.0, -ax[2], ax[1]], [ax[2], 0.0, -ax[0]], [-ax[1], ax[0], 0.0]]
    )
    return np.eye(3) + np.sin(th) * k + (1.0 - np.cos(th)) * (k @ k)
