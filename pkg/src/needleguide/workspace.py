"""Reachable-volume analysis and organ-coverage estimation.

A target point p at depth d below the lower bearing plane is reachable when
some carriage pair (u, l) can put the guide line through it:

    p = l + k (l - u),   k = d / bearing_span

with both carriages inside their travel rectangles and the relative
displacement u - l inside the incline disk. Writing D = u - l this becomes a
2-D feasibility problem: D must lie in the box implied by l = p + kD being in
the travel rectangle, in the box implied by u = p + (1+k)D being in it, and
in the disk |D| <= span*tan(max incline). Intersecting two axis-aligned boxes
and testing the disk distance gives an exact membership predicate, no
sampling needed. The minimum-norm D in that region is also the minimum-
incline pose for the point, which is what the sampler stores.

The organ-coverage path voxelises a closed surface mesh (STL) and asks the
same predicate for every interior voxel centre.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Tuple

import numpy as np

from .errors import EmptyWorkspace, OpenMesh, ZeroVolume
from .kinematics import RobotParams, incline_from_rel


# ---------------------------------------------------------------------------
# analytic membership


def min_incline_offsets(
    points_xy: np.ndarray, depths_mm: np.ndarray, params: RobotParams
) -> Tuple[np.ndarray, np.ndarray]:
    """Feasibility and minimum-norm relative displacement for target points.

    points_xy: (N,2) lateral coordinates; depths_mm: scalar or (N,) depth
    below the lower bearing plane (>= 0). Returns (mask (N,), rel (N,2))
    where rel is the minimum-incline carriage offset u - l for feasible
    points (zeros where infeasible).
    """
    p = np.atleast_2d(np.asarray(points_xy, dtype=float))
    d = np.broadcast_to(np.asarray(depths_mm, dtype=float), p.shape[:1]).copy()
    if np.any(d < 0):
        raise ValueError("depth below the lower bearing plane must be >= 0")
    span = params.bearing_span_mm
    k = d / span
    lo = np.array([params.x_range[0], params.y_range[0]])
    hi = np.array([params.x_range[1], params.y_range[1]])
    r_max = params.max_rel_displacement_mm

    rel = np.zeros_like(p)
    mask = np.zeros(p.shape[0], dtype=bool)

    flat = k == 0.0
    if np.any(flat):
        # Depth zero: the point must simply be under the lower carriage.
        mask[flat] = np.all((p[flat] >= lo) & (p[flat] <= hi), axis=1)

    deep = ~flat
    if np.any(deep):
        kk = k[deep, None]
        pp = p[deep]
        # l = p + k D in [lo, hi]  and  u = p + (1+k) D in [lo, hi]
        box_lo = np.maximum((lo - pp) / kk, (lo - pp) / (1.0 + kk))
        box_hi = np.minimum((hi - pp) / kk, (hi - pp) / (1.0 + kk))
        nonempty = np.all(box_lo <= box_hi, axis=1)
        nearest = np.clip(0.0, box_lo, box_hi)
        ok = nonempty & (np.linalg.norm(nearest, axis=1) <= r_max)
        mask[deep] = ok
        idx = np.flatnonzero(deep)[ok]
        rel[idx] = nearest[ok]
    return mask, rel


def reachable_mask(points_xy, depths_mm, params: RobotParams) -> np.ndarray:
    mask, _ = min_incline_offsets(points_xy, depths_mm, params)
    return mask


def lateral_extent_mm(depth_mm: float, params: RobotParams) -> Tuple[float, float]:
    """Max |x| and |y| reachable at a depth (axis directions, not corners)."""
    reach = depth_mm * np.tan(np.radians(params.max_incline_deg))
    return (
        params.travel_x_mm / 2.0 + reach,
        params.travel_y_mm / 2.0 + reach,
    )


# ---------------------------------------------------------------------------
# sampled cloud


@dataclass(frozen=True)
class WorkspaceCloud:
    """Grid sample of the reachable volume with a generating pose per point."""

    params: RobotParams
    depth_range_mm: Tuple[float, float]
    resolution_mm: float
    points: np.ndarray  # (N,3) robot frame
    poses: np.ndarray  # (N,4) x_u, y_u, x_l, y_l realising each point
    inclines_deg: np.ndarray  # (N,)

    def __len__(self) -> int:
        return self.points.shape[0]


def sample_workspace(
    params: RobotParams,
    depth_range_mm: Tuple[float, float] = (0.0, 100.0),
    resolution_mm: float = 2.0,
) -> WorkspaceCloud:
    """Sample reachable target points on depth planes below the lower bearing.

    Planes are spaced `resolution_mm` apart across depth_range_mm (inclusive),
    each gridded laterally at the same pitch. Every stored point carries the
    minimum-incline pose that realises it.
    """
    d0, d1 = depth_range_mm
    if d1 < d0 or d0 < 0:
        raise ValueError("depth range must satisfy 0 <= min <= max")
    if resolution_mm <= 0:
        raise ValueError("resolution must be positive")
    depths = np.arange(d0, d1 + 0.5 * resolution_mm, resolution_mm)

    pts, poses, incs = [], [], []
    for d in depths:
        ext_x, ext_y = lateral_extent_mm(d, params)
        xs = np.arange(-ext_x, ext_x + 0.5 * resolution_mm, resolution_mm)
        ys = np.arange(-ext_y, ext_y + 0.5 * resolution_mm, resolution_mm)
        gx, gy = np.meshgrid(xs, ys, indexing="ij")
        grid = np.column_stack([gx.ravel(), gy.ravel()])
        mask, rel = min_incline_offsets(grid, d, params)
        if not np.any(mask):
            continue
        g = grid[mask]
        rel = rel[mask]
        k = d / params.bearing_span_mm
        lower = g + k * rel
        upper = g + (1.0 + k) * rel
        z = params.z_lower_mm - d
        pts.append(np.column_stack([g, np.full(len(g), z)]))
        poses.append(np.column_stack([upper[:, 0], upper[:, 1], lower[:, 0], lower[:, 1]]))
        incs.append(incline_from_rel(rel, params.bearing_span_mm))

    if not pts:
        raise EmptyWorkspace("no reachable point in the requested depth range")
    return WorkspaceCloud(
        params=params,
        depth_range_mm=(float(d0), float(d1)),
        resolution_mm=float(resolution_mm),
        points=np.vstack(pts),
        poses=np.vstack(poses),
        inclines_deg=np.concatenate(incs),
    )


def cloud_to_csv(path, cloud: WorkspaceCloud) -> None:
    data = np.column_stack([cloud.points, cloud.poses, cloud.inclines_deg])
    header = "x_mm,y_mm,z_mm,x_u_mm,y_u_mm,x_l_mm,y_l_mm,incline_deg"
    np.savetxt(path, data, delimiter=",", header=header, comments="", fmt="%.10g")


def cloud_to_json(path, cloud: WorkspaceCloud) -> None:
    doc = {
        "params": cloud.params.to_json_dict(),
        "depth_range_mm": list(cloud.depth_range_mm),
        "resolution_mm": cloud.resolution_mm,
        "points_mm": cloud.points.tolist(),
        "poses_mm": cloud.poses.tolist(),
        "inclines_deg": cloud.inclines_deg.tolist(),
    }
    Path(path).write_text(json.dumps(doc) + "\n")


# ---------------------------------------------------------------------------
# triangle meshes


@dataclass(frozen=True)
class TriMesh:
    vertices: np.ndarray  # (V,3)
    faces: np.ndarray  # (F,3) int indices

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        f = np.asarray(self.faces, dtype=np.int64)
        if v.ndim != 2 or v.shape[1] != 3 or f.ndim != 2 or f.shape[1] != 3:
            raise ValueError("mesh needs (V,3) vertices and (F,3) faces")
        if f.size and (f.min() < 0 or f.max() >= len(v)):
            raise ValueError("face index out of range")
        v.flags.writeable = False
        f.flags.writeable = False
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)

    def translated(self, offset) -> "TriMesh":
        return TriMesh(self.vertices + np.asarray(offset, dtype=float), self.faces)


def is_watertight(mesh: TriMesh) -> bool:
    """Every undirected edge shared by exactly two faces, once per direction."""
    if len(mesh.faces) == 0:
        return False
    f = mesh.faces
    directed = np.vstack(
        [f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]]
    )
    # Each directed edge must be unique and have its reverse present.
    keys = directed[:, 0] * (mesh.vertices.shape[0] + 1) + directed[:, 1]
    rev_keys = directed[:, 1] * (mesh.vertices.shape[0] + 1) + directed[:, 0]
    uniq, counts = np.unique(keys, return_counts=True)
    if np.any(counts != 1):
        return False
    return np.all(np.isin(rev_keys, uniq))


def signed_volume_mm3(mesh: TriMesh) -> float:
    v = mesh.vertices
    a, b, c = v[mesh.faces[:, 0]], v[mesh.faces[:, 1]], v[mesh.faces[:, 2]]
    return float(np.einsum("ij,ij->i", a, np.cross(b, c)).sum() / 6.0)


def check_mesh(mesh: TriMesh) -> TriMesh:
    """Validate closedness and orientation; returns an outward-wound mesh."""
    if not is_watertight(mesh):
        raise OpenMesh("mesh is not watertight")
    vol = signed_volume_mm3(mesh)
    if abs(vol) < 1e-6:
        raise ZeroVolume("mesh encloses no volume")
    if vol < 0:
        # Consistently inward-wound file: flip to the outward convention.
        return TriMesh(mesh.vertices, mesh.faces[:, [0, 2, 1]])
    return mesh


# Tiny fixed ray slant so voxel centres never hit triangle edges dead-on.
_RAY_DIR = np.array([1.3e-7, 2.9e-7, 1.0])


def contains(mesh: TriMesh, points: np.ndarray, chunk: int = 2048) -> np.ndarray:
    """Point-in-mesh test by ray-crossing parity. Mesh must be closed."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    v0 = mesh.vertices[mesh.faces[:, 0]]
    e1 = mesh.vertices[mesh.faces[:, 1]] - v0
    e2 = mesh.vertices[mesh.faces[:, 2]] - v0
    # Moller-Trumbore precomputation shared across the batch.
    pvec = np.cross(_RAY_DIR, e2)
    det = np.einsum("ij,ij->i", e1, pvec)
    ok = np.abs(det) > 1e-14
    inv_det = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)

    out = np.zeros(len(pts), dtype=bool)
    for start in range(0, len(pts), chunk):
        p = pts[start : start + chunk]
        tvec = p[:, None, :] - v0[None, :, :]  # (P,F,3)
        u = np.einsum("pfj,fj->pf", tvec, pvec) * inv_det
        qvec = np.cross(tvec, e1[None, :, :])
        vv = np.einsum("pfj,j->pf", qvec, _RAY_DIR) * inv_det
        t = np.einsum("pfj,fj->pf", qvec, e2) * inv_det
        hit = ok[None, :] & (u >= 0) & (vv >= 0) & (u + vv <= 1) & (t > 0)
        out[start : start + chunk] = hit.sum(axis=1) % 2 == 1
    return out


def voxelize(mesh: TriMesh, pitch_mm: float) -> np.ndarray:
    """Interior voxel centres on a regular grid aligned to the bounding box."""
    if pitch_mm <= 0:
        raise ValueError("pitch must be positive")
    lo = mesh.vertices.min(axis=0)
    hi = mesh.vertices.max(axis=0)
    axes = [np.arange(lo[i] + pitch_mm / 2.0, hi[i], pitch_mm) for i in range(3)]
    gx, gy, gz = np.meshgrid(*axes, indexing="ij")
    centers = np.column_stack([gx.ravel(), gy.ravel(), gz.ravel()])
    return centers[contains(mesh, centers)]


# ---------------------------------------------------------------------------
# STL I/O


def load_stl(path) -> TriMesh:
    """Read an STL file (binary or ASCII), merging exactly-equal vertices."""
    raw = Path(path).read_bytes()
    is_ascii = raw.lstrip()[:5] == b"solid" and b"facet" in raw[:1024]
    tris = _parse_ascii_stl(raw) if is_ascii else _parse_binary_stl(raw)
    verts: dict = {}
    faces = np.empty((len(tris), 3), dtype=np.int64)
    for i, tri in enumerate(tris):
        for j in range(3):
            key = tuple(tri[j])
            idx = verts.get(key)
            if idx is None:
                idx = len(verts)
                verts[key] = idx
            faces[i, j] = idx
    vertices = np.array(list(verts.keys()), dtype=float)
    return TriMesh(vertices, faces)


def _parse_binary_stl(raw: bytes) -> np.ndarray:
    if len(raw) < 84:
        raise ValueError("binary STL truncated")
    (n,) = struct.unpack_from("<I", raw, 80)
    need = 84 + 50 * n
    if len(raw) < need:
        raise ValueError(f"binary STL claims {n} facets but is too short")
    rec = np.frombuffer(raw, dtype=np.uint8, count=50 * n, offset=84).reshape(n, 50)
    data = rec[:, :48].copy().view("<f4").reshape(n, 12)
    return data[:, 3:12].astype(float).reshape(n, 3, 3)


def _parse_ascii_stl(raw: bytes) -> np.ndarray:
    tris = []
    cur = []
    for line in raw.decode("ascii", errors="replace").splitlines():
        parts = line.split()
        if parts[:1] == ["vertex"]:
            cur.append([float(x) for x in parts[1:4]])
            if len(cur) == 3:
                tris.append(cur)
                cur = []
    if not tris:
        raise ValueError("no facets found in ASCII STL")
    return np.array(tris, dtype=float)


def save_stl(path, mesh: TriMesh, name: str = "mesh") -> None:
    """Write binary STL (normals recomputed from winding)."""
    v = mesh.vertices
    a, b, c = v[mesh.faces[:, 0]], v[mesh.faces[:, 1]], v[mesh.faces[:, 2]]
    n = np.cross(b - a, c - a)
    lens = np.linalg.norm(n, axis=1, keepdims=True)
    n = np.divide(n, lens, out=np.zeros_like(n), where=lens > 0)
    rec = np.zeros((len(mesh.faces), 50), dtype=np.uint8)
    block = np.concatenate([n, a, b, c], axis=1).astype("<f4")
    rec[:, :48] = block.view(np.uint8).reshape(len(mesh.faces), 48)
    header = name.encode()[:80].ljust(80, b"\0")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(struct.pack("<I", len(mesh.faces)))
        fh.write(rec.tobytes())


def ellipsoid_mesh(
    semi_axes_mm, rings: int = 24, segments: int = 48, center=(0.0, 0.0, 0.0)
) -> TriMesh:
    """Closed UV-triangulated ellipsoid, useful as an organ stand-in."""
    a, b, c = (float(x) for x in semi_axes_mm)
    cx, cy, cz = (float(x) for x in center)
    verts = [(cx, cy, cz + c)]
    for i in range(1, rings):
        phi = np.pi * i / rings
        for j in range(segments):
            th = 2 * np.pi * j / segments
            verts.append(
                (
                    cx + a * np.sin(phi) * np.cos(th),
                    cy + b * np.sin(phi) * np.sin(th),
                    cz + c * np.cos(phi),
                )
            )
    verts.append((cx, cy, cz - c))
    south = len(verts) - 1
    faces = []
    ring = lambda i, j: 1 + (i - 1) * segments + (j % segments)  # noqa: E731
    for j in range(segments):
        faces.append((0, ring(1, j), ring(1, j + 1)))
    for i in range(1, rings - 1):
        for j in range(segments):
            faces.append((ring(i, j), ring(i + 1, j), ring(i + 1, j + 1)))
            faces.append((ring(i, j), ring(i + 1, j + 1), ring(i, j + 1)))
    for j in range(segments):
        faces.append((south, ring(rings - 1, j + 1), ring(rings - 1, j)))
    return check_mesh(TriMesh(np.array(verts), np.array(faces)))


def box_mesh(center, size) -> TriMesh:
    """Axis-aligned closed box (12 triangles)."""
    cx, cy, cz = (float(v) for v in center)
    sx, sy, sz = (float(v) / 2.0 for v in size)
    corners = np.array(
        [
            [cx - sx, cy - sy, cz - sz],
            [cx + sx, cy - sy, cz - sz],
            [cx + sx, cy + sy, cz - sz],
            [cx - sx, cy + sy, cz - sz],
            [cx - sx, cy - sy, cz + sz],
            [cx + sx, cy - sy, cz + sz],
            [cx + sx, cy + sy, cz + sz],
            [cx - sx, cy + sy, cz + sz],
        ]
    )
    faces = np.array(
        [
            [0, 2, 1], [0, 3, 2],  # bottom (outward = -z)
            [4, 5, 6], [4, 6, 7],  # top
            [0, 1, 5], [0, 5, 4],  # front
            [1, 2, 6], [1, 6, 5],  # right
            [2, 3, 7], [2, 7, 6],  # back
            [3, 0, 4], [3, 4, 7],  # left
        ]
    )
    return check_mesh(TriMesh(corners, faces))


# ---------------------------------------------------------------------------
# coverage


@dataclass(frozen=True)
class CoverageReport:
    ratio: float
    n_inside: int
    n_reachable: int
    voxel_pitch_mm: float
    standoff_mm: float


def coverage_ratio(
    cloud: WorkspaceCloud,
    organ: TriMesh,
    standoff_mm: float = 0.0,
    voxel_pitch_mm: float = 2.0,
) -> CoverageReport:
    """Fraction of organ volume reachable by the guide.

    The organ is shifted down by standoff_mm (mounting clearance), voxelised,
    and every interior voxel centre is tested with the analytic membership
    predicate at its own depth. Voxels above the lower bearing plane or
    beyond the cloud's depth range count as unreachable.
    """
    mesh = check_mesh(organ.translated((0.0, 0.0, -standoff_mm)))
    centers = voxelize(mesh, voxel_pitch_mm)
    n_inside = len(centers)
    if n_inside == 0:
        return CoverageReport(0.0, 0, 0, voxel_pitch_mm, standoff_mm)
    params = cloud.params
    depths = params.z_lower_mm - centers[:, 2]
    d0, d1 = cloud.depth_range_mm
    in_range = (depths >= d0) & (depths <= d1) & (depths >= 0)
    mask = np.zeros(n_inside, dtype=bool)
    if np.any(in_range):
        mask[in_range] = reachable_mask(
            centers[in_range, :2], depths[in_range], params
        )
    n_reach = int(mask.sum())
    return CoverageReport(
        ratio=n_reach / n_inside,
        n_inside=n_inside,
        n_reachable=n_reach,
        voxel_pitch_mm=voxel_pitch_mm,
        standoff_mm=standoff_mm,
    )
