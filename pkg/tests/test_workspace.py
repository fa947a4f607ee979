import json

import numpy as np
import pytest

from needleguide.errors import OpenMesh
from needleguide.kinematics import (
    CarriagePose,
    RobotParams,
    forward_kinematics,
    incline_deg,
)
from needleguide.workspace import (
    TriMesh,
    box_mesh,
    check_mesh,
    cloud_to_csv,
    cloud_to_json,
    contains,
    coverage_ratio,
    ellipsoid_mesh,
    is_watertight,
    lateral_extent_mm,
    load_stl,
    min_incline_offsets,
    reachable_mask,
    sample_workspace,
    save_stl,
    signed_volume_mm3,
    voxelize,
)

PARAMS = RobotParams()


def _brute_force_reachable(point_xy, depth, params, n=241):
    """Independent membership check: scan a grid of relative displacements."""
    if depth == 0.0:
        return (
            params.x_range[0] <= point_xy[0] <= params.x_range[1]
            and params.y_range[0] <= point_xy[1] <= params.y_range[1]
        )
    k = depth / params.bearing_span_mm
    r = params.max_rel_displacement_mm
    ds = np.linspace(-r, r, n)
    dx, dy = np.meshgrid(ds, ds)
    disk = dx**2 + dy**2 <= r**2 + 1e-9
    lx = point_xy[0] + k * dx
    ly = point_xy[1] + k * dy
    ux = point_xy[0] + (1 + k) * dx
    uy = point_xy[1] + (1 + k) * dy
    ok = (
        disk
        & (lx >= params.x_range[0])
        & (lx <= params.x_range[1])
        & (ux >= params.x_range[0])
        & (ux <= params.x_range[1])
        & (ly >= params.y_range[0])
        & (ly <= params.y_range[1])
        & (uy >= params.y_range[0])
        & (uy <= params.y_range[1])
    )
    return bool(ok.any())


def test_membership_matches_brute_force():
    rng = np.random.default_rng(31)
    pts = rng.uniform([-90, -75], [90, 75], size=(400, 2))
    depths = rng.uniform(0.0, 120.0, size=400)
    mask = reachable_mask(pts, depths, PARAMS)
    agree = 0
    for i in range(len(pts)):
        want = _brute_force_reachable(pts[i], depths[i], PARAMS)
        agree += mask[i] == want
    # the scan is itself discretised, so allow a sliver of disagreement
    assert agree >= 0.999 * len(pts)


def test_min_incline_offsets_are_feasible_and_minimal():
    rng = np.random.default_rng(77)
    pts = rng.uniform([-60, -45], [60, 45], size=(300, 2))
    depths = rng.uniform(1.0, 110.0, size=300)
    mask, rel = min_incline_offsets(pts, depths, PARAMS)
    span = PARAMS.bearing_span_mm
    for i in np.flatnonzero(mask):
        k = depths[i] / span
        l = pts[i] + k * rel[i]
        u = pts[i] + (1 + k) * rel[i]
        pose = CarriagePose(u[0], u[1], l[0], l[1])
        # generating pose hits the point
        line = forward_kinematics(pose, PARAMS)
        hit = line.point_at_plane(PARAMS.z_lower_mm - depths[i])
        assert np.allclose(hit.xyz[:2], pts[i], atol=1e-9)
        # within travel and incline budget
        assert PARAMS.x_range[0] - 1e-9 <= u[0] <= PARAMS.x_range[1] + 1e-9
        assert PARAMS.y_range[0] - 1e-9 <= l[1] <= PARAMS.y_range[1] + 1e-9
        assert np.linalg.norm(rel[i]) <= PARAMS.max_rel_displacement_mm + 1e-9
        # no interior displacement of smaller norm reaches the point: the
        # offset box is convex, so spot-check random feasible alternatives
        alt = rng.uniform(-1, 1, size=(50, 2)) * PARAMS.max_rel_displacement_mm
        la = pts[i] + k * alt
        ua = pts[i] + (1 + k) * alt
        ok = (
            (la >= [PARAMS.x_range[0], PARAMS.y_range[0]]).all(axis=1)
            & (la <= [PARAMS.x_range[1], PARAMS.y_range[1]]).all(axis=1)
            & (ua >= [PARAMS.x_range[0], PARAMS.y_range[0]]).all(axis=1)
            & (ua <= [PARAMS.x_range[1], PARAMS.y_range[1]]).all(axis=1)
        )
        if ok.any():
            assert np.linalg.norm(rel[i]) <= np.linalg.norm(alt[ok], axis=1).min() + 1e-9


def test_lateral_extent():
    x0, y0 = lateral_extent_mm(0.0, PARAMS)
    assert (x0, y0) == (27.5, 15.0)
    x, y = lateral_extent_mm(100.0, PARAMS)
    grow = 100.0 * np.tan(np.radians(30.0))
    assert np.isclose(x, 27.5 + grow)
    assert np.isclose(y, 15.0 + grow)
    # extreme lateral points are actually members, just outside are not
    eps = 1e-6
    assert reachable_mask([[x - eps, 0.0]], 100.0, PARAMS)[0]
    assert not reachable_mask([[x + 0.5, 0.0]], 100.0, PARAMS)[0]


def test_sampled_cloud_poses_generate_their_points():
    cloud = sample_workspace(PARAMS, (0.0, 80.0), resolution_mm=7.0)
    assert len(cloud) > 100
    for i in range(0, len(cloud), 97):
        pose = CarriagePose.from_array(cloud.poses[i])
        line = forward_kinematics(pose, PARAMS)
        hit = line.point_at_plane(cloud.points[i][2])
        assert np.allclose(hit.xyz, cloud.points[i], atol=1e-9)
        assert np.isclose(incline_deg(pose, PARAMS), cloud.inclines_deg[i], atol=1e-9)
        assert cloud.inclines_deg[i] <= PARAMS.max_incline_deg + 1e-9


def test_cloud_export(tmp_path):
    cloud = sample_workspace(PARAMS, (0.0, 30.0), resolution_mm=10.0)
    csv_path = tmp_path / "ws.csv"
    json_path = tmp_path / "ws.json"
    cloud_to_csv(csv_path, cloud)
    cloud_to_json(json_path, cloud)
    lines = csv_path.read_text().strip().splitlines()
    assert len(lines) == len(cloud) + 1
    doc = json.loads(json_path.read_text())
    assert len(doc["points_mm"]) == len(cloud)
    assert doc["resolution_mm"] == 10.0


def test_box_volume_and_watertight():
    box = box_mesh((1.0, -2.0, 3.0), (4.0, 5.0, 6.0))
    assert is_watertight(box)
    assert np.isclose(signed_volume_mm3(box), 4.0 * 5.0 * 6.0)
    check_mesh(box)


def test_open_mesh_rejected():
    box = box_mesh((0, 0, 0), (2, 2, 2))
    holed = TriMesh(box.vertices, box.faces[:-1])
    assert not is_watertight(holed)
    with pytest.raises(OpenMesh):
        check_mesh(holed)


def test_ellipsoid_volume_converges():
    semi = (30.0, 20.0, 10.0)
    mesh = ellipsoid_mesh(semi, rings=64, segments=128)
    want = 4.0 / 3.0 * np.pi * semi[0] * semi[1] * semi[2]
    got = signed_volume_mm3(mesh)
    assert abs(got - want) / want < 5e-3


def test_containment_against_analytic_ellipsoid():
    rng = np.random.default_rng(17)
    semi = np.array([25.0, 18.0, 12.0])
    mesh = ellipsoid_mesh(tuple(semi), rings=48, segments=96)
    pts = rng.uniform(-30, 30, size=(2000, 3))
    inside = contains(mesh, pts)
    r = np.linalg.norm(pts / semi, axis=1)
    # skip points within one facet of the surface where the polyhedral
    # boundary legitimately disagrees with the smooth one
    clear = np.abs(r - 1.0) > 0.02
    assert np.array_equal(inside[clear], r[clear] < 1.0)


def test_voxelize_box():
    box = box_mesh((0.0, 0.0, 0.0), (10.0, 10.0, 10.0))
    centers = voxelize(box, pitch_mm=1.0)
    assert len(centers) == 1000
    assert np.all(np.abs(centers) <= 4.5 + 1e-9)


def test_stl_roundtrip(tmp_path):
    mesh = ellipsoid_mesh((12.0, 9.0, 7.0), rings=8, segments=12)
    path = tmp_path / "organ.stl"
    save_stl(path, mesh)
    back = load_stl(path)
    assert is_watertight(back)
    assert np.isclose(signed_volume_mm3(back), signed_volume_mm3(mesh), atol=1e-9)


def test_ascii_stl_parsing(tmp_path):
    tri = """solid t
facet normal 0 0 1
  outer loop
    vertex 0 0 0
    vertex 1 0 0
    vertex 0 1 0
  endloop
endfacet
endsolid t
"""
    path = tmp_path / "tri.stl"
    path.write_text(tri)
    mesh = load_stl(path)
    assert mesh.faces.shape == (1, 3)
    assert mesh.vertices.shape == (3, 3)


def test_coverage_against_direct_voxel_count():
    # ellipsoid hanging fully below the guide, partly out of lateral reach
    organ = ellipsoid_mesh((60.0, 25.0, 20.0), rings=24, segments=48).translated(
        (0.0, 0.0, -130.0)
    )
    cloud = sample_workspace(PARAMS, (0.0, 120.0), resolution_mm=4.0)
    rep = coverage_ratio(cloud, organ, voxel_pitch_mm=4.0)
    # oracle: voxelise directly and score centers with the analytic mask
    centers = voxelize(organ, pitch_mm=4.0)
    depths = PARAMS.z_lower_mm - centers[:, 2]
    ok = depths >= 0
    mask = reachable_mask(centers[ok][:, :2], depths[ok], PARAMS)
    want = mask.sum() / len(centers)
    assert rep.n_inside == len(centers)
    assert abs(rep.ratio - want) <= 0.01
    assert 0.0 < rep.ratio < 1.0


def test_coverage_standoff_shifts_organ():
    organ = ellipsoid_mesh((30.0, 20.0, 15.0), rings=16, segments=32).translated(
        (0.0, 0.0, -100.0)
    )
    cloud = sample_workspace(PARAMS, (0.0, 120.0), resolution_mm=4.0)
    near = coverage_ratio(cloud, organ, standoff_mm=0.0, voxel_pitch_mm=4.0)
    far = coverage_ratio(cloud, organ, standoff_mm=40.0, voxel_pitch_mm=4.0)
    # pushed deeper, the organ spreads past the cone and loses coverage
    assert far.ratio <= near.ratio
