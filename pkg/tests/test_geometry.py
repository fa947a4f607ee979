import json

import numpy as np
import pytest

from needleguide.errors import DegenerateFiducials, FrameMismatch, ParallelToPlane
from needleguide.geometry import (
    MR_FRAME,
    ROBOT_FRAME,
    FiducialSet,
    Point3,
    RigidTransform,
    Vec3,
    fiducials_from_json,
    fit_rigid_transform,
    line_plane_intersection,
    random_rotation,
    small_rotation,
)


def test_point_frame_tagging():
    p = Point3(1.0, 2.0, 3.0)
    assert p.frame == ROBOT_FRAME
    q = Point3(0.0, 0.0, 0.0, frame=MR_FRAME)
    with pytest.raises(FrameMismatch):
        q.require_frame(ROBOT_FRAME)
    assert np.allclose(p.xyz, [1.0, 2.0, 3.0])


def test_vec_unit():
    v = Vec3(3.0, 0.0, 4.0)
    u = v.unit()
    assert np.isclose(np.linalg.norm(u.xyz), 1.0)
    with pytest.raises(ValueError):
        Vec3(0.0, 0.0, 0.0).unit()


def test_transform_validation():
    bad = np.eye(3)
    bad[0, 0] = 1.1
    with pytest.raises(ValueError):
        RigidTransform(bad, np.zeros(3))
    # reflections are not rigid motions
    refl = np.diag([1.0, 1.0, -1.0])
    with pytest.raises(ValueError):
        RigidTransform(refl, np.zeros(3))


def test_transform_compose_inverse():
    rng = np.random.default_rng(7)
    for _ in range(50):
        inner = RigidTransform(random_rotation(rng), rng.normal(size=3) * 10)
        outer = RigidTransform(
            random_rotation(rng), rng.normal(size=3) * 10, src=ROBOT_FRAME, dst=MR_FRAME
        )
        p = rng.normal(size=3) * 20
        via_compose = outer.compose(inner).apply_xyz(p)
        via_chain = outer.apply_xyz(inner.apply_xyz(p))
        assert np.allclose(via_compose, via_chain, atol=1e-9)
        back = inner.inverse().apply_xyz(inner.apply_xyz(p))
        assert np.allclose(back, p, atol=1e-9)


def test_transform_frames():
    t = RigidTransform.identity(src=MR_FRAME, dst=ROBOT_FRAME)
    p = Point3(1.0, 2.0, 3.0, frame=MR_FRAME)
    out = t.apply(p)
    assert out.frame == ROBOT_FRAME
    with pytest.raises(FrameMismatch):
        t.apply(out)


def test_registration_recovers_random_rigid_motions():
    rng = np.random.default_rng(12345)
    for trial in range(200):
        n = int(rng.integers(4, 10))
        rot = random_rotation(rng)
        trans = rng.normal(size=3) * 50
        mr = rng.normal(size=(n, 3)) * 40
        robot = mr @ rot.T + trans
        fids = FiducialSet(mr=mr, robot=robot)
        res = fit_rigid_transform(fids)
        assert res.rms_residual_mm < 1e-9, trial
        assert np.allclose(res.transform.rotation, rot, atol=1e-9)
        assert np.allclose(res.transform.translation, trans, atol=1e-9)


def test_registration_least_squares_under_noise():
    rng = np.random.default_rng(99)
    rot = random_rotation(rng)
    trans = np.array([5.0, -3.0, 12.0])
    mr = rng.normal(size=(20, 3)) * 30
    robot = mr @ rot.T + trans + rng.normal(size=(20, 3)) * 0.2
    res = fit_rigid_transform(FiducialSet(mr, robot))
    # residual should be on the order of the injected noise, not larger
    assert res.rms_residual_mm < 0.6
    assert res.residuals_mm.shape == (20,)
    # rotation still close to truth
    assert np.allclose(res.transform.rotation, rot, atol=0.05)


def test_registration_rejects_collinear():
    t = np.linspace(0.0, 1.0, 5)[:, None]
    mr = t * np.array([1.0, 2.0, 3.0])
    robot = mr + np.array([4.0, 4.0, 4.0])
    with pytest.raises(DegenerateFiducials):
        fit_rigid_transform(FiducialSet(mr, robot))


def test_registration_rejects_too_few_pairs():
    mr = np.zeros((2, 3))
    with pytest.raises(Exception):
        fit_rigid_transform(FiducialSet(mr, mr))


def test_fiducials_from_json_forms(tmp_path):
    doc = {
        "pairs": [
            {"mr": [1, 2, 3], "robot": [4, 5, 6]},
            {"mr": [0, 1, 0], "robot": [1, 0, 0]},
            {"mr": [2, 2, 2], "robot": [3, 3, 3]},
        ]
    }
    from_dict = fiducials_from_json(doc)
    from_str = fiducials_from_json(json.dumps(doc))
    path = tmp_path / "fids.json"
    path.write_text(json.dumps(doc))
    from_path = fiducials_from_json(path)
    for fids in (from_dict, from_str, from_path):
        assert fids.mr.shape == (3, 3)
        assert np.allclose(fids.mr[0], [1, 2, 3])
        assert np.allclose(fids.robot[1], [1, 0, 0])


def test_line_plane_intersection():
    origin = Point3(0.0, 0.0, 0.0)
    direction = Vec3(1.0, 1.0, -2.0)
    hit = line_plane_intersection(origin, direction, -10.0)
    assert hit.z == -10.0
    assert np.allclose(hit.xyz[:2], [5.0, 5.0])
    with pytest.raises(ParallelToPlane):
        line_plane_intersection(origin, Vec3(1.0, 0.0, 0.0), -10.0)


def test_small_rotation_angle():
    rng = np.random.default_rng(3)
    for _ in range(50):
        axis = rng.normal(size=3)
        angle_deg = rng.uniform(0.05, 10.0)
        rot = small_rotation(axis, angle_deg)
        # trace gives back the rotation angle
        got = np.degrees(np.arccos(np.clip((np.trace(rot) - 1.0) / 2.0, -1.0, 1.0)))
        assert np.isclose(got, angle_deg, atol=1e-9)
        assert np.allclose(rot @ rot.T, np.eye(3), atol=1e-12)
