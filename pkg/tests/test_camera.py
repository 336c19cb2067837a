import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import random_rotation
from rehab3d.camera import (CameraView, EngineFrameConfig, load_cameras, look_at, project,
                            projection_matrix, rodrigues_rotation, save_cameras, to_engine_frame)
from rehab3d.errors import BehindCameraError, CalibrationError, ConfigError
from rehab3d.skeleton import Pose3D, bone_lengths
from rehab3d.synth import SynthScene, observe, synth_motion


def quat_rotate(axis, angle, v):
    # independent oracle: q v q*
    a = np.asarray(axis, float) / np.linalg.norm(axis)
    w, xyz = np.cos(angle / 2), np.sin(angle / 2) * a

    def mul(p, q):
        pw, pv = p
        qw, qv = q
        return pw * qw - pv @ qv, pw * qv + qw * pv + np.cross(pv, qv)

    return mul(mul((w, xyz), (0.0, np.asarray(v, float))), (w, -xyz))[1]


def random_camera(rng, cid="c"):
    K = np.array([[rng.uniform(500, 1500), rng.uniform(-1, 1), rng.uniform(300, 700)],
                  [0.0, rng.uniform(500, 1500), rng.uniform(300, 700)], [0.0, 0.0, 1.0]])
    return CameraView(cid, K, random_rotation(rng), rng.normal(size=3))


def test_identity_camera():
    cam = CameraView("c", np.eye(3), np.eye(3), np.zeros(3))
    np.testing.assert_array_equal(projection_matrix(cam), np.hstack([np.eye(3), np.zeros((3, 1))]))


def test_pure_translation_projects_origin_to_principal_point():
    K = np.array([[800.0, 0, 320], [0, 800, 240], [0, 0, 1]])
    cam = CameraView("c", K, np.eye(3), [0, 0, 5])
    x = projection_matrix(cam) @ [0, 0, 0, 1]
    np.testing.assert_allclose(x[:2] / x[2], [320, 240])


def test_projection_matrix_matches_product(rng):
    for _ in range(20):
        cam = random_camera(rng)
        P = cam.K @ np.column_stack([cam.R, cam.t])
        np.testing.assert_allclose(projection_matrix(cam), P, rtol=0, atol=1e-12 * np.abs(P).max())


def test_non_orthonormal_rotation_rejected():
    R = np.eye(3)
    R[0, 1] = 1e-3
    with pytest.raises(CalibrationError):
        CameraView("c", np.eye(3), R, np.zeros(3))
    with pytest.raises(CalibrationError):
        CameraView("c", np.eye(3), np.diag([1.0, 1.0, -1.0]), np.zeros(3))


def test_project_optical_axis_and_depth_zero():
    K = np.array([[1000.0, 0, 640], [0, 1000, 600], [0, 0, 1]])
    cam = CameraView("c", K, np.eye(3), np.zeros(3))
    np.testing.assert_allclose(project(cam, [0, 0, 3.0]), [640, 600])
    with pytest.raises(BehindCameraError):
        project(cam, [1.0, 1.0, 0.0])
    with pytest.raises(BehindCameraError):
        project(cam, [0.0, 0.0, -1.0])


def test_project_matches_generator(rig):
    poses = synth_motion(seconds=0.2, seed=1)
    views = observe(SynthScene(rig, poses), 0.0)
    for cam in rig:
        for pose, v in zip(poses, views[cam.id]):
            np.testing.assert_allclose(project(cam, pose.joints), v.joints, rtol=0, atol=1e-9)


def test_rodrigues_basic():
    np.testing.assert_array_equal(rodrigues_rotation([0, 0, 1], 0.0), np.eye(3))
    np.testing.assert_allclose(rodrigues_rotation([0, 0, 1], np.pi / 2) @ [1, 0, 0], [0, 1, 0], atol=1e-15)


def test_rodrigues_bad_axis():
    with pytest.raises(ConfigError):
        rodrigues_rotation([0, 0, 0], 1.0)
    with pytest.raises(ConfigError):
        rodrigues_rotation([0, 0, 2], 1.0)


unit_axis = st.tuples(*[st.floats(-1, 1)] * 3).filter(lambda a: np.linalg.norm(a) > 0.1).map(
    lambda a: np.asarray(a) / np.linalg.norm(a))
angles = st.floats(-2 * np.pi, 2 * np.pi)


@given(unit_axis, angles, st.tuples(*[st.floats(-10, 10)] * 3))
def test_rodrigues_matches_quaternion(axis, angle, v):
    np.testing.assert_allclose(rodrigues_rotation(axis, angle) @ np.asarray(v),
                               quat_rotate(axis, angle, v), rtol=0, atol=1e-9 * (1 + np.abs(v).max()))


@given(unit_axis, angles)
def test_rodrigues_inverse(axis, angle):
    np.testing.assert_allclose(rodrigues_rotation(axis, angle) @ rodrigues_rotation(axis, -angle),
                               np.eye(3), rtol=0, atol=1e-9)


def test_engine_frame_mirror_z():
    j = np.zeros((17, 3))
    j[0] = (1, 2, 3)
    out = to_engine_frame(Pose3D(j), EngineFrameConfig())
    np.testing.assert_array_equal(out.joints[0], [1, 2, -3])


def test_engine_frame_offset_only(rng):
    j = rng.normal(size=(17, 3))
    cfg = EngineFrameConfig(origin_offset=(1.0, -2.0, 0.5))
    mirrored = j * [1, 1, -1]
    np.testing.assert_allclose(to_engine_frame(Pose3D(j), cfg).joints - mirrored,
                               np.tile([1.0, -2.0, 0.5], (17, 1)), atol=1e-15)


@given(unit_axis, angles, st.sampled_from("XYZ"), st.integers(0, 10000))
def test_engine_frame_preserves_bones_and_flips_handedness(axis, angle, mirror, seed):
    rng = np.random.default_rng(seed)
    j = rng.normal(size=(17, 3))
    cfg = EngineFrameConfig(tuple(axis), angle, tuple(rng.normal(size=3)), mirror)
    out = to_engine_frame(Pose3D(j), cfg).joints
    np.testing.assert_allclose(bone_lengths(out), bone_lengths(j), rtol=1e-9)
    basis_in = np.stack([j[1] - j[0], j[4] - j[0], j[7] - j[0]])
    basis_out = np.stack([out[1] - out[0], out[4] - out[0], out[7] - out[0]])
    assert np.sign(np.linalg.det(basis_in)) == -np.sign(np.linalg.det(basis_out))


def test_engine_config_validation():
    with pytest.raises(ConfigError):
        EngineFrameConfig(mirror_axis="W")
    with pytest.raises(ConfigError):
        EngineFrameConfig(rodrigues_axis=(0, 0, 2))


def test_look_at_axes():
    R, t = look_at([3, 0, 0], [0, 0, 0])
    cam = CameraView("c", np.eye(3), R, t)
    np.testing.assert_allclose(cam.center, [3, 0, 0], atol=1e-12)
    np.testing.assert_allclose(cam.optical_axis, [-1, 0, 0], atol=1e-12)
    np.testing.assert_allclose(R[1], [0, 0, -1], atol=1e-12)   # image y points down


def test_cameras_json_roundtrip(tmp_path, rig):
    save_cameras(rig, tmp_path / "c.json")
    back = load_cameras(tmp_path / "c.json")
    for a, b in zip(rig, back):
        assert a.id == b.id and a.image_size == b.image_size
        np.testing.assert_array_equal(a.P, b.P)
