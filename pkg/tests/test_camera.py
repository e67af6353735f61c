"""
Tests for camera projection, triangulation and calibration/keypoint files.
"""

import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

# Add backend to path
backend_path = Path(__file__).parent.parent / "backend"
sys.path.insert(0, str(backend_path))

from camera import (
    Camera,
    CameraExtrinsics,
    CameraIntrinsics,
    CameraRig,
    distort,
    load_calibration,
    look_at,
    pixels_to_normalized,
    project,
    project_points,
    read_keypoints,
    save_calibration,
    triangulate,
    triangulate_frames,
    undistort,
    write_keypoints,
)
from errors import (
    BehindCameraError,
    ContractViolationError,
    MalformedFileError,
    MissingInputError,
    UnderdeterminedError,
)

INTRINSICS = CameraIntrinsics(1400.0, 1400.0, 960.0, 540.0)
DISTORTED = CameraIntrinsics(1400.0, 1380.0, 955.0, 545.0, dist=(-0.12, 0.03, 0.001, -0.0005, 0.0))
TARGET = np.array([0.25, 0.0, 0.9])


def _rig(n=4, intrinsics=INTRINSICS):
    cameras = []
    for k, angle in enumerate(np.linspace(-np.pi / 2, np.pi / 2, n)):
        position = (2.5 * np.cos(angle), 2.5 * np.sin(angle), 1.2)
        cameras.append(Camera(f"cam{k}", intrinsics, look_at(position, TARGET)))
    return CameraRig(tuple(cameras))


def _observations(rig, point, confidence=0.9):
    rows = []
    for camera in rig.cameras:
        u, v, _ = project_points(camera, point)
        rows.append([float(u), float(v), confidence])
    return np.array(rows)


class TestProjection:
    """Pinhole projection with radial-tangential distortion."""

    def test_target_projects_to_principal_point(self):
        camera = _rig().cameras[0]
        u, v, depth = project_points(camera, TARGET)
        assert float(u) == pytest.approx(960.0, abs=1e-9)
        assert float(v) == pytest.approx(540.0, abs=1e-9)
        assert float(depth) > 0

    def test_up_is_up_in_the_image(self):
        camera = _rig().cameras[1]
        _, v_high, _ = project_points(camera, TARGET + [0.0, 0.0, 0.2])
        _, v_low, _ = project_points(camera, TARGET)
        assert float(v_high) < float(v_low)

    def test_known_pinhole_example(self):
        intrinsics = CameraIntrinsics(1000.0, 1000.0, 500.0, 500.0)
        extrinsics = CameraExtrinsics(np.eye(3), np.zeros(3))
        u, v = project(intrinsics, extrinsics, np.array([0.1, 0.0, 1.0]))
        assert u == pytest.approx(600.0, abs=1e-12)
        assert v == pytest.approx(500.0, abs=1e-12)

    def test_behind_camera_raises(self):
        camera = _rig().cameras[0]
        behind = 2.0 * camera.extrinsics.center - TARGET
        with pytest.raises(BehindCameraError):
            project(camera.intrinsics, camera.extrinsics, behind)

    def test_rotation_must_be_orthonormal(self):
        with pytest.raises(ContractViolationError):
            CameraExtrinsics(np.diag([1.0, 1.0, 2.0]), np.zeros(3))

    def test_focal_length_must_be_positive(self):
        with pytest.raises(ContractViolationError):
            CameraIntrinsics(0.0, 1.0, 0.0, 0.0)

    @settings(max_examples=1000, deadline=None)
    @given(st.floats(-0.4, 0.4), st.floats(-0.3, 0.3))
    def test_undistort_inverts_distort(self, x, y):
        xd, yd = distort(DISTORTED, x, y)
        xu, yu = undistort(DISTORTED, np.array([xd]), np.array([yd]))
        assert xu[0] == pytest.approx(x, abs=1e-9)
        assert yu[0] == pytest.approx(y, abs=1e-9)

    def test_pixels_to_normalized_inverts_projection(self):
        rig = _rig(intrinsics=DISTORTED)
        point = TARGET + [0.1, -0.2, 0.15]
        camera = rig.cameras[2]
        u, v, _ = project_points(camera, point)
        x, y = pixels_to_normalized(camera.intrinsics, u, v)
        cam = camera.extrinsics.rotation @ point + camera.extrinsics.translation
        assert float(x) == pytest.approx(cam[0] / cam[2], abs=1e-10)
        assert float(y) == pytest.approx(cam[1] / cam[2], abs=1e-10)


class TestTriangulation:
    """Linear multi-view triangulation."""

    @settings(max_examples=200, deadline=None)
    @given(st.integers(0, 2 ** 32 - 1))
    def test_noise_free_points_are_recovered(self, seed):
        rig = _rig(intrinsics=DISTORTED)
        point = TARGET + np.random.default_rng(seed).uniform(-0.4, 0.4, 3)
        result = triangulate(rig, _observations(rig, point))
        np.testing.assert_allclose(result.point, point, atol=1e-6)
        assert result.residual_rms_px < 1e-4
        assert result.n_cameras == 4

    def test_low_confidence_cameras_are_ignored(self):
        rig = _rig()
        point = TARGET + [0.05, 0.1, -0.1]
        obs = _observations(rig, point)
        obs[0, :2] += 300.0
        obs[0, 2] = 0.1
        result = triangulate(rig, obs, confidence_floor=0.3)
        np.testing.assert_allclose(result.point, point, atol=1e-6)
        assert result.n_cameras == 3

    @settings(max_examples=200, deadline=None)
    @given(st.integers(0, 2 ** 32 - 1), st.floats(0.05, 20.0))
    def test_uniform_confidence_scaling_does_not_move_the_point(self, seed, factor):
        rng = np.random.default_rng(seed)
        rig = _rig(n=5)
        point = TARGET + rng.uniform(-0.3, 0.3, 3)
        obs = _observations(rig, point)
        obs[:, :2] += rng.normal(0.0, 2.0, (len(rig), 2))
        obs[:, 2] = rng.uniform(0.4, 1.0, len(rig))
        scaled = obs.copy()
        scaled[:, 2] *= factor
        base = triangulate(rig, obs, confidence_floor=0.0)
        moved = triangulate(rig, scaled, confidence_floor=0.0)
        np.testing.assert_allclose(moved.point, base.point, rtol=0, atol=1e-10)

    def test_single_camera_is_underdetermined(self):
        rig = _rig()
        obs = _observations(rig, TARGET)
        obs[1:, :2] = np.nan
        with pytest.raises(UnderdeterminedError):
            triangulate(rig, obs)

    def test_batched_frames(self):
        rig = _rig()
        points = TARGET + np.random.default_rng(1).uniform(-0.3, 0.3, (5, 2, 3))
        uv = np.zeros((5, len(rig), 2, 2))
        for c, camera in enumerate(rig.cameras):
            u, v, _ = project_points(camera, points)
            uv[:, c, :, 0], uv[:, c, :, 1] = u, v
        confidence = np.full((5, len(rig), 2), 0.9)
        confidence[2, 1:, 0] = 0.0
        estimated, counts = triangulate_frames(rig, uv, confidence)
        assert counts[2, 0] == 1
        assert np.all(np.isnan(estimated[2, 0]))
        mask = np.ones((5, 2), dtype=bool)
        mask[2, 0] = False
        np.testing.assert_allclose(estimated[mask], points[mask], atol=1e-6)


class TestCalibrationFiles:
    """Calibration and keypoint file formats."""

    def test_calibration_round_trip(self, tmp_path):
        rig = _rig(intrinsics=DISTORTED)
        loaded = load_calibration(save_calibration(rig, tmp_path / "calibration.json"))
        assert loaded.ids == rig.ids
        for a, b in zip(loaded.cameras, rig.cameras):
            np.testing.assert_allclose(a.extrinsics.rotation, b.extrinsics.rotation)
            assert a.intrinsics == b.intrinsics

    def test_missing_calibration_names_path(self, tmp_path):
        with pytest.raises(MissingInputError) as info:
            load_calibration(tmp_path / "nope.json")
        assert "nope.json" in info.value.path

    def test_rig_subset_keeps_order(self):
        rig = _rig()
        assert rig.subset(["cam3", "cam1"]).ids == ["cam1", "cam3"]
        with pytest.raises(ContractViolationError):
            rig.subset(["cam9"])

    def test_keypoints_round_trip_with_gaps(self, tmp_path):
        ids = ["a", "b", "c"]
        uv = np.arange(4 * 3 * 2, dtype=float).reshape(4, 3, 2)
        confidence = np.full((4, 3), 0.8)
        confidence[1, 2] = 0.0
        path = write_keypoints(tmp_path / "cam0.csv", "cam0", ids, uv, confidence, 60.0)
        read_uv, read_conf, rate = read_keypoints(path, ids)
        assert rate == 60.0
        assert read_conf[1, 2] == 0.0
        assert np.all(np.isnan(read_uv[1, 2]))
        mask = confidence > 0
        np.testing.assert_allclose(read_uv[mask], uv[mask])

    def test_confidence_out_of_range(self, tmp_path):
        path = tmp_path / "cam0.csv"
        path.write_text("# schema: keypoints v1\n# camera: cam0\n# rate_hz: 60\n# frames: 2\n"
                        "frame_index,keypoint_id,u,v,confidence\n0,a,1,2,0.5\n1,a,1,2,1.5\n")
        with pytest.raises(MalformedFileError) as info:
            read_keypoints(path, ["a"])
        assert info.value.to_record()["line"] == 7
        assert info.value.to_record()["column"] == 5

    def test_unknown_keypoint_id(self, tmp_path):
        path = write_keypoints(tmp_path / "cam0.csv", "cam0", ["a", "z"], np.zeros((1, 2, 2)),
                               np.full((1, 2), 0.5), 60.0)
        with pytest.raises(ContractViolationError):
            read_keypoints(path, ["a"])
