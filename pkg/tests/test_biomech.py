"""
Tests for the body model and forward kinematics.
"""

import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

# Add backend to path
backend_path = Path(__file__).parent.parent / "backend"
sys.path.insert(0, str(backend_path))

from biomech import (
    BodyModel,
    DofSpec,
    JointSpec,
    MarkerOffsets,
    MarkerSpec,
    ScaleParams,
    SegmentSpec,
    build_default_upper_body,
    clamp_to_limits,
    forward_kinematics,
    load_model,
    marker_positions,
    save_model,
)
from errors import ContractViolationError, MalformedFileError
from models.schemas import DofKind, Side

RIGHT = build_default_upper_body("right")
BILATERAL = build_default_upper_body()


def _zeros(model):
    return np.zeros(model.dof_count)


def _position(model, marker_id, theta, scale=None):
    scale = scale if scale is not None else ScaleParams.uniform(model)
    return marker_positions(model, scale, MarkerOffsets.zeros(model), theta)[model.marker_index(marker_id)]


class TestDefaultModel:
    """The shipped upper-body chain."""

    def test_dof_layout(self):
        assert RIGHT.dof_count == 13
        assert BILATERAL.dof_count == 20
        assert RIGHT.dof_names[:6] == ["trunk_tx", "trunk_ty", "trunk_tz", "trunk_flexion",
                                       "trunk_lateral_bending", "trunk_rotation"]
        assert "elbow_flexion_r" in RIGHT.dof_names
        assert "elbow_flexion_l" not in RIGHT.dof_names

    def test_right_arm_comes_before_left(self):
        names = BILATERAL.dof_names
        assert names.index("shoulder_flexion_r") < names.index("shoulder_flexion_l")

    def test_neutral_angles_inside_limits(self):
        lower, upper = BILATERAL.limits()
        theta = BILATERAL.neutral_angles()
        assert np.all(theta >= lower) and np.all(theta <= upper)

    def test_clamp(self):
        lower, upper = RIGHT.limits()
        theta = clamp_to_limits(RIGHT, np.full(RIGHT.dof_count, 10.0))
        np.testing.assert_array_equal(theta, upper)

    def test_shipped_model_file_matches_builder(self):
        path = Path(__file__).parent.parent / "data" / "default_model.json"
        shipped = load_model(path)
        assert shipped.dof_names == RIGHT.dof_names
        assert shipped.marker_ids == RIGHT.marker_ids
        theta = clamp_to_limits(RIGHT, np.random.default_rng(0).normal(0.0, 0.5, RIGHT.dof_count))
        np.testing.assert_allclose(_position(shipped, "hand_r", theta), _position(RIGHT, "hand_r", theta),
                                   atol=1e-12)


class TestValidation:
    """Model construction preconditions."""

    def _segments(self):
        return (SegmentSpec("root", None, (0.0, 0.0, 0.0)), SegmentSpec("arm", "root", (0.0, 0.0, 0.5)))

    def test_duplicate_segment(self):
        segments = (SegmentSpec("root", None, (0.0, 0.0, 0.0)), SegmentSpec("root", "root", (0.0, 0.0, 1.0)))
        with pytest.raises(ContractViolationError, match="unique"):
            BodyModel(Side.RIGHT, segments, (), ())

    def test_axis_must_be_unit(self):
        joint = JointSpec("arm", (DofSpec("bend", (0.0, 2.0, 0.0), DofKind.ROTATION, (-1.0, 1.0)),))
        with pytest.raises(ContractViolationError, match="unit length"):
            BodyModel(Side.RIGHT, self._segments(), (joint,), ())

    def test_limits_must_be_ordered(self):
        joint = JointSpec("arm", (DofSpec("bend", (0.0, 1.0, 0.0), DofKind.ROTATION, (1.0, -1.0)),))
        with pytest.raises(ContractViolationError, match="min < max"):
            BodyModel(Side.RIGHT, self._segments(), (joint,), ())

    def test_marker_on_unknown_segment(self):
        with pytest.raises(ContractViolationError, match="unknown segment"):
            BodyModel(Side.RIGHT, self._segments(), (), (MarkerSpec("m", "leg", (0.0, 0.0, 0.0)),))

    def test_scale_must_be_positive(self):
        with pytest.raises(ContractViolationError):
            ScaleParams(np.array([1.0, 0.0, 1.0]))

    def test_offsets_bounded_by_radius(self):
        values = np.zeros((len(RIGHT.markers), 3))
        values[0] = (0.1, 0.0, 0.0)
        with pytest.raises(ContractViolationError, match="radius"):
            MarkerOffsets(values, radius=0.05)

    def test_theta_length_checked(self):
        with pytest.raises(ContractViolationError, match="DOF count"):
            marker_positions(RIGHT, ScaleParams.uniform(RIGHT), MarkerOffsets.zeros(RIGHT), np.zeros(3))

    def test_malformed_model_file(self, tmp_path):
        path = tmp_path / "model.json"
        path.write_text('{"side": "right"}')
        with pytest.raises(MalformedFileError):
            load_model(path)


class TestForwardKinematics:
    """Marker positions from angles, scales and offsets."""

    def test_zero_pose_places_markers_at_rest_offsets(self):
        np.testing.assert_allclose(_position(RIGHT, "sternum", _zeros(RIGHT)), [0.09, 0.0, 0.38])
        # Shoulder joint at (0, -0.18, 0.45) plus the marker's local offset.
        np.testing.assert_allclose(_position(RIGHT, "shoulder_r", _zeros(RIGHT)), [0.0, -0.2, 0.49])

    def test_parent_scale_moves_child_origin(self):
        scale = np.ones(len(RIGHT.segments))
        scale[RIGHT.segment_index("trunk")] = 2.0
        position = _position(RIGHT, "shoulder_r", _zeros(RIGHT), ScaleParams(scale))
        np.testing.assert_allclose(position, [0.0, -0.38, 0.94])

    def test_elbow_flexion_brings_hand_forward(self):
        theta = _zeros(RIGHT)
        theta[RIGHT.dof_index("elbow_flexion_r")] = np.pi / 2
        np.testing.assert_allclose(_position(RIGHT, "hand_r", theta), [0.33, -0.18, 0.16], atol=1e-12)

    def test_shoulder_flexion_raises_arm_forward(self):
        theta = _zeros(RIGHT)
        theta[RIGHT.dof_index("shoulder_flexion_r")] = np.pi / 2
        elbow = _position(RIGHT, "elbow_r", theta)
        shoulder_joint = np.array([0.0, -0.18, 0.45])
        assert elbow[0] - shoulder_joint[0] == pytest.approx(0.29, abs=1e-12)
        assert elbow[2] == pytest.approx(shoulder_joint[2], abs=1e-12)

    def test_root_translation(self):
        theta = _zeros(RIGHT)
        theta[RIGHT.dof_index("trunk_tz")] = 0.5
        np.testing.assert_allclose(_position(RIGHT, "sternum", theta), [0.09, 0.0, 0.88])

    def test_offsets_scaled_by_own_segment(self):
        offsets = np.zeros((len(RIGHT.markers), 3))
        offsets[RIGHT.marker_index("sternum")] = (0.01, 0.0, 0.0)
        scale = ScaleParams.uniform(RIGHT, 2.0)
        position = marker_positions(RIGHT, scale, MarkerOffsets(offsets), _zeros(RIGHT))
        np.testing.assert_allclose(position[RIGHT.marker_index("sternum")], [0.2, 0.0, 0.76])

    def test_batched_matches_single(self):
        rng = np.random.default_rng(3)
        thetas = clamp_to_limits(BILATERAL, rng.normal(0.0, 0.6, (4, BILATERAL.dof_count)))
        scale, offsets = ScaleParams.uniform(BILATERAL, 1.1), MarkerOffsets.zeros(BILATERAL)
        batched = marker_positions(BILATERAL, scale, offsets, thetas)
        for k in range(4):
            np.testing.assert_allclose(batched[k], marker_positions(BILATERAL, scale, offsets, thetas[k]))

    def test_cloud_is_keyed_by_marker(self):
        cloud = forward_kinematics(RIGHT, ScaleParams.uniform(RIGHT), MarkerOffsets.zeros(RIGHT), _zeros(RIGHT))
        assert list(cloud) == RIGHT.marker_ids
        np.testing.assert_allclose(cloud["sternum"], [0.09, 0.0, 0.38])

    def test_save_load_round_trip(self, tmp_path):
        path = save_model(BILATERAL, tmp_path / "model.json")
        loaded = load_model(path)
        assert loaded.dof_names == BILATERAL.dof_names
        theta = BILATERAL.neutral_angles()
        scale, offsets = ScaleParams.uniform(BILATERAL), MarkerOffsets.zeros(BILATERAL)
        np.testing.assert_allclose(marker_positions(loaded, scale, offsets, theta),
                                   marker_positions(BILATERAL, scale, offsets, theta))


class TestKinematicProperties:
    """Randomized invariants of forward kinematics."""

    @settings(max_examples=200, deadline=None)
    @given(st.integers(0, 2 ** 32 - 1), st.floats(0.5, 2.0))
    def test_uniform_scale_scales_positions(self, seed, s):
        rng = np.random.default_rng(seed)
        theta = clamp_to_limits(RIGHT, rng.normal(0.0, 0.8, RIGHT.dof_count))
        theta[:3] = 0.0  # no root translation
        offsets = MarkerOffsets.zeros(RIGHT)
        unit = marker_positions(RIGHT, ScaleParams.uniform(RIGHT), offsets, theta)
        scaled = marker_positions(RIGHT, ScaleParams.uniform(RIGHT, s), offsets, theta)
        np.testing.assert_allclose(scaled, s * unit, atol=1e-12)

    @settings(max_examples=200, deadline=None)
    @given(st.integers(0, 2 ** 32 - 1))
    def test_segment_lengths_preserved_by_rotation(self, seed):
        rng = np.random.default_rng(seed)
        theta = clamp_to_limits(RIGHT, rng.normal(0.0, 0.8, RIGHT.dof_count))
        zero = _zeros(RIGHT)
        # Two markers on the forearm keep their distance under any pose.
        for pose in (theta, zero):
            a = _position(RIGHT, "wrist_radial_r", pose)
            b = _position(RIGHT, "wrist_ulnar_r", pose)
            assert np.linalg.norm(a - b) == pytest.approx(0.06, abs=1e-12)

    @settings(max_examples=200, deadline=None)
    @given(st.integers(0, 2 ** 32 - 1))
    def test_matches_homogeneous_transform_composition(self, seed):
        rng = np.random.default_rng(seed)
        theta = clamp_to_limits(BILATERAL, rng.normal(0.0, 0.8, BILATERAL.dof_count))
        scale = ScaleParams(rng.uniform(0.8, 1.2, len(BILATERAL.segments)))
        raw = rng.normal(0.0, 0.01, (len(BILATERAL.markers), 3))
        offsets = MarkerOffsets(raw * np.minimum(1.0, 0.04 / np.linalg.norm(raw, axis=1, keepdims=True)))
        expected = _matrix_chain_positions(BILATERAL, scale.values, offsets.values, theta)
        np.testing.assert_allclose(marker_positions(BILATERAL, scale, offsets, theta), expected, rtol=0, atol=1e-12)

    def test_repeat_calls_are_bit_identical(self):
        rng = np.random.default_rng(5)
        theta = clamp_to_limits(BILATERAL, rng.normal(0.0, 0.8, (20, BILATERAL.dof_count)))
        scale = ScaleParams(rng.uniform(0.8, 1.2, len(BILATERAL.segments)))
        offsets = MarkerOffsets.zeros(BILATERAL)
        first = marker_positions(BILATERAL, scale, offsets, theta)
        np.testing.assert_array_equal(marker_positions(BILATERAL, scale, offsets, theta), first)


def _translation(v):
    t = np.eye(4)
    t[:3, 3] = v
    return t


def _rotation(axis, angle):
    t = np.eye(4)
    t[:3, :3] = Rotation.from_rotvec(np.asarray(axis, dtype=float) * angle).as_matrix()
    return t


def _matrix_chain_positions(model, scale, offsets, theta):
    """Marker positions by multiplying 4x4 transforms down each chain."""
    transforms = {}
    cursor = 0
    for seg in model.segments:
        if seg.parent is None:
            t = _translation(seg.neutral_offset)
        else:
            parent_scale = scale[model.segment_index(seg.parent)]
            t = transforms[seg.parent] @ _translation(np.asarray(seg.neutral_offset) * parent_scale)
        joint = model.joint_for(seg.id)
        for dof in (joint.dofs if joint else ()):
            q = theta[cursor]
            cursor += 1
            if dof.kind == DofKind.TRANSLATION:
                t = t @ _translation(np.asarray(dof.axis) * q)
            else:
                t = t @ _rotation(dof.axis, q)
        transforms[seg.id] = t
    points = []
    for i, marker in enumerate(model.markers):
        local = (np.asarray(marker.local_offset) + offsets[i]) * scale[model.segment_index(marker.segment)]
        points.append((transforms[marker.segment] @ np.append(local, 1.0))[:3])
    return np.array(points)
