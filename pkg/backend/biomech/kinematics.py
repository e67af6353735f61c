"""
Forward kinematics: joint angles + scales + marker corrections -> marker positions.

Works on plain arrays and on traced ``Tensor`` inputs alike; with traced
inputs the result is differentiable with respect to theta, scale and offsets.
"""

from typing import Dict, Union

import numpy as np

from autodiff import tensor as ad
from errors import ContractViolationError
from models.schemas import DofKind

from .body_model import BodyModel, MarkerOffsets, ScaleParams

_I3 = np.eye(3)


def skew(axis) -> np.ndarray:
    """Cross-product matrix of a 3-vector."""
    x, y, z = axis
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def axis_rotation(axis, angle):
    """
    Rodrigues rotation about a constant unit axis.

    Args:
        axis: Unit 3-vector
        angle: Angles of shape (T,)

    Returns:
        Rotation matrices of shape (T, 3, 3)
    """
    k = skew(axis)
    k2 = k @ k
    s = ad.reshape(ad.sin(angle), (-1, 1, 1))
    c = ad.reshape(1.0 - ad.cos(angle), (-1, 1, 1))
    return _I3 + s * k + c * k2


def _as_array(value, cls):
    return value.values if isinstance(value, cls) else value


def marker_positions(model: BodyModel, scale, offsets, theta):
    """
    Marker positions in model marker order.

    Args:
        model: Kinematic chain
        scale: ScaleParams or (segments,) array/Tensor
        offsets: MarkerOffsets or (markers, 3) array/Tensor of corrections
        theta: (dof,) or (T, dof) joint angles (array or Tensor)

    Returns:
        (markers, 3) for a single pose, else (T, markers, 3)
    """
    scale = _as_array(scale, ScaleParams)
    offsets = _as_array(offsets, MarkerOffsets)
    n_seg, n_mk, n_dof = len(model.segments), len(model.markers), model.dof_count
    if ad.value_of(scale).shape != (n_seg,):
        raise ContractViolationError("scale must have one entry per segment",
                                     expected=n_seg, got=list(ad.value_of(scale).shape))
    if not np.all(ad.value_of(scale) > 0):
        raise ContractViolationError("scale factors must be strictly positive")
    if ad.value_of(offsets).shape != (n_mk, 3):
        raise ContractViolationError("offsets must have shape (markers, 3)",
                                     expected=[n_mk, 3], got=list(ad.value_of(offsets).shape))
    single = ad.value_of(theta).ndim == 1
    if single:
        theta = ad.reshape(theta, (1, -1))
    if ad.value_of(theta).ndim != 2 or ad.value_of(theta).shape[1] != n_dof:
        raise ContractViolationError("theta length must equal the model DOF count",
                                     expected=n_dof, got=list(ad.value_of(theta).shape))
    frames = ad.value_of(theta).shape[0]

    rotations: Dict[str, object] = {}
    origins: Dict[str, object] = {}
    dof_cursor = 0
    for seg in model.segments:
        if seg.parent is None:
            rot = np.broadcast_to(_I3, (frames, 3, 3))
            origin = np.broadcast_to(np.asarray(seg.neutral_offset, dtype=np.float64), (frames, 3))
        else:
            parent_scale = ad.getitem(scale, model.segment_index(seg.parent))
            offset = ad.reshape(np.asarray(seg.neutral_offset) * parent_scale, (3, 1))
            rot = rotations[seg.parent]
            origin = origins[seg.parent] + ad.reshape(ad.matmul(rot, offset), (frames, 3))
        joint = model.joint_for(seg.id)
        if joint is not None:
            for dof in joint.dofs:
                q = ad.getitem(theta, (slice(None), dof_cursor))
                dof_cursor += 1
                if dof.kind == DofKind.TRANSLATION:
                    direction = ad.reshape(ad.matmul(rot, np.asarray(dof.axis).reshape(3, 1)), (frames, 3))
                    origin = origin + ad.reshape(q, (-1, 1)) * direction
                else:
                    rot = ad.matmul(rot, axis_rotation(dof.axis, q))
        rotations[seg.id] = rot
        origins[seg.id] = origin

    groups = []
    order = []
    local = np.array([m.local_offset for m in model.markers], dtype=np.float64)
    for seg in model.segments:
        idx = [i for i, m in enumerate(model.markers) if m.segment == seg.id]
        if not idx:
            continue
        seg_scale = ad.getitem(scale, model.segment_index(seg.id))
        corrected = (local[idx] + ad.getitem(offsets, np.array(idx))) * seg_scale  # (k, 3)
        world = ad.matmul(rotations[seg.id], ad.transpose(corrected))  # (T, 3, k)
        world = ad.swapaxes(world, 1, 2) + ad.reshape(origins[seg.id], (frames, 1, 3))
        groups.append(world)
        order.extend(idx)
    stacked = ad.concatenate(groups, axis=1)
    inverse = np.argsort(order)
    positions = ad.getitem(stacked, (slice(None), inverse))
    if single:
        positions = ad.reshape(positions, (n_mk, 3))
    return positions


def forward_kinematics(
    model: BodyModel,
    scale: Union[ScaleParams, np.ndarray],
    offsets: Union[MarkerOffsets, np.ndarray],
    theta,
) -> Dict[str, object]:
    """
    MarkerCloud: marker id -> world position (3,) or (T, 3), metres.

    Deterministic; differentiable when any input is a traced Tensor.
    """
    positions = marker_positions(model, scale, offsets, theta)
    single = ad.value_of(positions).ndim == 2
    cloud = {}
    for i, marker_id in enumerate(model.marker_ids):
        index = i if single else (slice(None), i)
        cloud[marker_id] = ad.getitem(positions, index)
    return cloud
