"""
Parametric upper-body kinematic tree.

World frame: z up, x anterior, y toward the participant's left, metres.
Rotations are radians, root translations metres.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np

from errors import ContractViolationError
from fileio import load_document, save_document
from models.schemas import (
    BodyModelDocument,
    DofDoc,
    DofKind,
    JointDoc,
    MarkerDoc,
    SegmentDoc,
    Side,
)

logger = logging.getLogger(__name__)

Vec3 = Tuple[float, float, float]
DEFAULT_OFFSET_RADIUS_M = 0.05


@dataclass(frozen=True)
class SegmentSpec:
    id: str
    parent: Optional[str]
    neutral_offset: Vec3
    scalable: bool = True


@dataclass(frozen=True)
class DofSpec:
    name: str
    axis: Vec3
    kind: DofKind
    limits: Tuple[float, float]


@dataclass(frozen=True)
class JointSpec:
    segment: str
    dofs: Tuple[DofSpec, ...]


@dataclass(frozen=True)
class MarkerSpec:
    id: str
    segment: str
    local_offset: Vec3


@dataclass(frozen=True)
class BodyModel:
    """
    Segments, joints and markers of the kinematic chain.

    Segments are stored parents-first, so forward kinematics can walk them in
    order. The theta layout is the concatenation of each joint's DOFs in
    segment order (see ``dof_names``).
    """
    side: Side
    segments: Tuple[SegmentSpec, ...]
    joints: Tuple[JointSpec, ...]
    markers: Tuple[MarkerSpec, ...]
    _segment_index: Dict[str, int] = field(default_factory=dict, init=False, repr=False, compare=False)
    _marker_index: Dict[str, int] = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        seg_ids = [s.id for s in self.segments]
        if len(set(seg_ids)) != len(seg_ids):
            raise ContractViolationError("segment ids must be unique")
        roots = [s for s in self.segments if s.parent is None]
        if len(roots) != 1:
            raise ContractViolationError("segment graph must have exactly one root", roots=len(roots))
        seen = set()
        for seg in self.segments:
            if seg.parent is not None and seg.parent not in seen:
                raise ContractViolationError(
                    f"segment '{seg.id}' must follow its parent '{seg.parent}'"
                )
            if not np.all(np.isfinite(seg.neutral_offset)):
                raise ContractViolationError(f"segment '{seg.id}' has a non-finite offset")
            seen.add(seg.id)

        joint_segments = [j.segment for j in self.joints]
        if len(set(joint_segments)) != len(joint_segments):
            raise ContractViolationError("at most one joint per segment")
        dof_names = []
        for joint in self.joints:
            if joint.segment not in seen:
                raise ContractViolationError(f"joint references unknown segment '{joint.segment}'")
            for dof in joint.dofs:
                if abs(np.linalg.norm(dof.axis) - 1.0) > 1e-9:
                    raise ContractViolationError(f"axis of '{dof.name}' is not unit length")
                if not dof.limits[0] < dof.limits[1]:
                    raise ContractViolationError(f"limits of '{dof.name}' need min < max")
                dof_names.append(dof.name)
        if len(set(dof_names)) != len(dof_names):
            raise ContractViolationError("DOF names must be unique")

        marker_ids = [m.id for m in self.markers]
        if len(set(marker_ids)) != len(marker_ids):
            raise ContractViolationError("marker ids must be unique")
        for marker in self.markers:
            if marker.segment not in seen:
                raise ContractViolationError(
                    f"marker '{marker.id}' references unknown segment '{marker.segment}'"
                )

        # Joints are kept in segment order so the DOF layout is stable.
        order = {sid: i for i, sid in enumerate(seg_ids)}
        object.__setattr__(self, "joints", tuple(sorted(self.joints, key=lambda j: order[j.segment])))
        object.__setattr__(self, "_segment_index", order)
        object.__setattr__(self, "_marker_index", {m: i for i, m in enumerate(marker_ids)})

    # --- lookups --------------------------------------------------------
    @property
    def dof_count(self) -> int:
        return sum(len(j.dofs) for j in self.joints)

    @property
    def dof_names(self) -> List[str]:
        return [d.name for j in self.joints for d in j.dofs]

    @property
    def marker_ids(self) -> List[str]:
        return [m.id for m in self.markers]

    @property
    def segment_ids(self) -> List[str]:
        return [s.id for s in self.segments]

    def segment_index(self, segment_id: str) -> int:
        return self._segment_index[segment_id]

    def marker_index(self, marker_id: str) -> int:
        try:
            return self._marker_index[marker_id]
        except KeyError:
            raise ContractViolationError(f"unknown marker '{marker_id}'")

    def dof_index(self, name: str) -> int:
        try:
            return self.dof_names.index(name)
        except ValueError:
            raise ContractViolationError(f"unknown DOF '{name}'")

    def joint_for(self, segment_id: str) -> Optional[JointSpec]:
        for joint in self.joints:
            if joint.segment == segment_id:
                return joint
        return None

    def limits(self) -> Tuple[np.ndarray, np.ndarray]:
        """Lower and upper DOF limits in theta order."""
        lims = np.array([d.limits for j in self.joints for d in j.dofs], dtype=np.float64)
        return lims[:, 0], lims[:, 1]

    def neutral_angles(self) -> np.ndarray:
        """The zero pose, inside every default limit."""
        return clamp_to_limits(self, np.zeros(self.dof_count))


@dataclass(frozen=True)
class ScaleParams:
    """One strictly positive, dimensionless scale per segment (model order)."""
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 1 or not np.all(values > 0) or not np.all(np.isfinite(values)):
            raise ContractViolationError("scale factors must be finite and strictly positive")
        object.__setattr__(self, "values", values)

    @classmethod
    def uniform(cls, model: BodyModel, value: float = 1.0) -> "ScaleParams":
        return cls(np.full(len(model.segments), float(value)))

    def as_dict(self, model: BodyModel) -> Dict[str, float]:
        return {sid: float(v) for sid, v in zip(model.segment_ids, self.values)}


@dataclass(frozen=True)
class MarkerOffsets:
    """Per-marker corrections (metres), added to the model's local offsets."""
    values: np.ndarray
    radius: float = DEFAULT_OFFSET_RADIUS_M

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2 or values.shape[1] != 3:
            raise ContractViolationError("marker offsets must have shape (markers, 3)")
        if np.any(np.linalg.norm(values, axis=1) > self.radius + 1e-12):
            raise ContractViolationError("marker offset exceeds the configured radius", radius=self.radius)
        object.__setattr__(self, "values", values)

    @classmethod
    def zeros(cls, model: BodyModel, radius: float = DEFAULT_OFFSET_RADIUS_M) -> "MarkerOffsets":
        return cls(np.zeros((len(model.markers), 3)), radius)

    def as_dict(self, model: BodyModel) -> Dict[str, Vec3]:
        return {mid: tuple(float(x) for x in v) for mid, v in zip(model.marker_ids, self.values)}


def clamp_to_limits(model: BodyModel, theta: np.ndarray) -> np.ndarray:
    """Clip joint angles (any leading shape) into the DOF limits."""
    lower, upper = model.limits()
    return np.clip(np.asarray(theta, dtype=np.float64), lower, upper)


# --- default upper-body chain -------------------------------------------------

def _arm(side: str) -> Tuple[List[SegmentSpec], List[JointSpec], List[MarkerSpec]]:
    s = 1.0 if side == "l" else -1.0  # sign of the lateral (y) direction
    upper_arm, forearm, hand = f"humerus_{side}", f"forearm_{side}", f"palm_{side}"
    segments = [
        SegmentSpec(upper_arm, "trunk", (0.0, 0.18 * s, 0.45)),
        SegmentSpec(forearm, upper_arm, (0.0, 0.0, -0.29)),
        SegmentSpec(hand, forearm, (0.0, 0.0, -0.25)),
    ]
    rot = DofKind.ROTATION
    joints = [
        # Intrinsic sequence: flexion -> abduction -> internal rotation.
        JointSpec(upper_arm, (
            DofSpec(f"shoulder_flexion_{side}", (0.0, -1.0, 0.0), rot, (-1.0, 3.1)),
            DofSpec(f"shoulder_abduction_{side}", (s, 0.0, 0.0), rot, (-0.5, 2.6)),
            DofSpec(f"shoulder_rotation_{side}", (0.0, 0.0, -s), rot, (-1.4, 1.4)),
        )),
        JointSpec(forearm, (
            DofSpec(f"elbow_flexion_{side}", (0.0, -1.0, 0.0), rot, (-0.1, 2.7)),
            DofSpec(f"pro_supination_{side}", (0.0, 0.0, -s), rot, (-1.6, 1.6)),
        )),
        JointSpec(hand, (
            DofSpec(f"wrist_flexion_{side}", (0.0, 1.0, 0.0), rot, (-1.2, 1.2)),
            DofSpec(f"wrist_deviation_{side}", (s, 0.0, 0.0), rot, (-0.4, 0.6)),
        )),
    ]
    markers = [
        MarkerSpec(f"shoulder_{side}", upper_arm, (0.0, 0.02 * s, 0.04)),
        MarkerSpec(f"elbow_{side}", upper_arm, (0.0, 0.035 * s, -0.29)),
        MarkerSpec(f"wrist_radial_{side}", forearm, (0.03, 0.0, -0.245)),
        MarkerSpec(f"wrist_ulnar_{side}", forearm, (-0.03, 0.0, -0.245)),
        MarkerSpec(f"hand_{side}", hand, (0.0, 0.0, -0.08)),
    ]
    return segments, joints, markers


def build_default_upper_body(side: Union[Side, str] = Side.BILATERAL) -> BodyModel:
    """
    Simplified upper-body chain used by both solvers.

    DOF order: trunk_tx, trunk_ty, trunk_tz, trunk_flexion,
    trunk_lateral_bending, trunk_rotation, then per arm (right before left)
    shoulder_flexion, shoulder_abduction, shoulder_rotation, elbow_flexion,
    pro_supination, wrist_flexion, wrist_deviation. Legs are not modelled.

    Args:
        side: "left", "right" or "bilateral"

    Returns:
        BodyModel with 6 + 7 DOFs per arm
    """
    side = Side(side)
    trans, rot = DofKind.TRANSLATION, DofKind.ROTATION
    segments = [SegmentSpec("trunk", None, (0.0, 0.0, 0.0))]
    joints = [JointSpec("trunk", (
        DofSpec("trunk_tx", (1.0, 0.0, 0.0), trans, (-1.0, 1.0)),
        DofSpec("trunk_ty", (0.0, 1.0, 0.0), trans, (-1.0, 1.0)),
        DofSpec("trunk_tz", (0.0, 0.0, 1.0), trans, (0.0, 1.5)),
        DofSpec("trunk_flexion", (0.0, 1.0, 0.0), rot, (-0.5, 1.0)),
        DofSpec("trunk_lateral_bending", (1.0, 0.0, 0.0), rot, (-0.6, 0.6)),
        DofSpec("trunk_rotation", (0.0, 0.0, 1.0), rot, (-0.8, 0.8)),
    ))]
    markers = [
        MarkerSpec("sternum", "trunk", (0.09, 0.0, 0.38)),
        MarkerSpec("c7", "trunk", (-0.08, 0.0, 0.50)),
        MarkerSpec("asis_r", "trunk", (0.07, -0.12, 0.02)),
        MarkerSpec("asis_l", "trunk", (0.07, 0.12, 0.02)),
    ]
    arms = {Side.RIGHT: ["r"], Side.LEFT: ["l"], Side.BILATERAL: ["r", "l"]}[side]
    for arm in arms:
        segs, jnts, mks = _arm(arm)
        segments += segs
        joints += jnts
        markers += mks
    return BodyModel(side, tuple(segments), tuple(joints), tuple(markers))


# --- serialization -------------------------------------------------------------

def model_to_document(model: BodyModel) -> BodyModelDocument:
    return BodyModelDocument(
        side=model.side,
        dof_order=model.dof_names,
        segments=[
            SegmentDoc(id=s.id, parent=s.parent, neutral_offset=s.neutral_offset, scalable=s.scalable)
            for s in model.segments
        ],
        joints=[
            JointDoc(segment=j.segment, dofs=[
                DofDoc(name=d.name, axis=d.axis, kind=d.kind, limits=d.limits) for d in j.dofs
            ])
            for j in model.joints
        ],
        markers=[
            MarkerDoc(id=m.id, segment=m.segment, local_offset=m.local_offset) for m in model.markers
        ],
    )


def model_from_document(doc: BodyModelDocument) -> BodyModel:
    model = BodyModel(
        side=doc.side,
        segments=tuple(SegmentSpec(s.id, s.parent, tuple(s.neutral_offset), s.scalable) for s in doc.segments),
        joints=tuple(
            JointSpec(j.segment, tuple(DofSpec(d.name, tuple(d.axis), d.kind, tuple(d.limits)) for d in j.dofs))
            for j in doc.joints
        ),
        markers=tuple(MarkerSpec(m.id, m.segment, tuple(m.local_offset)) for m in doc.markers),
    )
    if model.dof_names != list(doc.dof_order):
        raise ContractViolationError("dof_order does not match the joints", dof_order=doc.dof_order)
    return model


def save_model(model: BodyModel, path: Union[str, Path]) -> Path:
    return save_document(model_to_document(model), path)


def load_model(path: Union[str, Path]) -> BodyModel:
    """Read a model document, reporting parse failures with their location."""
    return model_from_document(load_document(path, BodyModelDocument, "model file"))
