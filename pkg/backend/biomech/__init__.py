from .body_model import (
    BodyModel,
    DofSpec,
    JointSpec,
    MarkerOffsets,
    MarkerSpec,
    ScaleParams,
    SegmentSpec,
    build_default_upper_body,
    clamp_to_limits,
    load_model,
    model_from_document,
    model_to_document,
    save_model,
)
from .kinematics import axis_rotation, forward_kinematics, marker_positions

__all__ = [
    "BodyModel",
    "DofSpec",
    "JointSpec",
    "MarkerOffsets",
    "MarkerSpec",
    "ScaleParams",
    "SegmentSpec",
    "build_default_upper_body",
    "clamp_to_limits",
    "load_model",
    "model_from_document",
    "model_to_document",
    "save_model",
    "axis_rotation",
    "forward_kinematics",
    "marker_positions",
]
