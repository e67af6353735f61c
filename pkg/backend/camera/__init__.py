from .geometry import (
    Camera,
    CameraExtrinsics,
    CameraIntrinsics,
    CameraRig,
    TriangulationResult,
    distort,
    look_at,
    pixels_to_normalized,
    project,
    project_points,
    triangulate,
    triangulate_frames,
    undistort,
)
from .io import load_calibration, read_keypoints, save_calibration, write_keypoints

__all__ = [
    "Camera",
    "CameraExtrinsics",
    "CameraIntrinsics",
    "CameraRig",
    "TriangulationResult",
    "distort",
    "look_at",
    "pixels_to_normalized",
    "project",
    "project_points",
    "triangulate",
    "triangulate_frames",
    "undistort",
    "load_calibration",
    "read_keypoints",
    "save_calibration",
    "write_keypoints",
]
