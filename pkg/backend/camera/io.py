"""
Calibration and per-camera keypoint files.

Keypoint files live at ``<keypoints_dir>/<trial_id>/<camera_id>.csv`` with
rows (frame_index, keypoint_id, u, v, confidence). Keypoints a detector did
not report are simply absent.
"""

import logging
from pathlib import Path
from typing import Sequence, Tuple, Union

import numpy as np
import pandas as pd

from errors import ContractViolationError, MalformedFileError
from fileio import load_document, read_table, save_document, write_table
from models.schemas import CalibrationDocument, CameraDoc

from .geometry import Camera, CameraExtrinsics, CameraIntrinsics, CameraRig

logger = logging.getLogger(__name__)

KEYPOINT_COLUMNS = ["frame_index", "keypoint_id", "u", "v", "confidence"]


def rig_to_document(rig: CameraRig) -> CalibrationDocument:
    return CalibrationDocument(cameras=[
        CameraDoc(
            id=cam.id,
            image_size=cam.intrinsics.image_size,
            K=(cam.intrinsics.fx, cam.intrinsics.fy, cam.intrinsics.cx, cam.intrinsics.cy),
            dist=cam.intrinsics.dist,
            R=[float(x) for x in cam.extrinsics.rotation.ravel()],
            t=tuple(float(x) for x in cam.extrinsics.translation),
        )
        for cam in rig.cameras
    ])


def rig_from_document(doc: CalibrationDocument) -> CameraRig:
    cameras = []
    for cam in doc.cameras:
        fx, fy, cx, cy = cam.K
        cameras.append(Camera(
            cam.id,
            CameraIntrinsics(fx, fy, cx, cy, tuple(cam.dist), tuple(cam.image_size)),
            CameraExtrinsics(np.array(cam.R).reshape(3, 3), np.array(cam.t)),
        ))
    return CameraRig(tuple(cameras))


def save_calibration(rig: CameraRig, path: Union[str, Path]) -> Path:
    return save_document(rig_to_document(rig), path)


def load_calibration(path: Union[str, Path]) -> CameraRig:
    """Read a calibration file into a CameraRig."""
    return rig_from_document(load_document(path, CalibrationDocument, "calibration file"))


def write_keypoints(
    path: Union[str, Path],
    camera_id: str,
    keypoint_ids: Sequence[str],
    uv: np.ndarray,
    confidence: np.ndarray,
    rate_hz: float,
) -> Path:
    """
    Write one camera's keypoints for a trial.

    Args:
        uv: (T, K, 2) pixel positions
        confidence: (T, K); zero-confidence or non-finite entries are not written
    """
    frames, keypoints = np.nonzero((confidence > 0) & np.all(np.isfinite(uv), axis=-1))
    table = pd.DataFrame({
        "frame_index": frames,
        "keypoint_id": [keypoint_ids[k] for k in keypoints],
        "u": uv[frames, keypoints, 0],
        "v": uv[frames, keypoints, 1],
        "confidence": confidence[frames, keypoints],
    }, columns=KEYPOINT_COLUMNS)
    n_frames = uv.shape[0]
    return write_table(path, table, "keypoints", {"camera": camera_id, "rate_hz": rate_hz, "frames": n_frames})


def read_keypoints(
    path: Union[str, Path],
    keypoint_ids: Sequence[str],
    n_frames: int = None,
) -> Tuple[np.ndarray, np.ndarray, float]:
    """
    Read one camera's keypoint file onto a dense (frame, keypoint) grid.

    Args:
        path: Keypoint file
        keypoint_ids: Keypoint ids in model marker order
        n_frames: Frame count; defaults to the file's ``frames`` header

    Returns:
        Tuple (uv (T, K, 2) with NaN where missing, confidence (T, K), rate Hz)

    Raises:
        MalformedFileError: On unparsable rows or confidences outside [0, 1]
        ContractViolationError: If the file references keypoints the model lacks
    """
    meta, table = read_table(path, "keypoint file", KEYPOINT_COLUMNS, ["frame_index", "u", "v", "confidence"])
    try:
        rate = float(meta.get("rate_hz", "nan"))
        n_frames = int(meta["frames"]) if n_frames is None else n_frames
    except (KeyError, ValueError):
        raise MalformedFileError(str(path), "header needs numeric 'rate_hz' and 'frames'")
    if not np.isfinite(rate) or rate <= 0:
        raise MalformedFileError(str(path), "rate_hz must be positive")

    unknown = sorted(set(table["keypoint_id"]) - set(keypoint_ids))
    if unknown:
        raise ContractViolationError("keypoint file references ids missing from the model",
                                     path=str(path), ids=unknown)
    conf = table["confidence"].to_numpy()
    outside = ~((conf >= 0.0) & (conf <= 1.0))
    if outside.any():
        row = int(np.nonzero(outside)[0][0])
        raise MalformedFileError(str(path), "confidence outside [0, 1]",
                                 len(meta) + 2 + row, KEYPOINT_COLUMNS.index("confidence") + 1)

    uv = np.full((n_frames, len(keypoint_ids), 2), np.nan)
    confidence = np.zeros((n_frames, len(keypoint_ids)))
    index = {k: i for i, k in enumerate(keypoint_ids)}
    frames = table["frame_index"].to_numpy().astype(int)
    keep = (frames >= 0) & (frames < n_frames)
    if not keep.all():
        logger.warning("%s: %d rows outside the frame range ignored", path, int((~keep).sum()))
    cols = np.array([index[k] for k in table["keypoint_id"]], dtype=int)
    uv[frames[keep], cols[keep], 0] = table["u"].to_numpy()[keep]
    uv[frames[keep], cols[keep], 1] = table["v"].to_numpy()[keep]
    confidence[frames[keep], cols[keep]] = conf[keep]
    return uv, confidence, rate
