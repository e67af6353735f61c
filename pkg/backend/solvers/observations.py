"""
Solver inputs: per-trial 2D keypoint observations and 3D marker trials.

Dataset layout on disk::

    <dataset>/trials.json                      TrialManifest
    <dataset>/calibration.json                 CalibrationDocument
    <dataset>/keypoints/<trial_id>/<cam>.csv   per-camera keypoints
    <dataset>/markers/<trial_id>.csv           3D marker trajectories
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from camera.geometry import CameraRig
from camera.io import read_keypoints
from errors import ContractViolationError, MalformedFileError, MissingInputError, NoTrialsError
from fileio import load_document, read_table, save_document, write_table
from models.schemas import Arm, TrialInfo, TrialManifest

logger = logging.getLogger(__name__)

MANIFEST_NAME = "trials.json"


@dataclass(frozen=True)
class TrialObservations:
    """
    Multi-camera keypoints for one trial.

    ``uv`` has shape (T, C, M, 2) and ``confidence`` (T, C, M), with cameras in
    ``camera_ids`` order and keypoints in model marker order.
    """
    trial_id: str
    participant_id: str
    arm: Arm
    rate_hz: float
    camera_ids: Sequence[str]
    uv: np.ndarray
    confidence: np.ndarray
    side: str = "right"

    def __post_init__(self):
        uv = np.asarray(self.uv, dtype=np.float64)
        conf = np.asarray(self.confidence, dtype=np.float64)
        if self.rate_hz <= 0:
            raise ContractViolationError("frame rate must be positive", trial_id=self.trial_id)
        if uv.ndim != 4 or uv.shape[-1] != 2 or conf.shape != uv.shape[:3]:
            raise ContractViolationError("observations need uv (T, C, M, 2) and confidence (T, C, M)",
                                         trial_id=self.trial_id)
        if uv.shape[1] != len(self.camera_ids):
            raise ContractViolationError("camera count does not match camera_ids", trial_id=self.trial_id)
        if np.any((conf < 0) | (conf > 1)):
            raise ContractViolationError("confidence must lie in [0, 1]", trial_id=self.trial_id)
        object.__setattr__(self, "uv", uv)
        object.__setattr__(self, "confidence", conf)
        object.__setattr__(self, "camera_ids", tuple(self.camera_ids))

    @property
    def n_frames(self) -> int:
        return self.uv.shape[0]

    @property
    def duration_s(self) -> float:
        return (self.n_frames - 1) / self.rate_hz

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_frames) / self.rate_hz

    def normalized_times(self) -> np.ndarray:
        """Frame times mapped onto [0, 1]."""
        if self.n_frames < 2:
            return np.zeros(self.n_frames)
        return np.arange(self.n_frames) / (self.n_frames - 1)

    def select_cameras(self, camera_ids: Sequence[str]) -> "TrialObservations":
        missing = [c for c in camera_ids if c not in self.camera_ids]
        if missing:
            raise ContractViolationError("unknown camera ids", ids=missing, trial_id=self.trial_id)
        keep = [c for c in self.camera_ids if c in set(camera_ids)]
        idx = [self.camera_ids.index(c) for c in keep]
        return TrialObservations(self.trial_id, self.participant_id, self.arm, self.rate_hz,
                                 keep, self.uv[:, idx], self.confidence[:, idx], self.side)


@dataclass(frozen=True)
class Marker3DTrial:
    """Measured (or triangulated) 3D marker trajectories, (T, M, 3) metres."""
    trial_id: str
    participant_id: str
    arm: Arm
    rate_hz: float
    marker_ids: Sequence[str]
    positions: np.ndarray
    side: str = "right"

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=np.float64)
        if pos.ndim != 3 or pos.shape[1:] != (len(self.marker_ids), 3):
            raise ContractViolationError("marker positions must have shape (T, markers, 3)",
                                         trial_id=self.trial_id)
        if self.rate_hz <= 0:
            raise ContractViolationError("marker rate must be positive", trial_id=self.trial_id)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "marker_ids", tuple(self.marker_ids))

    @property
    def n_frames(self) -> int:
        return self.positions.shape[0]

    @property
    def duration_s(self) -> float:
        return (self.n_frames - 1) / self.rate_hz

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_frames) / self.rate_hz

    def window(self, seconds: float) -> "Marker3DTrial":
        """The leading ``seconds`` of the trial (inclusive of the boundary frame)."""
        n = int(np.floor(seconds * self.rate_hz + 1e-9)) + 1
        return Marker3DTrial(self.trial_id, self.participant_id, self.arm, self.rate_hz,
                             self.marker_ids, self.positions[:n], self.side)

    def reordered(self, marker_ids: Sequence[str]) -> np.ndarray:
        """Positions in ``marker_ids`` order; absent markers are NaN."""
        out = np.full((self.n_frames, len(marker_ids), 3), np.nan)
        for j, mid in enumerate(marker_ids):
            if mid in self.marker_ids:
                out[:, j] = self.positions[:, self.marker_ids.index(mid)]
        return out


# --- manifest -----------------------------------------------------------------

def save_manifest(trials: Sequence[TrialInfo], dataset_dir: Union[str, Path]) -> Path:
    return save_document(TrialManifest(trials=list(trials)), Path(dataset_dir) / MANIFEST_NAME)


def load_manifest(location: Union[str, Path]) -> List[TrialInfo]:
    """Trials of a dataset directory or of an explicit manifest file."""
    path = Path(location)
    if path.suffix != ".json":
        path = path / MANIFEST_NAME
    trials = load_document(path, TrialManifest, "trial manifest").trials
    if not trials:
        raise NoTrialsError("trial manifest lists no trials", path=str(path))
    return trials


# --- keypoints ------------------------------------------------------------------

def load_trial_observations(
    keypoints_dir: Union[str, Path],
    info: TrialInfo,
    rig: CameraRig,
    marker_ids: Sequence[str],
) -> TrialObservations:
    """
    Assemble one trial's keypoints from its per-camera files.

    Cameras of the rig without a keypoint file contribute no observations.
    """
    trial_dir = Path(keypoints_dir) / info.trial_id
    if not trial_dir.is_dir():
        raise MissingInputError(str(trial_dir), f"keypoints for trial {info.trial_id}")
    n_frames = int(round(info.duration_s * info.video_rate_hz)) + 1
    uv = np.full((n_frames, len(rig), len(marker_ids), 2), np.nan)
    conf = np.zeros((n_frames, len(rig), len(marker_ids)))
    for c, cam_id in enumerate(rig.ids):
        path = trial_dir / f"{cam_id}.csv"
        if not path.exists():
            logger.warning("trial %s: no keypoints for camera %s", info.trial_id, cam_id)
            continue
        cam_uv, cam_conf, rate = read_keypoints(path, marker_ids, n_frames)
        if abs(rate - info.video_rate_hz) > 1e-9:
            raise MalformedFileError(str(path), f"rate_hz {rate} differs from manifest {info.video_rate_hz}")
        uv[:, c] = cam_uv
        conf[:, c] = cam_conf
    return TrialObservations(info.trial_id, info.participant_id, info.arm, info.video_rate_hz,
                             rig.ids, uv, conf, info.side)


# --- 3D markers -----------------------------------------------------------------

def _marker_columns(marker_ids: Sequence[str]) -> List[str]:
    return [f"{mid}_{axis}" for mid in marker_ids for axis in "xyz"]


def write_marker_trial(trial: Marker3DTrial, path: Union[str, Path]) -> Path:
    """Wide table: time_s then <marker>_x/_y/_z in metres."""
    table = pd.DataFrame(trial.positions.reshape(trial.n_frames, -1), columns=_marker_columns(trial.marker_ids))
    table.insert(0, "time_s", trial.times)
    meta = {
        "trial_id": trial.trial_id,
        "participant_id": trial.participant_id,
        "arm": trial.arm.value,
        "side": trial.side,
        "rate_hz": trial.rate_hz,
        "units": "m",
    }
    return write_table(path, table, "markers", meta)


def read_marker_trial(path: Union[str, Path]) -> Marker3DTrial:
    meta, table = read_table(path, "marker file", ["time_s"])
    columns = [c for c in table.columns if c != "time_s"]
    if len(columns) % 3 or any(not c.endswith(("_x", "_y", "_z")) for c in columns):
        raise MalformedFileError(str(path), "marker columns must come in _x/_y/_z triples", 1 + len(meta))
    _, table = read_table(path, "marker file", ["time_s"], table.columns)
    marker_ids = [c[:-2] for c in columns[::3]]
    if _marker_columns(marker_ids) != columns:
        raise MalformedFileError(str(path), "marker columns out of x/y/z order", 1 + len(meta))
    try:
        rate = float(meta["rate_hz"])
        arm = Arm(meta.get("arm", Arm.UNAFFECTED.value))
    except (KeyError, ValueError) as e:
        raise MalformedFileError(str(path), f"bad metadata header ({e})")
    positions = table[columns].to_numpy(dtype=np.float64).reshape(len(table), len(marker_ids), 3)
    return Marker3DTrial(
        meta.get("trial_id", Path(path).stem),
        meta.get("participant_id", "unknown"),
        arm,
        rate,
        marker_ids,
        positions,
        meta.get("side", "right"),
    )


def load_marker_trials(markers_dir: Union[str, Path], trial_ids: Optional[Sequence[str]] = None) -> List[Marker3DTrial]:
    markers_dir = Path(markers_dir)
    if not markers_dir.is_dir():
        raise MissingInputError(str(markers_dir), "markers directory")
    paths = sorted(markers_dir.glob("*.csv"))
    if trial_ids is not None:
        paths = [p for p in paths if p.stem in set(trial_ids)]
    if not paths:
        raise NoTrialsError("no marker trials found", path=str(markers_dir))
    return [read_marker_trial(p) for p in paths]
