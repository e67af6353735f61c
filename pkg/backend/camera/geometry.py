"""
Pinhole cameras with Brown-Conrady distortion, projection and DLT triangulation.

Camera convention: x right, y down, z forward (depth). Extrinsics map world
points into the camera frame: X_cam = R @ X_world + t.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from autodiff import tensor as ad
from errors import BehindCameraError, ContractViolationError, UnderdeterminedError

logger = logging.getLogger(__name__)

UNDISTORT_ITERATIONS = 20
UNDISTORT_TOL = 1e-12
DEFAULT_CONFIDENCE_FLOOR = 0.3


@dataclass(frozen=True)
class CameraIntrinsics:
    """Focal lengths / principal point in pixels; dist = (k1, k2, p1, p2, k3)."""
    fx: float
    fy: float
    cx: float
    cy: float
    dist: Tuple[float, float, float, float, float] = (0.0, 0.0, 0.0, 0.0, 0.0)
    image_size: Tuple[int, int] = (1920, 1080)

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ContractViolationError("focal lengths must be positive")
        if self.image_size[0] <= 0 or self.image_size[1] <= 0:
            raise ContractViolationError("image size must be positive")
        if len(self.dist) != 5:
            raise ContractViolationError("dist needs (k1, k2, p1, p2, k3)")


@dataclass(frozen=True)
class CameraExtrinsics:
    """World-to-camera rotation (orthonormal, det +1) and translation in metres."""
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        rot = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        trans = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if np.linalg.norm(rot.T @ rot - np.eye(3)) >= 1e-9 or np.linalg.det(rot) <= 0:
            raise ContractViolationError("camera rotation must be orthonormal with det +1")
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", trans)

    @property
    def center(self) -> np.ndarray:
        """Camera centre in world coordinates."""
        return -self.rotation.T @ self.translation


@dataclass(frozen=True)
class Camera:
    id: str
    intrinsics: CameraIntrinsics
    extrinsics: CameraExtrinsics


@dataclass(frozen=True)
class CameraRig:
    """Ordered, uniquely named cameras."""
    cameras: Tuple[Camera, ...]

    def __post_init__(self):
        ids = [c.id for c in self.cameras]
        if not ids:
            raise ContractViolationError("a rig needs at least one camera")
        if len(set(ids)) != len(ids):
            raise ContractViolationError("camera ids must be unique")
        object.__setattr__(self, "cameras", tuple(self.cameras))

    def __len__(self) -> int:
        return len(self.cameras)

    @property
    def ids(self) -> List[str]:
        return [c.id for c in self.cameras]

    def subset(self, ids: Sequence[str]) -> "CameraRig":
        """Rig restricted to ``ids`` (in rig order)."""
        unknown = set(ids) - set(self.ids)
        if unknown:
            raise ContractViolationError("unknown camera ids", ids=sorted(unknown))
        return CameraRig(tuple(c for c in self.cameras if c.id in set(ids)))

    def index_of(self, ids: Sequence[str]) -> List[int]:
        return [self.ids.index(i) for i in ids]


def look_at(position, target, up=(0.0, 0.0, 1.0)) -> CameraExtrinsics:
    """Extrinsics of a camera at ``position`` looking at ``target``."""
    position = np.asarray(position, dtype=np.float64)
    forward = np.asarray(target, dtype=np.float64) - position
    forward /= np.linalg.norm(forward)
    right = np.cross(forward, np.asarray(up, dtype=np.float64))
    right /= np.linalg.norm(right)
    down = np.cross(forward, right)
    rotation = np.stack([right, down, forward])
    return CameraExtrinsics(rotation, -rotation @ position)


# --- distortion -----------------------------------------------------------------

def distort(intrinsics: CameraIntrinsics, x, y):
    """Apply radial-tangential distortion to normalized image coordinates."""
    k1, k2, p1, p2, k3 = intrinsics.dist
    r2 = x * x + y * y
    radial = 1.0 + r2 * (k1 + r2 * (k2 + r2 * k3))
    xd = x * radial + 2.0 * p1 * x * y + p2 * (r2 + 2.0 * x * x)
    yd = y * radial + p1 * (r2 + 2.0 * y * y) + 2.0 * p2 * x * y
    return xd, yd


def undistort(intrinsics: CameraIntrinsics, xd: np.ndarray, yd: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Invert ``distort`` by fixed-point iteration (numpy only)."""
    k1, k2, p1, p2, k3 = intrinsics.dist
    xd = np.asarray(xd, dtype=np.float64)
    yd = np.asarray(yd, dtype=np.float64)
    x, y = xd.copy(), yd.copy()
    for _ in range(UNDISTORT_ITERATIONS):
        r2 = x * x + y * y
        radial = 1.0 + r2 * (k1 + r2 * (k2 + r2 * k3))
        dx = 2.0 * p1 * x * y + p2 * (r2 + 2.0 * x * x)
        dy = p1 * (r2 + 2.0 * y * y) + 2.0 * p2 * x * y
        x_new = (xd - dx) / radial
        y_new = (yd - dy) / radial
        delta = np.nanmax(np.abs(np.concatenate([np.ravel(x_new - x), np.ravel(y_new - y)]))) if x.size else 0.0
        x, y = x_new, y_new
        if delta < UNDISTORT_TOL:
            break
    return x, y


def pixels_to_normalized(intrinsics: CameraIntrinsics, u, v) -> Tuple[np.ndarray, np.ndarray]:
    """Undistorted normalized coordinates of pixel positions."""
    xd = (np.asarray(u, dtype=np.float64) - intrinsics.cx) / intrinsics.fx
    yd = (np.asarray(v, dtype=np.float64) - intrinsics.cy) / intrinsics.fy
    return undistort(intrinsics, xd, yd)


# --- projection -----------------------------------------------------------------

def project_points(camera: Camera, points):
    """
    Project world points (..., 3) into pixels without any depth check.

    Works on arrays and traced Tensors.

    Returns:
        Tuple (u, v, depth), each of shape (...)
    """
    intr, extr = camera.intrinsics, camera.extrinsics
    cam = ad.matmul(points, extr.rotation.T) if ad.value_of(points).ndim >= 2 else \
        ad.reshape(ad.matmul(ad.reshape(points, (1, 3)), extr.rotation.T), (3,))
    cam = cam + extr.translation
    depth = ad.getitem(cam, (Ellipsis, 2))
    x = ad.getitem(cam, (Ellipsis, 0)) / depth
    y = ad.getitem(cam, (Ellipsis, 1)) / depth
    xd, yd = distort(intr, x, y)
    return intr.fx * xd + intr.cx, intr.fy * yd + intr.cy, depth


def project(intrinsics: CameraIntrinsics, extrinsics: CameraExtrinsics, point):
    """
    Pixel coordinates of one world point.

    Args:
        intrinsics: Camera intrinsics
        extrinsics: World-to-camera transform
        point: 3-vector in metres (array or traced Tensor)

    Returns:
        (u, v) as a length-2 array (Tensor when ``point`` is traced)

    Raises:
        BehindCameraError: If the point has non-positive depth
    """
    u, v, depth = project_points(Camera("_", intrinsics, extrinsics), point)
    if float(np.asarray(ad.value_of(depth))) <= 0.0:
        raise BehindCameraError("point is behind the camera", depth=float(ad.value_of(depth)))
    return ad.stack([u, v])


# --- triangulation --------------------------------------------------------------

@dataclass(frozen=True)
class TriangulationResult:
    point: np.ndarray
    residual_rms_px: float
    n_cameras: int


def _usable(obs: np.ndarray, floor: float) -> np.ndarray:
    return np.isfinite(obs[..., 0]) & np.isfinite(obs[..., 1]) & (obs[..., 2] >= floor)


def _dlt_rows(rig: CameraRig, obs: np.ndarray, usable: np.ndarray) -> np.ndarray:
    """Weighted DLT rows, shape (..., 2C, 4); unusable cameras get zero rows."""
    rows = []
    for c, camera in enumerate(rig.cameras):
        u = np.where(usable[..., c], obs[..., c, 0], camera.intrinsics.cx)
        v = np.where(usable[..., c], obs[..., c, 1], camera.intrinsics.cy)
        x, y = pixels_to_normalized(camera.intrinsics, u, v)
        proj = np.hstack([camera.extrinsics.rotation, camera.extrinsics.translation[:, None]])
        # Row scale = confidence so the squared algebraic error is weighted by confidence^2.
        w = np.where(usable[..., c], obs[..., c, 2], 0.0)[..., None]
        rows.append(w * (x[..., None] * proj[2] - proj[0]))
        rows.append(w * (y[..., None] * proj[2] - proj[1]))
    return np.stack(rows, axis=-2)


def _solve_homogeneous(a: np.ndarray) -> np.ndarray:
    _, _, vt = np.linalg.svd(a)
    h = vt[..., -1, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        return h[..., :3] / h[..., 3:4]


def reprojection_rms(rig: CameraRig, point: np.ndarray, obs: np.ndarray, usable: np.ndarray) -> float:
    errors = []
    for c, camera in enumerate(rig.cameras):
        if not usable[c]:
            continue
        u, v, _ = project_points(camera, point)
        errors.append((u - obs[c, 0]) ** 2 + (v - obs[c, 1]) ** 2)
    return float(np.sqrt(np.mean(errors))) if errors else float("nan")


def triangulate(
    rig: CameraRig,
    obs: np.ndarray,
    min_cameras: int = 2,
    confidence_floor: float = DEFAULT_CONFIDENCE_FLOOR,
) -> TriangulationResult:
    """
    Confidence-weighted linear (DLT) triangulation of one keypoint.

    Args:
        rig: Calibrated cameras
        obs: (C, 3) rows of (u, v, confidence); NaN u/v marks a missing keypoint
        min_cameras: Minimum usable observations
        confidence_floor: Observations below this confidence are excluded

    Returns:
        TriangulationResult with the point (metres) and residual RMS (pixels)

    Raises:
        UnderdeterminedError: If fewer than ``min_cameras`` observations are usable
    """
    obs = np.asarray(obs, dtype=np.float64)
    if obs.shape != (len(rig), 3):
        raise ContractViolationError("observations must have shape (cameras, 3)",
                                     expected=[len(rig), 3], got=list(obs.shape))
    usable = _usable(obs, confidence_floor)
    n_used = int(usable.sum())
    if n_used < max(min_cameras, 2):
        raise UnderdeterminedError(
            "not enough cameras observe the keypoint", usable=n_used, required=max(min_cameras, 2)
        )
    point = _solve_homogeneous(_dlt_rows(rig, obs, usable))
    return TriangulationResult(point, reprojection_rms(rig, point, obs, usable), n_used)


def triangulate_frames(
    rig: CameraRig,
    uv: np.ndarray,
    confidence: np.ndarray,
    min_cameras: int = 2,
    confidence_floor: float = DEFAULT_CONFIDENCE_FLOOR,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Batched triangulation of every frame/keypoint.

    Args:
        uv: (T, C, M, 2) pixel observations
        confidence: (T, C, M) confidences

    Returns:
        Tuple (points (T, M, 3) with NaN where under-determined, usable camera counts (T, M))
    """
    obs = np.concatenate([uv, confidence[..., None]], axis=-1)  # (T, C, M, 3)
    obs = np.moveaxis(obs, 1, 2)  # (T, M, C, 3)
    usable = _usable(obs, confidence_floor)
    counts = usable.sum(axis=-1)
    points = _solve_homogeneous(_dlt_rows(rig, obs, usable))
    points[counts < max(min_cameras, 2)] = np.nan
    return points, counts
