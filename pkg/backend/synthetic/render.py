"""
Virtual capture: camera rigs, noisy keypoints, noisy 3D markers, corrupted series.
"""

import logging
from typing import Mapping, Union

import numpy as np

from analysis.trajectories import TrajectorySeries
from biomech.body_model import BodyModel
from biomech.kinematics import marker_positions
from camera.geometry import Camera, CameraIntrinsics, CameraRig, look_at, project_points
from errors import ContractViolationError
from models.schemas import Arm, ChannelId, NoiseSpec, RigSpec
from solvers.observations import Marker3DTrial, TrialObservations

from .scenario import GroundTruth

logger = logging.getLogger(__name__)

RIG_TARGET = (0.25, 0.0, 0.9)
MIN_CONFIDENCE = 0.35
MAX_LAG_S = 0.25


def default_rig(spec: RigSpec = RigSpec()) -> CameraRig:
    """Cameras evenly spaced on an arc centred on the participant's front."""
    half = np.radians(spec.arc_deg) / 2.0
    angles = np.linspace(-half, half, spec.n_cameras) if spec.n_cameras > 1 else np.zeros(1)
    width, height = spec.image_size
    intrinsics = CameraIntrinsics(spec.focal_px, spec.focal_px, width / 2.0, height / 2.0, image_size=spec.image_size)
    cameras = []
    for k, angle in enumerate(angles):
        position = (spec.radius_m * np.cos(angle), spec.radius_m * np.sin(angle), spec.height_m)
        cameras.append(Camera(f"cam{k}", intrinsics, look_at(position, RIG_TARGET)))
    return CameraRig(tuple(cameras))


def render_observations(
    model: BodyModel,
    truth: GroundTruth,
    rig: CameraRig,
    noise: NoiseSpec,
    trial_id: str,
    participant_id: str,
    arm: Arm,
    seed: int = 0,
) -> TrialObservations:
    """
    Project the true markers into every camera at the video rate.

    Gaussian pixel noise (sigma px) is added, keypoints are dropped with the
    global or per-camera dropout probability, and kept keypoints get a
    confidence drawn around ``noise.confidence_mean``.
    """
    rng = np.random.default_rng([seed, 2])
    points = marker_positions(model, truth.scale, truth.offsets, truth.video_angles)  # (T, M, 3)
    n_frames, n_markers = points.shape[:2]
    uv = np.empty((n_frames, len(rig), n_markers, 2))
    confidence = np.empty((n_frames, len(rig), n_markers))
    for c, camera in enumerate(rig.cameras):
        u, v, depth = project_points(camera, points)
        if np.any(depth <= 0):
            logger.warning("camera %s sees markers behind it", camera.id)
        uv[:, c, :, 0] = u + rng.normal(0.0, noise.pixel_sigma, u.shape) if noise.pixel_sigma else u
        uv[:, c, :, 1] = v + rng.normal(0.0, noise.pixel_sigma, v.shape) if noise.pixel_sigma else v
        conf = rng.normal(noise.confidence_mean, noise.confidence_sigma, u.shape)
        confidence[:, c] = np.clip(conf, MIN_CONFIDENCE, 1.0)
        p = noise.camera_dropout.get(camera.id, noise.dropout)
        dropped = rng.random(u.shape) < p
        confidence[:, c][dropped] = 0.0
        uv[:, c][dropped] = np.nan
    return TrialObservations(trial_id, participant_id, arm, truth.scenario.video_rate_hz, rig.ids, uv, confidence,
                             truth.side)


def render_markers(
    model: BodyModel,
    truth: GroundTruth,
    noise: NoiseSpec,
    trial_id: str,
    participant_id: str,
    arm: Arm,
    seed: int = 0,
) -> Marker3DTrial:
    """True marker trajectories at the marker rate plus Gaussian noise (metres)."""
    rng = np.random.default_rng([seed, 1])
    positions = marker_positions(model, truth.scale, truth.offsets, truth.marker_angles)
    if noise.marker_sigma_m:
        positions = positions + rng.normal(0.0, noise.marker_sigma_m, positions.shape)
    return Marker3DTrial(trial_id, participant_id, arm, truth.scenario.marker_rate_hz, model.marker_ids,
                         positions, truth.side)


def corrupt(
    series: TrajectorySeries,
    bias: Union[float, Mapping[ChannelId, float]] = 0.0,
    lag_samples: int = 0,
    noise_sigma: float = 0.0,
    seed: int = 0,
    max_lag_s: float = MAX_LAG_S,
) -> TrajectorySeries:
    """
    x[(n + k) mod N] + bias + white noise on every channel.

    The shift is circular: the last |k| samples (first, for k < 0) wrap around
    from the opposite end of x. The comparison overlap at lag k never pairs
    them, so with a = corrupt(x, c, k) and b = x it recovers bias c and lag k.

    Raises:
        ContractViolationError: If |k| samples exceed ``max_lag_s``
    """
    if abs(lag_samples) / series.rate_hz > max_lag_s + 1e-12:
        raise ContractViolationError("lag exceeds the alignment search range",
                                     lag_samples=lag_samples, max_lag_s=max_lag_s)
    rng = np.random.default_rng(seed)
    channels = {}
    for channel in ChannelId:
        if channel not in series.channels:
            continue
        offset = bias.get(channel, 0.0) if isinstance(bias, Mapping) else bias
        x = np.roll(series.channels[channel], -lag_samples) + offset
        if noise_sigma:
            x = x + rng.normal(0.0, noise_sigma, x.shape)
        channels[channel] = x
    return TrajectorySeries(series.rate_hz, series.t0, channels)
