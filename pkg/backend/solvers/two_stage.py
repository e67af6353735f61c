"""
Two-stage marker-based inverse kinematics.

Stage 1 scales the model from a stationary window; stage 2 fits joint angles
frame by frame with damped least squares, warm-started from the previous
frame.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from scipy.optimize import least_squares

from biomech.body_model import BodyModel, MarkerOffsets, ScaleParams, clamp_to_limits
from biomech.kinematics import marker_positions
from errors import ContractViolationError, ScalingError
from models.schemas import DofKind, TwoStageConfig

from .observations import Marker3DTrial

logger = logging.getLogger(__name__)

SCALE_BOUNDS = (0.2, 5.0)
FD_STEP = 1e-7
# Weight of the offset prior in the static solve; keeps scale identifiable.
OFFSET_PRIOR = 0.1


@dataclass(frozen=True)
class StaticSolution:
    scale: ScaleParams
    offsets: MarkerOffsets
    theta: np.ndarray
    rmse_m: float


@dataclass(frozen=True)
class FrameSolution:
    angles: np.ndarray
    marker_rmse_m: np.ndarray
    solved: np.ndarray
    flagged: List[int] = field(default_factory=list)


@dataclass(frozen=True)
class TwoStageResult:
    """Scaled model parameters and the per-frame trajectory of one trial."""
    trial_id: str
    scale: ScaleParams
    offsets: MarkerOffsets
    angles: np.ndarray
    rate_hz: float
    marker_rmse_m: np.ndarray
    flagged_frames: List[int]
    mean_rmse_m: float
    poor_fit: bool


def _offsets_from_raw(raw: np.ndarray, radius: float) -> np.ndarray:
    norm = np.sqrt(1.0 + np.sum(raw * raw, axis=-1, keepdims=True))
    return radius * raw / norm


def _root_translation_guess(model: BodyModel, target: np.ndarray) -> np.ndarray:
    """Place the root so its markers' centroid matches the observed centroid."""
    theta = model.neutral_angles()
    root = model.segments[0].id
    idx = [i for i, m in enumerate(model.markers) if m.segment == root and np.all(np.isfinite(target[i]))]
    joint = model.joint_for(root)
    if not idx or joint is None:
        return theta
    local = np.mean([model.markers[i].local_offset for i in idx], axis=0)
    shift = np.nanmean(target[idx], axis=0) - local
    for k, dof in enumerate(joint.dofs):
        if dof.kind == DofKind.TRANSLATION:
            theta[k] = float(np.dot(shift, dof.axis))
    return clamp_to_limits(model, theta)


def _interior(model: BodyModel, theta: np.ndarray) -> np.ndarray:
    lower, upper = model.limits()
    margin = 1e-9 * (upper - lower)
    return np.clip(theta, lower + margin, upper - margin)


def solve_static(
    model: BodyModel,
    static: np.ndarray,
    fit_offsets: bool = False,
    offset_radius: float = 0.05,
    max_rmse_m: float = 0.04,
) -> StaticSolution:
    """
    Stage 1: per-segment scale (and optionally marker offsets) from a static window.

    Args:
        model: Kinematic chain
        static: (T, M, 3) marker positions of the stationary window, model marker order
        fit_offsets: Also solve marker corrections
        offset_radius: Bound on the corrections
        max_rmse_m: Static residual above which the solve counts as diverged

    Returns:
        StaticSolution with the scale, offsets, mean static pose and residual

    Raises:
        ScalingError: If the solve does not converge to a plausible scale
    """
    with np.errstate(invalid="ignore"):
        target = np.nanmean(static, axis=0)
    observed = np.all(np.isfinite(target), axis=1)
    if observed.sum() < 3:
        raise ScalingError("too few markers visible in the static window", visible=int(observed.sum()))
    rows = np.repeat(observed, 3)
    scalable = np.array([s.scalable for s in model.segments])
    n_scale, n_dof, n_mk = int(scalable.sum()), model.dof_count, len(model.markers)
    lower, upper = model.limits()

    def unpack(x):
        log_scale = np.zeros(len(model.segments))
        log_scale[scalable] = x[:n_scale]
        theta = x[n_scale:n_scale + n_dof]
        raw = x[n_scale + n_dof:].reshape(n_mk, 3) if fit_offsets else np.zeros((n_mk, 3))
        return np.exp(log_scale), theta, _offsets_from_raw(raw, offset_radius)

    def residual(x):
        scale, theta, offsets = unpack(x)
        diff = (marker_positions(model, scale, offsets, theta) - np.nan_to_num(target)).ravel()[rows]
        if fit_offsets:
            return np.concatenate([diff, OFFSET_PRIOR * offsets.ravel()])
        return diff

    theta0 = _interior(model, _root_translation_guess(model, target))
    x0 = np.concatenate([np.zeros(n_scale), theta0, np.zeros(n_mk * 3 if fit_offsets else 0)])
    lb = np.concatenate([np.full(n_scale, np.log(SCALE_BOUNDS[0])), lower, np.full(x0.size - n_scale - n_dof, -np.inf)])
    ub = np.concatenate([np.full(n_scale, np.log(SCALE_BOUNDS[1])), upper, np.full(x0.size - n_scale - n_dof, np.inf)])
    result = least_squares(residual, x0, bounds=(lb, ub), method="trf", jac="3-point",
                           x_scale="jac", xtol=1e-12, ftol=1e-12, gtol=1e-12, max_nfev=500)
    scale, theta, offsets = unpack(result.x)
    marker_err = np.linalg.norm((marker_positions(model, scale, offsets, theta) - target)[observed], axis=1)
    rmse = float(np.sqrt(np.mean(marker_err ** 2)))
    log_scale = result.x[:n_scale]
    at_bound = bool(np.any(np.abs(log_scale[:, None] - np.log(SCALE_BOUNDS)[None, :]) < 1e-6))
    if result.status <= 0 or not np.all(np.isfinite(result.x)) or at_bound or rmse > max_rmse_m:
        raise ScalingError("static scaling diverged", status=int(result.status), rmse_m=rmse)
    logger.info("static scaling converged: rmse %.2e m after %d evaluations", rmse, result.nfev)
    return StaticSolution(ScaleParams(scale), MarkerOffsets(offsets, offset_radius), theta, rmse)


def _fd_jacobian(model, scale, offsets, theta, rows) -> np.ndarray:
    """Central-difference Jacobian with all perturbed poses batched into one FK call."""
    n = theta.size
    idx = np.arange(n)
    poses = np.repeat(theta[None], 2 * n, axis=0)
    poses[idx, idx] += FD_STEP
    poses[n + idx, idx] -= FD_STEP
    pts = marker_positions(model, scale, offsets, poses)
    diff = (pts[:n] - pts[n:]) / (2.0 * FD_STEP)
    return diff.reshape(n, -1)[:, rows].T


def solve_frames(
    model: BodyModel,
    scale: ScaleParams,
    offsets: MarkerOffsets,
    markers: np.ndarray,
    config: TwoStageConfig,
    theta0: Optional[np.ndarray] = None,
) -> FrameSolution:
    """
    Stage 2: per-frame joint angles by bounded damped least squares.

    Frames with too few visible markers keep the previous solution and are
    reported as unsolved; frames that hit the iteration cap or exceed the
    RMSE flag threshold are flagged.

    Args:
        markers: (T, M, 3), model marker order; NaN marks a missing marker
        theta0: Warm start for the first frame (defaults to a neutral pose)
    """
    frames = markers.shape[0]
    lower, upper = model.limits()
    theta = _interior(model, theta0 if theta0 is not None else _root_translation_guess(model, markers[0]))
    angles = np.zeros((frames, model.dof_count))
    rmse = np.full(frames, np.nan)
    solved = np.zeros(frames, dtype=bool)
    flagged: List[int] = []
    for f in range(frames):
        target = markers[f].ravel()
        rows = np.isfinite(target)
        if rows.sum() < 9:
            angles[f] = theta
            flagged.append(f)
            continue

        def residual(x, rows=rows, target=target):
            return marker_positions(model, scale, offsets, x).ravel()[rows] - target[rows]

        def jac(x, rows=rows):
            return _fd_jacobian(model, scale, offsets, x, rows)

        result = least_squares(residual, _interior(model, theta), jac=jac, bounds=(lower, upper),
                               method="trf", xtol=config.tol_m, ftol=config.tol_m, gtol=config.tol_m,
                               max_nfev=config.max_iterations)
        theta = result.x
        angles[f] = theta
        rmse[f] = float(np.sqrt(np.sum(result.fun ** 2) / (rows.sum() / 3)))
        solved[f] = True
        if result.status == 0 or rmse[f] > config.flag_rmse_m:
            flagged.append(f)
    if flagged:
        logger.warning("%d of %d frames flagged during frame fitting", len(flagged), frames)
    return FrameSolution(angles, rmse, solved, flagged)


def fit_two_stage(
    model: BodyModel,
    static: Marker3DTrial,
    motion: Marker3DTrial,
    config: TwoStageConfig = TwoStageConfig(),
    offset_radius: float = 0.05,
    scaled: Optional[Tuple[ScaleParams, MarkerOffsets]] = None,
) -> TwoStageResult:
    """
    Scale the model on ``static`` and fit ``motion`` frame by frame.

    Args:
        model: Kinematic chain
        static: Stationary window (at least ``config.static_window_s`` long)
        motion: Gap-filled marker trajectories
        config: Solver tolerances and quality thresholds
        offset_radius: Bound on marker corrections
        scaled: Reuse an existing stage-1 result instead of solving it again

    Returns:
        TwoStageResult with per-frame angles, per-frame marker RMSE and quality flags

    Raises:
        ContractViolationError: If the static window is too short or markers have gaps
        ScalingError: If stage 1 diverges
    """
    if static.duration_s + 1e-9 < config.static_window_s:
        raise ContractViolationError("static window too short", duration_s=static.duration_s,
                                     required_s=config.static_window_s)
    positions = motion.reordered(model.marker_ids)
    if not np.all(np.isfinite(positions)):
        raise ContractViolationError("motion markers must be complete (gap-fill upstream)",
                                     trial_id=motion.trial_id)
    if scaled is None:
        stat = solve_static(model, static.reordered(model.marker_ids), config.fit_offsets,
                            offset_radius, config.static_max_rmse_m)
        scale, offsets, theta0 = stat.scale, stat.offsets, stat.theta
    else:
        scale, offsets = scaled
        theta0 = None
    frames = solve_frames(model, scale, offsets, positions, config, theta0)
    mean_rmse = float(np.nanmean(frames.marker_rmse_m))
    poor = mean_rmse > config.max_mean_rmse_m
    if poor:
        logger.warning("trial %s: mean marker RMSE %.3f m exceeds %.3f m (poor fit)",
                       motion.trial_id, mean_rmse, config.max_mean_rmse_m)
    logger.info("trial %s: two-stage fit done, mean marker RMSE %.2e m", motion.trial_id, mean_rmse)
    return TwoStageResult(motion.trial_id, scale, offsets, frames.angles, motion.rate_hz,
                          frames.marker_rmse_m, frames.flagged, mean_rmse, poor)
