"""
End-to-end markerless fitting.

Each trial's joint-angle trajectory is an implicit function of normalized
time (``autodiff.mlp``). Body scale and marker offsets are shared across all
trials of a participant and optimized jointly with every trajectory network
against the confidence-weighted Huber reprojection error of the 2D keypoints.

Trials are processed in batches; each optimizer step accumulates the
gradient of every batch (normalized by the global observation weight), so a
step is the gradient of the full session loss and results do not depend on
the batch count.
"""

import logging
from collections import OrderedDict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from autodiff import tensor as ad
from autodiff.grad import value_and_gradient
from autodiff.mlp import MLPSpec, init_mlp_params, mlp_eval, mlp_raw, unsquash
from autodiff.optim import AdamState, adam_step, cosine_lr
from autodiff.params import ParamVector
from biomech.body_model import BodyModel, MarkerOffsets, ScaleParams, clamp_to_limits
from biomech.kinematics import marker_positions
from camera.geometry import CameraRig, project_points, triangulate_frames
from errors import ContractViolationError, FitError, ScalingError
from models.schemas import ExclusionReason, FitConfig, TwoStageConfig

from .observations import TrialObservations
from .two_stage import solve_frames, solve_static

logger = logging.getLogger(__name__)

# Margin for mapping initial angles back through the sigmoid squashing.
PREFIT_MARGIN = 1e-3
INIT_FRAME_CONFIG = TwoStageConfig(tol_m=1e-8, max_iterations=50, flag_rmse_m=0.05)


@dataclass(frozen=True)
class TrialDiagnostics:
    trial_id: str
    status: str
    reason: Optional[str] = None
    final_loss: Optional[float] = None
    reprojection_rms_px: Optional[float] = None
    n_frames: int = 0


@dataclass(frozen=True)
class SessionFit:
    """Shared scale/offsets plus one trajectory network per fitted trial."""
    scale: ScaleParams
    offsets: MarkerOffsets
    spec: MLPSpec
    phi: Mapping[str, np.ndarray]
    diagnostics: Mapping[str, TrialDiagnostics]
    camera_ids: Tuple[str, ...]
    loss_history: np.ndarray = field(default_factory=lambda: np.zeros(0))
    best_loss: float = float("nan")

    @property
    def fitted_trials(self) -> List[str]:
        return list(self.phi.keys())

    def angles(self, trial_id: str, n_frames: int) -> np.ndarray:
        """Joint angles (n_frames, dof) sampled uniformly over the trial."""
        t = np.linspace(0.0, 1.0, n_frames) if n_frames > 1 else np.zeros(1)
        return mlp_eval(self.spec, self.phi[trial_id], t)


@dataclass(frozen=True)
class _PreparedTrial:
    """Constant per-trial arrays used inside the loss."""
    trial_id: str
    t: np.ndarray
    obs_u: np.ndarray
    obs_v: np.ndarray
    weight: np.ndarray

    @classmethod
    def build(cls, trial: TrialObservations, confidence_floor: float) -> "_PreparedTrial":
        finite = np.all(np.isfinite(trial.uv), axis=-1)
        usable = finite & (trial.confidence >= confidence_floor)
        weight = np.where(usable, trial.confidence, 0.0)
        uv = np.where(usable[..., None], trial.uv, 0.0)
        return cls(trial.trial_id, trial.normalized_times(), uv[..., 0], uv[..., 1], weight)


# --- loss -----------------------------------------------------------------------

def huber_on_squared(q, delta: float):
    """Huber penalty of r given q = r**2; the square root is only taken above delta."""
    quadratic = 0.5 * q
    linear = delta * ad.sqrt(ad.maximum(q, delta * delta)) - 0.5 * delta * delta
    return ad.where(ad.value_of(q) <= delta * delta, quadratic, linear)


def scale_from_block(model: BodyModel, log_scale):
    scalable = np.array([s.scalable for s in model.segments])
    return ad.exp(ad.where(scalable, log_scale, np.zeros(len(scalable))))


def offsets_from_block(raw, radius: float):
    """radius * raw / sqrt(1 + |raw|^2): strictly inside the radius."""
    norm = ad.sqrt(1.0 + ad.tsum(raw * raw, axis=1, keepdims=True))
    return radius * raw / norm


def _trial_terms(model, rig, spec, scale, offsets, phi, prep: _PreparedTrial, delta: float):
    """(weighted Huber sum, mean squared second difference of theta) for one trial."""
    theta = mlp_eval(spec, phi, prep.t)
    positions = marker_positions(model, scale, offsets, theta)
    data = 0.0
    for c, camera in enumerate(rig.cameras):
        if not prep.weight[:, c].any():
            continue
        u, v, _ = project_points(camera, positions)
        du = u - prep.obs_u[:, c]
        dv = v - prep.obs_v[:, c]
        data = data + ad.tsum(huber_on_squared(du * du + dv * dv, delta) * prep.weight[:, c])
    smooth = 0.0
    if len(prep.t) >= 3:
        accel = ad.getitem(theta, slice(2, None)) - 2.0 * ad.getitem(theta, slice(1, -1)) \
            + ad.getitem(theta, slice(None, -2))
        smooth = ad.mean(accel * accel)
    return data, smooth


def reprojection_loss(
    model: BodyModel,
    rig: CameraRig,
    scale,
    offsets,
    phis: Mapping[str, object],
    trials: Sequence[TrialObservations],
    config: FitConfig,
    spec: MLPSpec,
):
    """
    Confidence-weighted Huber reprojection loss of a set of trials.

    Sum over trials, frames, cameras and markers of w * huber(|residual_px|),
    divided by the total weight, plus ``smoothness_weight`` times the mean
    squared second difference of theta and ``offset_weight`` times the sum of
    squared marker offsets.

    Args:
        scale: (segments,) scale factors (array or Tensor)
        offsets: (markers, 3) corrections in metres (array or Tensor)
        phis: trial_id -> flat network parameters
        trials: Observations whose camera order matches ``rig``

    Returns:
        Scalar loss (Tensor when any parameter is traced)
    """
    preps = [_PreparedTrial.build(t, config.loss.confidence_floor) for t in trials]
    total_weight = sum(float(p.weight.sum()) for p in preps) or 1.0
    data, smooth = 0.0, 0.0
    for prep in preps:
        d, s = _trial_terms(model, rig, spec, scale, offsets, phis[prep.trial_id], prep,
                            config.loss.huber_delta_px)
        data = data + d
        smooth = smooth + s
    loss = data / total_weight
    if config.loss.smoothness_weight > 0 and preps:
        loss = loss + config.loss.smoothness_weight * smooth / len(preps)
    if config.loss.offset_weight > 0:
        loss = loss + config.loss.offset_weight * ad.tsum(offsets * offsets)
    return loss


# --- failure checks and initialization --------------------------------------------

def reconstruction_failure(trial: TrialObservations, model: BodyModel, config: FitConfig) -> Optional[str]:
    """Describe why a trial cannot be reconstructed, or None when it can."""
    if trial.n_frames < 3:
        return "fewer than 3 frames"
    usable = np.all(np.isfinite(trial.uv), axis=-1) & (trial.confidence >= config.loss.confidence_floor)
    counts = usable.sum(axis=1)  # (T, M)
    poorly_seen = (counts < max(config.min_cameras, 2)).mean(axis=0)
    bad = [model.marker_ids[m] for m in np.nonzero(poorly_seen > config.failure_fraction)[0]]
    if bad:
        return f"markers seen by fewer than {max(config.min_cameras, 2)} cameras in most frames: {', '.join(bad)}"
    return None


def _initial_scale(model, rig, trials, config: FitConfig) -> Tuple[ScaleParams, List[np.ndarray]]:
    """Triangulate every trial and scale the model on the first trial's static window."""
    triangulated = []
    for trial in trials:
        points, _ = triangulate_frames(rig, trial.uv, trial.confidence, config.min_cameras,
                                       config.loss.confidence_floor)
        triangulated.append(points)
    if config.init_scale == "unit":
        return ScaleParams.uniform(model), triangulated
    first = trials[0]
    n_static = int(np.floor(config.static_window_s * first.rate_hz + 1e-9)) + 1
    try:
        static = solve_static(model, triangulated[0][:n_static], max_rmse_m=0.05)
        return static.scale, triangulated
    except ScalingError as e:
        logger.warning("static-window scaling failed (%s); starting from unit scale", e.message)
        return ScaleParams.uniform(model), triangulated


def _prefit_trial(spec: MLPSpec, phi0: np.ndarray, t: np.ndarray, targets: np.ndarray,
                  mask: np.ndarray, config: FitConfig) -> np.ndarray:
    """Fit one network to pre-squash targets by masked mean squared error."""
    params = ParamVector.from_blocks({"phi": phi0})
    if not mask.any() or config.optimizer.prefit_steps == 0:
        return phi0
    weight = mask[:, None].astype(np.float64) / (mask.sum() * targets.shape[1])
    targets = np.where(mask[:, None], targets, 0.0)

    def loss(blocks):
        diff = mlp_raw(spec, blocks["phi"], t) - targets
        return ad.tsum(diff * diff * weight)

    state = AdamState.zeros(params.size, lr=config.optimizer.prefit_lr)
    for _ in range(config.optimizer.prefit_steps):
        _, grad = value_and_gradient(loss, params)
        params, state = adam_step(state, params, grad)
    return params.block("phi")


def _initial_networks(model, spec, scale, trials, triangulated, config: FitConfig, rng, jobs: int):
    offsets = MarkerOffsets.zeros(model, config.loss.offset_radius_m)
    phis0 = [init_mlp_params(spec, rng) for _ in trials]

    def init_one(k: int) -> np.ndarray:
        trial = trials[k]
        frames = solve_frames(model, scale, offsets, triangulated[k], INIT_FRAME_CONFIG)
        mask = frames.solved.copy()
        mask[frames.flagged] = False
        targets = unsquash(spec, clamp_to_limits(model, frames.angles), PREFIT_MARGIN)
        logger.info("trial %s: %d/%d frames usable for initialization",
                    trial.trial_id, int(mask.sum()), trial.n_frames)
        return _prefit_trial(spec, phis0[k], trial.normalized_times(), targets, mask, config)

    with ThreadPoolExecutor(max_workers=max(jobs, 1)) as pool:
        return list(pool.map(init_one, range(len(trials))))


# --- session fit --------------------------------------------------------------------

def _reprojection_rms(model, rig, scale, offsets, spec, phi, prep: _PreparedTrial) -> float:
    theta = mlp_eval(spec, phi, prep.t)
    positions = marker_positions(model, scale, offsets, theta)
    sq, count = 0.0, 0
    for c, camera in enumerate(rig.cameras):
        usable = prep.weight[:, c] > 0
        if not usable.any():
            continue
        u, v, _ = project_points(camera, positions)
        sq += float(np.sum(((u - prep.obs_u[:, c]) ** 2 + (v - prep.obs_v[:, c]) ** 2)[usable]))
        count += int(usable.sum())
    return float(np.sqrt(sq / count)) if count else float("nan")


def fit_end_to_end(
    model: BodyModel,
    rig: CameraRig,
    trials: Sequence[TrialObservations],
    config: FitConfig = FitConfig(),
    camera_ids: Optional[Sequence[str]] = None,
    jobs: int = 1,
) -> SessionFit:
    """
    Jointly fit scale, marker offsets and one trajectory network per trial.

    Args:
        model: Kinematic chain shared by every trial
        rig: Calibrated cameras (trial camera order must match)
        trials: All trials of one participant
        config: Network, optimizer and loss options
        camera_ids: Optional camera subset to fit with
        jobs: Worker threads for per-trial initialization

    Returns:
        SessionFit for the trials that could be reconstructed; failed trials
        appear in ``diagnostics`` only

    Raises:
        ContractViolationError: If no trials are given or camera orders disagree
        FitError: If every trial fails the reconstruction check
    """
    if not trials:
        raise ContractViolationError("fit_end_to_end needs at least one trial")
    if camera_ids is not None:
        rig = rig.subset(camera_ids)
        trials = [t.select_cameras(rig.ids) for t in trials]
    for trial in trials:
        if tuple(trial.camera_ids) != tuple(rig.ids):
            raise ContractViolationError("trial cameras do not match the rig", trial_id=trial.trial_id)

    spec = MLPSpec.for_model(model, (config.mlp.width,) * config.mlp.layers,
                             config.mlp.fourier_pairs, config.mlp.activation)
    spec.check_model(model)

    diagnostics: Dict[str, TrialDiagnostics] = {}
    usable_trials = []
    for trial in trials:
        reason = reconstruction_failure(trial, model, config)
        if reason is not None:
            logger.warning("trial %s: reconstruction failure (%s)", trial.trial_id, reason)
            diagnostics[trial.trial_id] = TrialDiagnostics(
                trial.trial_id, "failed", ExclusionReason.RECONSTRUCTION_FAILURE.value, n_frames=trial.n_frames)
        else:
            usable_trials.append(trial)
    if not usable_trials:
        raise FitError("no trial could be reconstructed",
                       trials={k: d.reason for k, d in diagnostics.items()})

    rng = np.random.default_rng(config.optimizer.seed)
    scale0, triangulated = _initial_scale(model, rig, usable_trials, config)
    logger.info("initial scale: %s", np.array2string(scale0.values, precision=4))
    phis0 = _initial_networks(model, spec, scale0, usable_trials, triangulated, config, rng, jobs)

    blocks = OrderedDict()
    blocks["log_scale"] = np.log(scale0.values)
    if config.fit_offsets:
        blocks["offset_raw"] = np.zeros((len(model.markers), 3))
    for trial, phi in zip(usable_trials, phis0):
        blocks[f"phi/{trial.trial_id}"] = phi
    params = ParamVector.from_blocks(blocks)

    preps = [_PreparedTrial.build(t, config.loss.confidence_floor) for t in usable_trials]
    total_weight = sum(float(p.weight.sum()) for p in preps) or 1.0
    batches = [list(b) for b in np.array_split(np.arange(len(preps)), min(config.batches, len(preps)))]
    radius = config.loss.offset_radius_m
    delta = config.loss.huber_delta_px

    def batch_loss(batch: List[int], first: bool):
        def loss(view):
            scale = scale_from_block(model, view["log_scale"])
            offsets = offsets_from_block(view["offset_raw"], radius) if config.fit_offsets \
                else np.zeros((len(model.markers), 3))
            data, smooth = 0.0, 0.0
            for k in batch:
                d, s = _trial_terms(model, rig, spec, scale, offsets, view[f"phi/{preps[k].trial_id}"],
                                    preps[k], delta)
                data = data + d
                smooth = smooth + s
            total = data / total_weight
            if config.loss.smoothness_weight > 0:
                total = total + config.loss.smoothness_weight * smooth / len(preps)
            if first and config.loss.offset_weight > 0:
                total = total + config.loss.offset_weight * ad.tsum(offsets * offsets)
            return total
        return loss

    objectives = [batch_loss(b, i == 0) for i, b in enumerate(batches)]
    opt = config.optimizer
    state = AdamState.zeros(params.size, lr=opt.lr)
    best_params, best_loss = params, float("inf")
    history = np.zeros(opt.steps)
    logger.info("joint optimization: %d trials in %d batches, %d parameters, %d steps",
                len(preps), len(batches), params.size, opt.steps)
    for step in range(opt.steps):
        value, grad = 0.0, np.zeros(params.size)
        for objective in objectives:
            v, g = value_and_gradient(objective, params)
            value += v
            grad += g
        history[step] = value
        if value < best_loss:
            best_loss, best_params = value, params
        lr = cosine_lr(opt.lr, opt.lr_min, step, opt.steps) if opt.schedule == "cosine" else opt.lr
        params, state = adam_step(state.with_lr(lr), params, grad)
        if step % opt.log_every == 0:
            logger.debug("step %d: loss %.6g (best %.6g, lr %.2e)", step, value, best_loss, lr)
    if opt.steps == 0:
        best_loss = sum(float(ad.value_of(o(params.view(params.values)))) for o in objectives)
        best_params = params

    view = best_params.view(best_params.values)
    scale = ScaleParams(ad.value_of(scale_from_block(model, view["log_scale"])))
    offset_values = offsets_from_block(view["offset_raw"], radius) if config.fit_offsets \
        else np.zeros((len(model.markers), 3))
    offsets = MarkerOffsets(offset_values, radius)
    phis = OrderedDict()
    for prep in preps:
        phi = best_params.block(f"phi/{prep.trial_id}")
        phis[prep.trial_id] = phi
        data, _ = _trial_terms(model, rig, spec, scale.values, offsets.values, phi, prep, delta)
        weight = float(prep.weight.sum()) or 1.0
        rms = _reprojection_rms(model, rig, scale.values, offsets.values, spec, phi, prep)
        diagnostics[prep.trial_id] = TrialDiagnostics(
            prep.trial_id, "ok", None, float(data) / weight, rms, len(prep.t))
        logger.info("trial %s: reprojection RMS %.3f px", prep.trial_id, rms)
    ordered = OrderedDict((t.trial_id, diagnostics[t.trial_id]) for t in trials)
    return SessionFit(scale, offsets, spec, phis, ordered, tuple(rig.ids), history, best_loss)
