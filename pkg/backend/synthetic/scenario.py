"""
Ground-truth drinking-task trajectories built from minimum-jerk sub-movements.

Cycle: rest -> reach to cup -> grasp -> cup to mouth -> drink -> mouth to table
-> release -> return -> rest. Joint angles are a superposition of min-jerk
steps, so they are C2 and stay between consecutive key poses.
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from analysis.drinking_task import PhaseSegmentation
from analysis.trajectories import TrajectorySeries, derive_channels
from biomech.body_model import BodyModel, MarkerOffsets, ScaleParams, build_default_upper_body, clamp_to_limits
from errors import ContractViolationError
from models.schemas import PHASE_ORDER, SyntheticScenario

logger = logging.getLogger(__name__)

ROOT_HEIGHT_M = 0.5

# Moving-arm key poses (radians) keyed by DOF stem, plus trunk flexion.
REST_POSE = {"shoulder_flexion": 0.25, "shoulder_abduction": 0.12, "shoulder_rotation": 0.1,
             "elbow_flexion": 1.45, "pro_supination": 0.0, "wrist_flexion": 0.0, "wrist_deviation": 0.0,
             "trunk_flexion": 0.05}
CUP_POSE = {"shoulder_flexion": 0.75, "shoulder_abduction": 0.2, "shoulder_rotation": 0.15,
            "elbow_flexion": 0.55, "pro_supination": 0.2, "wrist_flexion": -0.1, "wrist_deviation": 0.05,
            "trunk_flexion": 0.12}
MOUTH_POSE = {"shoulder_flexion": 0.95, "shoulder_abduction": 0.45, "shoulder_rotation": 0.45,
              "elbow_flexion": 2.25, "pro_supination": 0.4, "wrist_flexion": 0.2, "wrist_deviation": 0.0,
              "trunk_flexion": 0.08}
RESTING_ARM = {"shoulder_flexion": 0.15, "shoulder_abduction": 0.1, "elbow_flexion": 1.4}

# (name, nominal seconds, target pose or None for a hold); nominal total 7 s.
SCHEDULE: Tuple[Tuple[str, float, Optional[str]], ...] = (
    ("rest", 0.6, None),
    ("reach", 1.0, "cup"),
    ("grasp", 0.3, None),
    ("forward", 0.9, "mouth"),
    ("drink", 1.1, None),
    ("back", 0.9, "cup"),
    ("release", 0.3, None),
    ("return", 1.0, "rest"),
    ("rest", 0.9, None),
)


def minimum_jerk(tau: np.ndarray) -> np.ndarray:
    """10 t^3 - 15 t^4 + 6 t^5 on [0, 1], clamped outside."""
    tau = np.clip(tau, 0.0, 1.0)
    return tau ** 3 * (10.0 - 15.0 * tau + 6.0 * tau ** 2)


@dataclass(frozen=True)
class SubMovement:
    start_s: float
    duration_s: float
    delta: np.ndarray


@dataclass(frozen=True)
class GroundTruth:
    """What the generator knows about one synthetic trial."""
    scenario: SyntheticScenario
    scale: ScaleParams
    offsets: MarkerOffsets
    video_angles: np.ndarray
    marker_angles: np.ndarray
    series: TrajectorySeries
    phases: PhaseSegmentation
    movement_windows: Tuple[Tuple[float, float], ...]

    @property
    def side(self) -> str:
        return self.scenario.side


def _pose_vector(model: BodyModel, pose: Dict[str, float], side: str) -> np.ndarray:
    s = side[0]
    other = "l" if s == "r" else "r"
    theta = np.zeros(model.dof_count)
    theta[model.dof_index("trunk_tz")] = ROOT_HEIGHT_M
    theta[model.dof_index("trunk_flexion")] = pose["trunk_flexion"]
    for stem, value in pose.items():
        if stem != "trunk_flexion":
            theta[model.dof_index(f"{stem}_{s}")] = value
    if f"shoulder_flexion_{other}" in model.dof_names:
        for stem, value in RESTING_ARM.items():
            theta[model.dof_index(f"{stem}_{other}")] = value
    return theta


def _key_poses(model: BodyModel, scenario: SyntheticScenario, rng: np.random.Generator) -> Dict[str, np.ndarray]:
    poses = {}
    for name, pose in (("rest", REST_POSE), ("cup", CUP_POSE), ("mouth", MOUTH_POSE)):
        jittered = {k: v + rng.normal(0.0, scenario.pose_jitter_rad) for k, v in pose.items()}
        poses[name] = clamp_to_limits(model, _pose_vector(model, jittered, scenario.side))
    return poses


def _durations(scenario: SyntheticScenario, rng: np.random.Generator) -> np.ndarray:
    nominal = np.array([d for _, d, _ in SCHEDULE])
    factors = 1.0 + rng.uniform(-scenario.timing_jitter, scenario.timing_jitter, len(nominal))
    # The leading rest doubles as the static scaling window, so it is not jittered.
    factors[0] = 1.0
    durations = nominal * factors
    movable = durations[1:]
    durations[1:] = movable * (scenario.duration_s - durations[0]) / movable.sum()
    if durations[0] >= scenario.duration_s:
        raise ContractViolationError("duration too short for a drinking cycle", duration_s=scenario.duration_s)
    return durations


def _sub_movements(scenario: SyntheticScenario, poses: Dict[str, np.ndarray],
                   durations: np.ndarray) -> Tuple[List[SubMovement], List[Tuple[float, float]]]:
    subs: List[SubMovement] = []
    windows: List[Tuple[float, float]] = []
    current = poses["rest"]
    t = 0.0
    for (name, _, target), d in zip(SCHEDULE, durations):
        if target is not None:
            delta = poses[target] - current
            if name == "reach" and scenario.affected:
                # Two overlapping sub-movements give the segmented reach of an impaired arm.
                subs.append(SubMovement(t, 0.6 * d, 0.7 * delta))
                subs.append(SubMovement(t + 0.45 * d, 0.55 * d, 0.3 * delta))
            else:
                subs.append(SubMovement(t, d, delta))
            windows.append((t, t + d))
            current = poses[target]
        t += d
    return subs, windows


def _evaluate(start: np.ndarray, subs: List[SubMovement], times: np.ndarray) -> np.ndarray:
    theta = np.tile(start, (len(times), 1))
    for sub in subs:
        theta += minimum_jerk((times - sub.start_s) / sub.duration_s)[:, None] * sub.delta[None, :]
    return theta


def frame_count(duration_s: float, rate_hz: float) -> int:
    return int(round(duration_s * rate_hz)) + 1


def _phases(windows: List[Tuple[float, float]], n_frames: int, rate_hz: float) -> PhaseSegmentation:
    reach, forward, back, ret = windows
    times = [0.0, reach[1], forward[1], back[0], back[1], ret[1]]
    bounds = [min(int(round(x * rate_hz)), n_frames) for x in times] + [n_frames]
    phases = tuple((p, bounds[i], bounds[i + 1]) for i, p in enumerate(PHASE_ORDER))
    movements = tuple((int(round(a * rate_hz)), int(round(b * rate_hz))) for a, b in windows)
    return PhaseSegmentation(phases, n_frames, rate_hz, movements)


def generate_trajectory(scenario: SyntheticScenario, model: Optional[BodyModel] = None) -> GroundTruth:
    """
    Deterministic ground truth for one synthetic trial.

    Args:
        scenario: Timing, jitter, rates and (optionally) the true segment scales
        model: Kinematic chain; the bilateral default when omitted

    Returns:
        GroundTruth sampled at the video and the marker rate, with derived
        channels at the marker rate and the analytic movement windows
    """
    model = model or build_default_upper_body()
    rng = np.random.default_rng(scenario.seed)
    poses = _key_poses(model, scenario, rng)
    durations = _durations(scenario, rng)
    subs, windows = _sub_movements(scenario, poses, durations)

    if scenario.scale is None:
        scale = ScaleParams.uniform(model)
    else:
        unknown = sorted(set(scenario.scale) - set(model.segment_ids))
        if unknown:
            raise ContractViolationError("scale names unknown segments", segments=unknown)
        scale = ScaleParams(np.array([scenario.scale.get(s, 1.0) for s in model.segment_ids]))
    offsets = MarkerOffsets.zeros(model)

    n_video = frame_count(scenario.duration_s, scenario.video_rate_hz)
    n_marker = frame_count(scenario.duration_s, scenario.marker_rate_hz)
    video_angles = _evaluate(poses["rest"], subs, np.arange(n_video) / scenario.video_rate_hz)
    marker_angles = _evaluate(poses["rest"], subs, np.arange(n_marker) / scenario.marker_rate_hz)
    series = derive_channels(model, marker_angles, scale, offsets, scenario.marker_rate_hz, scenario.side)
    logger.debug("generated trial seed=%d side=%s affected=%s", scenario.seed, scenario.side, scenario.affected)
    return GroundTruth(
        scenario=scenario,
        scale=scale,
        offsets=offsets,
        video_angles=video_angles,
        marker_angles=marker_angles,
        series=series,
        phases=_phases(windows, n_marker, scenario.marker_rate_hz),
        movement_windows=tuple(windows),
    )


def participant_scale(model: BodyModel, spread: float, rng: np.random.Generator) -> Dict[str, float]:
    """Random true scales; left and right segments of one kind share a value."""
    kinds = sorted({sid.split("_")[0] for sid in model.segment_ids})
    drawn = {k: float(rng.uniform(1.0 - spread, 1.0 + spread)) for k in kinds}
    return {sid: drawn[sid.split("_")[0]] for sid in model.segment_ids}
