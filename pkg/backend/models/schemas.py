"""
Pydantic models and schemas for the motion-capture fitting engine.

Covers the on-disk documents (model, calibration, session fit, manifests)
and the stage configuration files.
"""

from enum import Enum
from typing import Dict, List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator

SCHEMA_VERSION = "1"


class StrictModel(BaseModel):
    """Base for config/documents: unknown keys are errors."""
    model_config = ConfigDict(extra="forbid")


class Side(str, Enum):
    """Which arm(s) a model carries."""
    LEFT = "left"
    RIGHT = "right"
    BILATERAL = "bilateral"


class Arm(str, Enum):
    """Clinical arm label of a trial."""
    AFFECTED = "affected"
    UNAFFECTED = "unaffected"


class System(str, Enum):
    """Capture system a series or measure row comes from."""
    MMC = "mmc"
    OMC = "omc"


class DofKind(str, Enum):
    ROTATION = "rotation"
    TRANSLATION = "translation"


class Phase(str, Enum):
    """Drinking-task phases in canonical order."""
    REACHING = "Reaching"
    FORWARD = "Forward"
    DRINKING = "Drinking"
    BACK = "Back"
    RETURNING = "Returning"
    REST = "Rest"


PHASE_ORDER: Tuple[Phase, ...] = tuple(Phase)


class ChannelId(str, Enum):
    """The six kinematic trajectories compared between systems."""
    SHOULDER_FLEXION = "ShoulderFlexion"
    SHOULDER_ABDUCTION = "ShoulderAbduction"
    ELBOW_FLEXION = "ElbowFlexion"
    ELBOW_ANGULAR_VELOCITY = "ElbowAngularVelocity"
    END_EFFECTOR_VELOCITY = "EndEffectorVelocity"
    TRUNK_DISPLACEMENT = "TrunkDisplacement"


CHANNEL_UNITS: Dict[ChannelId, str] = {
    ChannelId.SHOULDER_FLEXION: "deg",
    ChannelId.SHOULDER_ABDUCTION: "deg",
    ChannelId.ELBOW_FLEXION: "deg",
    ChannelId.ELBOW_ANGULAR_VELOCITY: "deg/s",
    ChannelId.END_EFFECTOR_VELOCITY: "m/s",
    ChannelId.TRUNK_DISPLACEMENT: "mm",
}


class ExclusionReason(str, Enum):
    RECONSTRUCTION_FAILURE = "reconstruction_failure"
    SYNCHRONIZATION = "synchronization"
    POOR_FIT = "poor_fit"
    SEGMENTATION_FAILURE = "segmentation_failure"


# --- body model document ----------------------------------------------------

class SegmentDoc(StrictModel):
    id: str
    parent: Optional[str] = None
    neutral_offset: Tuple[float, float, float]
    scalable: bool = True


class DofDoc(StrictModel):
    name: str
    axis: Tuple[float, float, float]
    kind: DofKind
    limits: Tuple[float, float]


class JointDoc(StrictModel):
    segment: str
    dofs: List[DofDoc]


class MarkerDoc(StrictModel):
    id: str
    segment: str
    local_offset: Tuple[float, float, float]


class BodyModelDocument(StrictModel):
    """JSON shape of a BodyModel; ``dof_order`` documents the theta layout."""
    schema_version: str = SCHEMA_VERSION
    side: Side
    dof_order: List[str]
    segments: List[SegmentDoc]
    joints: List[JointDoc]
    markers: List[MarkerDoc]


# --- calibration --------------------------------------------------------------

class CameraDoc(StrictModel):
    id: str
    image_size: Tuple[int, int]
    K: Tuple[float, float, float, float] = Field(..., description="fx, fy, cx, cy in pixels")
    dist: Tuple[float, float, float, float, float] = (0.0, 0.0, 0.0, 0.0, 0.0)
    R: List[float] = Field(..., description="world->camera rotation, row-major 9 floats")
    t: Tuple[float, float, float]

    @field_validator("R")
    @classmethod
    def _nine_floats(cls, value: List[float]) -> List[float]:
        if len(value) != 9:
            raise ValueError("R must contain 9 floats (row-major)")
        return value


class CalibrationDocument(StrictModel):
    schema_version: str = SCHEMA_VERSION
    units: Literal["meters"] = "meters"
    cameras: List[CameraDoc]


# --- configuration ------------------------------------------------------------

class MLPConfig(StrictModel):
    layers: int = Field(3, ge=1)
    width: int = Field(256, ge=1)
    fourier_pairs: int = Field(8, ge=0)
    activation: Literal["tanh", "sin"] = "tanh"


class OptimizerConfig(StrictModel):
    lr: float = Field(1e-3, gt=0)
    lr_min: float = Field(1e-5, ge=0)
    steps: int = Field(3000, ge=0)
    prefit_steps: int = Field(1500, ge=0)
    prefit_lr: float = Field(3e-3, gt=0)
    seed: int = 0
    schedule: Literal["cosine", "constant"] = "cosine"
    log_every: int = Field(100, ge=1)


class LossConfig(StrictModel):
    huber_delta_px: float = Field(10.0, gt=0)
    smoothness_weight: float = Field(0.0, ge=0)
    offset_weight: float = Field(0.0, ge=0)
    confidence_floor: float = Field(0.3, ge=0, le=1)
    offset_radius_m: float = Field(0.05, gt=0)


class FitConfig(StrictModel):
    """End-to-end fit options."""
    mlp: MLPConfig = MLPConfig()
    optimizer: OptimizerConfig = OptimizerConfig()
    loss: LossConfig = LossConfig()
    batches: int = Field(8, ge=1)
    init_scale: Literal["static_window", "unit"] = "static_window"
    static_window_s: float = Field(0.5, gt=0)
    min_cameras: int = Field(2, ge=1)
    failure_fraction: float = Field(0.5, ge=0, le=1)
    fit_offsets: bool = True


class TwoStageConfig(StrictModel):
    fit_offsets: bool = False
    tol_m: float = Field(1e-10, gt=0)
    max_iterations: int = Field(100, ge=1)
    flag_rmse_m: float = Field(0.02, gt=0)
    max_mean_rmse_m: float = Field(0.04, gt=0)
    static_max_rmse_m: float = Field(0.04, gt=0)
    static_window_s: float = Field(0.5, gt=0)


class MeasureConfig(StrictModel):
    onset_fraction: float = Field(0.05, gt=0, lt=1)
    dwell_s: float = Field(0.1, ge=0)
    velocity_floor: float = Field(0.05, gt=0)
    mu_prominence: float = Field(0.02, gt=0)
    mu_separation_s: float = Field(0.15, gt=0)


class DeriveConfig(StrictModel):
    cutoff_hz: float = Field(10.0, gt=0)
    baseline_s: float = Field(0.3, gt=0)


class CompareConfig(StrictModel):
    max_lag_s: float = Field(0.25, ge=0)
    target_rate_hz: float = Field(60.0, gt=0)
    min_overlap_fraction: float = Field(0.5, gt=0, le=1)
    exclude_poor_fit: bool = True
    sync_boundary_fraction: float = Field(0.5, gt=0, le=1)


class RigSpec(StrictModel):
    """Cameras evenly spread on an arc in front of the participant."""
    n_cameras: int = Field(5, ge=1)
    radius_m: float = Field(2.5, gt=0)
    arc_deg: float = Field(180.0, ge=0, le=360)
    height_m: float = 1.2
    image_size: Tuple[int, int] = (1920, 1080)
    focal_px: float = Field(1400.0, gt=0)


class NoiseSpec(StrictModel):
    pixel_sigma: float = Field(0.0, ge=0)
    dropout: float = Field(0.0, ge=0, le=1)
    camera_dropout: Dict[str, float] = {}
    confidence_mean: float = Field(0.9, gt=0, le=1)
    confidence_sigma: float = Field(0.05, ge=0)
    marker_sigma_m: float = Field(0.0, ge=0)

    @field_validator("camera_dropout")
    @classmethod
    def _probabilities(cls, value: Dict[str, float]) -> Dict[str, float]:
        if any(not 0.0 <= p <= 1.0 for p in value.values()):
            raise ValueError("dropout probabilities must lie in [0, 1]")
        return value


class SyntheticScenario(StrictModel):
    """One synthetic drinking trial; every artifact is a pure function of this and the seed."""
    seed: int = 0
    duration_s: float = Field(7.0, gt=0)
    video_rate_hz: float = Field(60.0, gt=0)
    marker_rate_hz: float = Field(100.0, gt=0)
    side: Literal["left", "right"] = "right"
    affected: bool = False
    pose_jitter_rad: float = Field(0.05, ge=0)
    timing_jitter: float = Field(0.1, ge=0, lt=0.5)
    scale: Optional[Dict[str, float]] = None
    rig: RigSpec = RigSpec()
    noise: NoiseSpec = NoiseSpec()


class SynthConfig(StrictModel):
    """Dataset produced by the synth command."""
    participants: int = Field(1, ge=1)
    trials: int = Field(3, ge=1, description="trials per participant, alternating arms")
    scale_spread: float = Field(0.08, ge=0, lt=0.5)
    scenario: SyntheticScenario = SyntheticScenario()


class PipelinePaths(StrictModel):
    """Input overrides; unset entries resolve inside the output directory."""
    manifest: Optional[str] = None
    calibration: Optional[str] = None
    keypoints_dir: Optional[str] = None
    markers_dir: Optional[str] = None
    model: Optional[str] = None
    output_dir: Optional[str] = None


class PipelineConfig(StrictModel):
    """Everything a CLI/API invocation needs besides flags."""
    paths: PipelinePaths = PipelinePaths()
    synth: SynthConfig = SynthConfig()
    fit: FitConfig = FitConfig()
    two_stage: TwoStageConfig = TwoStageConfig()
    derive: DeriveConfig = DeriveConfig()
    measures: MeasureConfig = MeasureConfig()
    compare: CompareConfig = CompareConfig()
    seed: int = 0
    jobs: int = Field(1, ge=1)


# --- trial manifest and fit documents -----------------------------------------

class TrialInfo(StrictModel):
    trial_id: str
    participant_id: str
    arm: Arm
    side: Literal["left", "right"] = "right"
    video_rate_hz: float = 60.0
    marker_rate_hz: float = 100.0
    duration_s: float


class TrialManifest(StrictModel):
    schema_version: str = SCHEMA_VERSION
    trials: List[TrialInfo]


class TrialFitDocument(StrictModel):
    trial_id: str
    participant_id: str
    arm: Arm
    status: Literal["ok", "failed"]
    reason: Optional[str] = None
    final_loss: Optional[float] = None
    reprojection_rms_px: Optional[float] = None
    marker_rmse_m: Optional[float] = None
    flagged_frames: List[int] = []
    rate_hz: float
    t0: float = 0.0
    angles: List[List[float]] = []


class SessionFitDocument(StrictModel):
    """Output of fit-mmc (end-to-end) and fit-omc (two-stage)."""
    schema_version: str = SCHEMA_VERSION
    system: System
    participant_id: str
    side: Side
    dof_order: List[str]
    cameras: List[str] = []
    scale: Dict[str, float]
    offsets: Dict[str, Tuple[float, float, float]]
    trials: List[TrialFitDocument]
