from .schemas import (
    SCHEMA_VERSION,
    Side,
    Arm,
    System,
    DofKind,
    Phase,
    PHASE_ORDER,
    ChannelId,
    CHANNEL_UNITS,
    ExclusionReason,
    SegmentDoc,
    DofDoc,
    JointDoc,
    MarkerDoc,
    BodyModelDocument,
    CameraDoc,
    CalibrationDocument,
    MLPConfig,
    OptimizerConfig,
    LossConfig,
    FitConfig,
    TwoStageConfig,
    MeasureConfig,
    DeriveConfig,
    CompareConfig,
    RigSpec,
    NoiseSpec,
    SyntheticScenario,
    SynthConfig,
    PipelinePaths,
    PipelineConfig,
    TrialInfo,
    TrialManifest,
    TrialFitDocument,
    SessionFitDocument,
)

__all__ = [
    "SCHEMA_VERSION",
    "Side",
    "Arm",
    "System",
    "DofKind",
    "Phase",
    "PHASE_ORDER",
    "ChannelId",
    "CHANNEL_UNITS",
    "ExclusionReason",
    "SegmentDoc",
    "DofDoc",
    "JointDoc",
    "MarkerDoc",
    "BodyModelDocument",
    "CameraDoc",
    "CalibrationDocument",
    "MLPConfig",
    "OptimizerConfig",
    "LossConfig",
    "FitConfig",
    "TwoStageConfig",
    "MeasureConfig",
    "DeriveConfig",
    "CompareConfig",
    "RigSpec",
    "NoiseSpec",
    "SyntheticScenario",
    "SynthConfig",
    "PipelinePaths",
    "PipelineConfig",
    "TrialInfo",
    "TrialManifest",
    "TrialFitDocument",
    "SessionFitDocument",
]
