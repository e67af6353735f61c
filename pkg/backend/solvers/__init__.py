from .observations import (
    Marker3DTrial,
    TrialObservations,
    load_manifest,
    load_marker_trials,
    load_trial_observations,
    read_marker_trial,
    save_manifest,
    write_marker_trial,
)
from .two_stage import TwoStageResult, fit_two_stage, solve_frames, solve_static
from .end_to_end import SessionFit, TrialDiagnostics, fit_end_to_end, reprojection_loss
from .documents import (
    end_to_end_document,
    fit_parameters,
    load_session_fit,
    save_session_fit,
    two_stage_document,
)

__all__ = [
    "Marker3DTrial",
    "TrialObservations",
    "load_manifest",
    "load_marker_trials",
    "load_trial_observations",
    "read_marker_trial",
    "save_manifest",
    "write_marker_trial",
    "TwoStageResult",
    "fit_two_stage",
    "solve_frames",
    "solve_static",
    "SessionFit",
    "TrialDiagnostics",
    "fit_end_to_end",
    "reprojection_loss",
    "end_to_end_document",
    "fit_parameters",
    "load_session_fit",
    "save_session_fit",
    "two_stage_document",
]
