"""
SessionFit documents written by fit-mmc / fit-omc and read by derive.
"""

import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np

from biomech.body_model import BodyModel, MarkerOffsets, ScaleParams
from errors import ContractViolationError, NoTrialsError
from fileio import load_document, save_document
from models.schemas import SessionFitDocument, System, TrialFitDocument, TrialInfo

from .end_to_end import SessionFit
from .observations import TrialObservations
from .two_stage import TwoStageResult

logger = logging.getLogger(__name__)


def _rounded(angles: np.ndarray) -> List[List[float]]:
    return [[float(x) for x in row] for row in np.asarray(angles)]


def end_to_end_document(
    fit: SessionFit,
    model: BodyModel,
    trials: Sequence[TrialObservations],
) -> SessionFitDocument:
    """Angles are sampled at each trial's video rate, radians/metres in ``dof_order``."""
    docs = []
    for trial in trials:
        diag = fit.diagnostics[trial.trial_id]
        doc = TrialFitDocument(
            trial_id=trial.trial_id,
            participant_id=trial.participant_id,
            arm=trial.arm,
            status=diag.status,
            reason=diag.reason,
            final_loss=diag.final_loss,
            reprojection_rms_px=diag.reprojection_rms_px,
            rate_hz=trial.rate_hz,
        )
        if diag.status == "ok":
            doc.angles = _rounded(fit.angles(trial.trial_id, trial.n_frames))
        docs.append(doc)
    return SessionFitDocument(
        system=System.MMC,
        participant_id=trials[0].participant_id,
        side=model.side,
        dof_order=model.dof_names,
        cameras=list(fit.camera_ids),
        scale=fit.scale.as_dict(model),
        offsets=fit.offsets.as_dict(model),
        trials=docs,
    )


def two_stage_document(
    results: Sequence[TwoStageResult],
    model: BodyModel,
    infos: Sequence[TrialInfo],
    failed: Optional[Dict[str, str]] = None,
) -> SessionFitDocument:
    """One participant's two-stage fits; ``failed`` maps trial ids to reasons."""
    if not results:
        raise NoTrialsError("no two-stage results to write")
    by_id = {i.trial_id: i for i in infos}
    docs = []
    for result in results:
        info = by_id[result.trial_id]
        docs.append(TrialFitDocument(
            trial_id=result.trial_id,
            participant_id=info.participant_id,
            arm=info.arm,
            status="ok",
            reason="poor_fit" if result.poor_fit else None,
            marker_rmse_m=result.mean_rmse_m,
            flagged_frames=list(result.flagged_frames),
            rate_hz=result.rate_hz,
            angles=_rounded(result.angles),
        ))
    for trial_id, reason in (failed or {}).items():
        info = by_id[trial_id]
        docs.append(TrialFitDocument(trial_id=trial_id, participant_id=info.participant_id, arm=info.arm,
                                     status="failed", reason=reason, rate_hz=info.marker_rate_hz))
    first = results[0]
    return SessionFitDocument(
        system=System.OMC,
        participant_id=by_id[first.trial_id].participant_id,
        side=model.side,
        dof_order=model.dof_names,
        scale=first.scale.as_dict(model),
        offsets=first.offsets.as_dict(model),
        trials=docs,
    )


def save_session_fit(doc: SessionFitDocument, path: Union[str, Path]) -> Path:
    return save_document(doc, path)


def load_session_fit(path: Union[str, Path]) -> SessionFitDocument:
    return load_document(path, SessionFitDocument, "session fit")


def fit_parameters(doc: SessionFitDocument, model: BodyModel, offset_radius: float = 0.05):
    """(ScaleParams, MarkerOffsets, angles per trial id) from a document."""
    if list(doc.dof_order) != model.dof_names:
        raise ContractViolationError("session fit was produced with a different model",
                                     dof_order=doc.dof_order)
    scale = ScaleParams(np.array([doc.scale[s] for s in model.segment_ids]))
    offsets = MarkerOffsets(np.array([doc.offsets[m] for m in model.marker_ids]), offset_radius)
    angles = {t.trial_id: np.asarray(t.angles, dtype=np.float64) for t in doc.trials if t.status == "ok"}
    return scale, offsets, angles
