"""
Write a complete synthetic dataset in the formats the solvers ingest.

    <out>/model.json
    <out>/calibration.json
    <out>/trials.json
    <out>/keypoints/<trial_id>/<cam>.csv
    <out>/markers/<trial_id>.csv
    <out>/truth/<trial_id>.csv     true channels at the marker rate
    <out>/truth/scales.json        true segment scales per participant
"""

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Union

import numpy as np

from analysis.trajectories import write_trajectory
from biomech.body_model import BodyModel, build_default_upper_body, save_model
from camera.io import save_calibration, write_keypoints
from models.schemas import SCHEMA_VERSION, Arm, SynthConfig, TrialInfo
from solvers.observations import save_manifest, write_marker_trial

from .render import default_rig, render_markers, render_observations
from .scenario import GroundTruth, generate_trajectory, participant_scale

logger = logging.getLogger(__name__)


@dataclass
class SyntheticDataset:
    root: Path
    trials: List[TrialInfo]
    truths: Dict[str, GroundTruth]
    scales: Dict[str, Dict[str, float]]


def trial_seed(seed: int, participant: int, trial: int) -> int:
    return int(np.random.SeedSequence([seed, participant, trial]).generate_state(1)[0])


def write_dataset(
    out_dir: Union[str, Path],
    config: SynthConfig = SynthConfig(),
    seed: int = 0,
    model: Optional[BodyModel] = None,
) -> SyntheticDataset:
    """
    Generate participants x trials and write every input file.

    Each participant gets random true scales and an affected side; trials
    alternate unaffected / affected arm starting with the unaffected one.
    """
    root = Path(out_dir)
    model = model or build_default_upper_body()
    rig = default_rig(config.scenario.rig)
    save_model(model, root / "model.json")
    save_calibration(rig, root / "calibration.json")

    infos: List[TrialInfo] = []
    truths: Dict[str, GroundTruth] = {}
    scales: Dict[str, Dict[str, float]] = {}
    for p in range(config.participants):
        participant_id = f"p{p + 1:02d}"
        rng = np.random.default_rng([seed, p])
        scales[participant_id] = participant_scale(model, config.scale_spread, rng)
        affected_side = str(rng.choice(["left", "right"]))
        other_side = "right" if affected_side == "left" else "left"
        for t in range(config.trials):
            arm = Arm.UNAFFECTED if t % 2 == 0 else Arm.AFFECTED
            side = affected_side if arm == Arm.AFFECTED else other_side
            trial_id = f"{participant_id}_t{t + 1:02d}"
            scenario = config.scenario.model_copy(update={
                "seed": trial_seed(seed, p, t),
                "side": side,
                "affected": arm == Arm.AFFECTED,
                "scale": scales[participant_id],
            })
            truth = generate_trajectory(scenario, model)
            obs = render_observations(model, truth, rig, scenario.noise, trial_id, participant_id, arm, scenario.seed)
            for c, cam_id in enumerate(obs.camera_ids):
                write_keypoints(root / "keypoints" / trial_id / f"{cam_id}.csv", cam_id, model.marker_ids,
                                obs.uv[:, c], obs.confidence[:, c], obs.rate_hz)
            markers = render_markers(model, truth, scenario.noise, trial_id, participant_id, arm, scenario.seed)
            write_marker_trial(markers, root / "markers" / f"{trial_id}.csv")
            write_trajectory(root / "truth" / f"{trial_id}.csv", truth.series,
                             {"trial_id": trial_id, "system": "truth"})
            infos.append(TrialInfo(
                trial_id=trial_id,
                participant_id=participant_id,
                arm=arm,
                side=side,
                video_rate_hz=scenario.video_rate_hz,
                marker_rate_hz=scenario.marker_rate_hz,
                duration_s=scenario.duration_s,
            ))
            truths[trial_id] = truth
            logger.info("synthesized %s (%s arm, %s side)", trial_id, arm.value, side)

    save_manifest(infos, root)
    scales_path = root / "truth" / "scales.json"
    scales_path.parent.mkdir(parents=True, exist_ok=True)
    payload = {"schema_version": SCHEMA_VERSION, "scales": scales}
    scales_path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return SyntheticDataset(root, infos, truths, scales)
