"""
Pipeline tool for running the processing stages over an output directory.

Layout of an output directory::

    dataset/                     synth output (or point ``paths`` elsewhere)
    fits/{mmc,omc}/<pid>.json    session fits per participant
    trajectories/{mmc,omc}/      derived channels per trial
    measures/                    measures.csv, phases.csv
    compare/                     channel_results.csv, exclusions.csv, plots/
    report/                      table1.csv, table2.csv, table3.csv,
                                 measure_pairs.csv, summary.json

Every public method returns a result dictionary with ``success`` and either
the produced outputs or a machine-readable ``error`` record.
"""

import logging
from collections import OrderedDict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence, Tuple, TypeVar

import pandas as pd
from pydantic import ValidationError

from analysis.compare import (
    aggregate,
    common_grid,
    compare_series,
    measure_correlations,
    results_frame,
    synchronization_failed,
)
from analysis.drinking_task import (
    ID_COLUMNS,
    MEASURE_COLUMNS,
    classify_phases,
    compute_measures,
    movement_unit_peaks,
    read_measures,
    read_phases,
    write_measures,
    write_phases,
)
from analysis.report import (
    read_exclusions,
    read_results,
    run_summary,
    write_exclusions,
    write_measure_pairs,
    write_results,
    write_summary,
    write_table1,
    write_table2,
    write_table3,
    write_trajectory_plot,
)
from analysis.trajectories import derive_channels, read_trajectory, write_trajectory
from biomech.body_model import BodyModel, build_default_upper_body, load_model
from camera.io import load_calibration
from errors import (
    INPUT_ERRORS,
    AlignmentError,
    ContractViolationError,
    FitError,
    MocapError,
    NoTrialsError,
    ScalingError,
    SegmentationError,
)
from fileio import load_document
from models.schemas import (
    ChannelId,
    ExclusionReason,
    Phase,
    PipelineConfig,
    PipelinePaths,
    SynthConfig,
    System,
    TrialFitDocument,
    TrialInfo,
)
from settings import Settings, get_settings
from solvers.documents import (
    end_to_end_document,
    fit_parameters,
    load_session_fit,
    save_session_fit,
    two_stage_document,
)
from solvers.end_to_end import fit_end_to_end
from solvers.observations import MANIFEST_NAME, load_manifest, load_trial_observations, read_marker_trial
from solvers.two_stage import fit_two_stage, solve_static
from synthetic.dataset import write_dataset

logger = logging.getLogger(__name__)

T = TypeVar("T")
STAGES = ("synth", "fit-mmc", "fit-omc", "derive", "measures", "compare", "report")
EEV = ChannelId.END_EFFECTOR_VELOCITY


# --- configuration -----------------------------------------------------------------

def _merge(base: Dict[str, Any], update: Dict[str, Any]) -> Dict[str, Any]:
    merged = dict(base)
    for key, value in update.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def load_pipeline_config(
    config_path: Optional[str] = None,
    settings: Optional[Settings] = None,
    jobs: Optional[int] = None,
    seed: Optional[int] = None,
    output_dir: Optional[str] = None,
    max_lag_s: Optional[float] = None,
    batches: Optional[int] = None,
) -> PipelineConfig:
    """
    Settings defaults, overridden by the config file, overridden by flags.

    Raises:
        MissingInputError: If ``config_path`` does not exist
        MalformedFileError: If the file is not a valid pipeline config
        ContractViolationError: If a flag value is out of range
    """
    settings = settings or get_settings()
    merged = _merge(PipelineConfig().model_dump(), {
        "seed": settings.seed,
        "jobs": settings.jobs,
        "paths": {"output_dir": settings.output_dir},
        "compare": {"max_lag_s": settings.max_lag_s},
        "fit": {"batches": settings.batches, "optimizer": {"seed": settings.seed}},
    })
    if config_path:
        from_file = load_document(config_path, PipelineConfig, "pipeline config")
        merged = _merge(merged, from_file.model_dump(exclude_unset=True))
    flags: Dict[str, Any] = {}
    if jobs is not None:
        flags["jobs"] = jobs
    if seed is not None:
        flags["seed"] = seed
        flags["fit"] = {"optimizer": {"seed": seed}}
    if output_dir is not None:
        flags["paths"] = {"output_dir": output_dir}
    if max_lag_s is not None:
        flags["compare"] = {"max_lag_s": max_lag_s}
    if batches is not None:
        flags = _merge(flags, {"fit": {"batches": batches}})
    try:
        return PipelineConfig.model_validate(_merge(merged, flags))
    except ValidationError as e:
        first = e.errors()[0]
        raise ContractViolationError(f"{'.'.join(str(p) for p in first['loc'])}: {first['msg']}")


@dataclass(frozen=True)
class Workspace:
    """Where each stage reads and writes."""
    root: Path
    paths: PipelinePaths = field(default_factory=PipelinePaths)

    @property
    def dataset(self) -> Path:
        return self.root / "dataset"

    def _input(self, override: Optional[str], default: Path) -> Path:
        return Path(override) if override else default

    @property
    def manifest(self) -> Path:
        return self._input(self.paths.manifest, self.dataset / MANIFEST_NAME)

    @property
    def calibration(self) -> Path:
        return self._input(self.paths.calibration, self.dataset / "calibration.json")

    @property
    def keypoints(self) -> Path:
        return self._input(self.paths.keypoints_dir, self.dataset / "keypoints")

    @property
    def markers(self) -> Path:
        return self._input(self.paths.markers_dir, self.dataset / "markers")

    @property
    def model(self) -> Optional[Path]:
        if self.paths.model:
            return Path(self.paths.model)
        default = self.dataset / "model.json"
        return default if default.exists() else None

    def fits(self, system: System) -> Path:
        return self.root / "fits" / system.value

    def trajectory(self, system: System, trial_id: str) -> Path:
        return self.root / "trajectories" / system.value / f"{trial_id}.csv"

    @property
    def measures(self) -> Path:
        return self.root / "measures"

    @property
    def compare(self) -> Path:
        return self.root / "compare"

    @property
    def report(self) -> Path:
        return self.root / "report"


def _exclusion(info: TrialInfo, reason: ExclusionReason) -> Dict[str, str]:
    return {"trial_id": info.trial_id, "participant_id": info.participant_id, "arm": info.arm.value,
            "reason": reason.value}


class PipelineTool:
    """Runs pipeline stages and reports their results as dictionaries."""

    def __init__(self, config: Optional[PipelineConfig] = None, output_dir: Optional[str] = None):
        """
        Initialize the pipeline tool.

        Args:
            config: Pipeline configuration (settings defaults when omitted)
            output_dir: Overrides ``config.paths.output_dir``
        """
        self.config = config or load_pipeline_config()
        root = output_dir or self.config.paths.output_dir or get_settings().output_dir
        self.workspace = Workspace(Path(root), self.config.paths)
        self.jobs = self.config.jobs

    # --- plumbing ------------------------------------------------------------------
    def _map(self, fn: Callable[[Any], T], items: Iterable[Any]) -> List[T]:
        with ThreadPoolExecutor(max_workers=max(self.jobs, 1)) as pool:
            return list(pool.map(fn, items))

    def _run(self, stage: str, fn: Callable[..., Dict], *args, **kwargs) -> Dict:
        logger.info("stage %s: starting", stage)
        try:
            result = fn(*args, **kwargs)
        except MocapError as e:
            logger.error("stage %s failed: %s", stage, e.message)
            return {"success": False, "stage": stage, "error": e.to_record(),
                    "input_error": isinstance(e, INPUT_ERRORS)}
        except Exception as e:
            logger.exception("stage %s failed unexpectedly", stage)
            return {"success": False, "stage": stage, "error": {"error": "internal_error", "message": str(e)},
                    "input_error": False}
        logger.info("stage %s: done", stage)
        return {"success": True, "stage": stage, **result}

    def _model(self) -> BodyModel:
        path = self.workspace.model
        return load_model(path) if path is not None else build_default_upper_body()

    def _infos(self, trial_ids: Optional[Sequence[str]] = None) -> List[TrialInfo]:
        infos = sorted(load_manifest(self.workspace.manifest), key=lambda i: i.trial_id)
        if trial_ids:
            known = {i.trial_id for i in infos}
            unknown = sorted(set(trial_ids) - known)
            if unknown:
                raise ContractViolationError("trial ids not in the manifest", ids=unknown)
            infos = [i for i in infos if i.trial_id in set(trial_ids)]
        return infos

    @staticmethod
    def _by_participant(infos: Sequence[TrialInfo]) -> "OrderedDict[str, List[TrialInfo]]":
        groups: "OrderedDict[str, List[TrialInfo]]" = OrderedDict()
        for info in sorted(infos, key=lambda i: (i.participant_id, i.trial_id)):
            groups.setdefault(info.participant_id, []).append(info)
        return groups

    def _fit_status(self) -> Dict[Tuple[System, str], TrialFitDocument]:
        status = {}
        for system in System:
            for path in sorted(self.workspace.fits(system).glob("*.json")):
                for trial in load_session_fit(path).trials:
                    status[(system, trial.trial_id)] = trial
        return status

    # --- stages --------------------------------------------------------------------
    def synth(self, participants: Optional[int] = None, trials: Optional[int] = None) -> Dict:
        """Write a synthetic dataset into ``<output>/dataset``."""
        return self._run("synth", self._synth, participants, trials)

    def fit_mmc(self, camera_ids: Optional[Sequence[str]] = None,
                trial_ids: Optional[Sequence[str]] = None) -> Dict:
        """End-to-end fit of every participant's keypoints."""
        return self._run("fit-mmc", self._fit_mmc, camera_ids, trial_ids)

    def fit_omc(self, trial_ids: Optional[Sequence[str]] = None) -> Dict:
        """Two-stage fit of every participant's 3D markers."""
        return self._run("fit-omc", self._fit_omc, trial_ids)

    def derive(self) -> Dict:
        return self._run("derive", self._derive)

    def measures(self) -> Dict:
        return self._run("measures", self._measures)

    def compare(self) -> Dict:
        return self._run("compare", self._compare)

    def report(self) -> Dict:
        return self._run("report", self._report)

    def pipeline(self, synth: bool = False, camera_ids: Optional[Sequence[str]] = None) -> Dict:
        """
        Chain the stages, stopping at the first failure.

        Args:
            synth: Generate the synthetic dataset first
            camera_ids: Camera subset for the end-to-end fit
        """
        steps: List[Tuple[str, Callable[[], Dict]]] = []
        if synth:
            steps.append(("synth", self.synth))
        steps += [
            ("fit-mmc", lambda: self.fit_mmc(camera_ids)),
            ("fit-omc", self.fit_omc),
            ("derive", self.derive),
            ("measures", self.measures),
            ("compare", self.compare),
            ("report", self.report),
        ]
        stages: Dict[str, Dict] = {}
        for name, step in steps:
            stages[name] = step()
            if not stages[name]["success"]:
                return {"success": False, "stage": name, "error": stages[name]["error"],
                        "input_error": stages[name]["input_error"], "stages": stages}
        return {"success": True, "stage": "pipeline", "stages": stages}

    # --- implementations -------------------------------------------------------------
    def _synth(self, participants: Optional[int], trials: Optional[int]) -> Dict:
        update = {k: v for k, v in (("participants", participants), ("trials", trials)) if v is not None}
        try:
            config = SynthConfig.model_validate({**self.config.synth.model_dump(), **update})
        except ValidationError as e:
            raise ContractViolationError(f"invalid synth options: {e.errors()[0]['msg']}")
        model = load_model(self.config.paths.model) if self.config.paths.model else build_default_upper_body()
        dataset = write_dataset(self.workspace.dataset, config, self.config.seed, model)
        return {"outputs": [str(dataset.root)], "trials": [i.trial_id for i in dataset.trials]}

    def _fit_mmc(self, camera_ids: Optional[Sequence[str]], trial_ids: Optional[Sequence[str]]) -> Dict:
        ws = self.workspace
        rig = load_calibration(ws.calibration)
        model = self._model()
        infos = self._infos(trial_ids)
        outputs, statuses = [], {}
        for participant_id, group in self._by_participant(infos).items():
            trials, unreadable = [], []
            for info in group:
                try:
                    trials.append(load_trial_observations(ws.keypoints, info, rig, model.marker_ids))
                except MocapError as e:
                    logger.warning("trial %s: keypoints unusable (%s)", info.trial_id, e.message)
                    unreadable.append(info)
            statuses.update({i.trial_id: ExclusionReason.RECONSTRUCTION_FAILURE.value for i in unreadable})
            if not trials:
                continue
            try:
                fit = fit_end_to_end(model, rig, trials, self.config.fit, camera_ids, self.jobs)
            except FitError as e:
                logger.warning("participant %s: %s", participant_id, e.message)
                statuses.update({t.trial_id: ExclusionReason.RECONSTRUCTION_FAILURE.value for t in trials})
                continue
            doc = end_to_end_document(fit, model, trials)
            for info in unreadable:
                doc.trials.append(TrialFitDocument(
                    trial_id=info.trial_id, participant_id=info.participant_id, arm=info.arm, status="failed",
                    reason=ExclusionReason.RECONSTRUCTION_FAILURE.value, rate_hz=info.video_rate_hz))
            statuses.update({t.trial_id: t.reason or t.status for t in doc.trials})
            outputs.append(str(save_session_fit(doc, ws.fits(System.MMC) / f"{participant_id}.json")))
        if not outputs:
            raise FitError("no participant could be fitted", trials=statuses)
        return {"outputs": outputs, "trials": statuses}

    def _fit_omc(self, trial_ids: Optional[Sequence[str]]) -> Dict:
        ws = self.workspace
        model = self._model()
        cfg = self.config.two_stage
        radius = self.config.fit.loss.offset_radius_m
        outputs, statuses = [], {}
        for participant_id, group in self._by_participant(self._infos(trial_ids)).items():
            failed: Dict[str, str] = {}
            loaded = []
            for info in group:
                try:
                    loaded.append(read_marker_trial(ws.markers / f"{info.trial_id}.csv"))
                except MocapError as e:
                    logger.warning("trial %s: markers unusable (%s)", info.trial_id, e.message)
                    failed[info.trial_id] = "missing_markers"
            results = []
            if loaded:
                try:
                    # One scaling per participant, on the first trial's static window.
                    static = loaded[0].window(cfg.static_window_s)
                    stat = solve_static(model, static.reordered(model.marker_ids), cfg.fit_offsets, radius,
                                        cfg.static_max_rmse_m)
                except (ScalingError, ContractViolationError) as e:
                    logger.warning("participant %s: scaling failed (%s)", participant_id, e.message)
                    failed.update({t.trial_id: "scaling_failed" for t in loaded})
                    loaded = []
                else:
                    def fit_one(trial):
                        try:
                            return fit_two_stage(model, trial.window(cfg.static_window_s), trial, cfg, radius,
                                                 scaled=(stat.scale, stat.offsets))
                        except MocapError as e:
                            logger.warning("trial %s: two-stage fit failed (%s)", trial.trial_id, e.message)
                            return e

                    for trial, result in zip(loaded, self._map(fit_one, loaded)):
                        if isinstance(result, MocapError):
                            failed[trial.trial_id] = "fit_failed"
                        else:
                            results.append(result)
            statuses.update(failed)
            if not results:
                continue
            doc = two_stage_document(results, model, group, failed)
            statuses.update({t.trial_id: t.reason or t.status for t in doc.trials})
            outputs.append(str(save_session_fit(doc, ws.fits(System.OMC) / f"{participant_id}.json")))
        if not outputs:
            raise FitError("no two-stage fit succeeded", trials=statuses)
        return {"outputs": outputs, "trials": statuses}

    def _derive(self) -> Dict:
        ws = self.workspace
        model = self._model()
        infos = {i.trial_id: i for i in load_manifest(ws.manifest)}
        radius = self.config.fit.loss.offset_radius_m
        jobs = []
        for system in System:
            for path in sorted(ws.fits(system).glob("*.json")):
                doc = load_session_fit(path)
                scale, offsets, angles = fit_parameters(doc, model, radius)
                rates = {t.trial_id: t.rate_hz for t in doc.trials}
                for trial_id in sorted(angles):
                    if trial_id not in infos:
                        logger.warning("%s: trial %s is not in the manifest; skipped", path, trial_id)
                        continue
                    jobs.append((system, infos[trial_id], scale, offsets, angles[trial_id], rates[trial_id]))
        if not jobs:
            raise NoTrialsError("no fitted trials to derive", path=str(ws.root / "fits"))

        def derive_one(job) -> Optional[str]:
            system, info, scale, offsets, theta, rate = job
            try:
                series = derive_channels(model, theta, scale, offsets, rate, info.side, self.config.derive)
            except ContractViolationError as e:
                logger.warning("trial %s (%s): %s", info.trial_id, system.value, e.message)
                return None
            meta = {"trial_id": info.trial_id, "participant_id": info.participant_id, "arm": info.arm.value,
                    "system": system.value}
            return str(write_trajectory(ws.trajectory(system, info.trial_id), series, meta))

        outputs = [p for p in self._map(derive_one, jobs) if p is not None]
        return {"outputs": outputs}

    def _measures(self) -> Dict:
        ws = self.workspace
        cfg = self.config.measures

        def measure_one(info: TrialInfo):
            series = {}
            for system in System:
                path = ws.trajectory(system, info.trial_id)
                if path.exists():
                    series[system] = read_trajectory(path)[0]
            if not series:
                return [], {}
            reference = System.OMC if System.OMC in series else System.MMC
            ref = series[reference]
            try:
                phases = classify_phases(ref.channel(EEV), ref.rate_hz, cfg)
            except SegmentationError as e:
                logger.warning("trial %s: segmentation failure (%s)", info.trial_id, e.message)
                return [], {}
            rows, segmentations = [], {}
            for system, s in series.items():
                seg = phases.for_rate(s.rate_hz, s.n_samples)
                try:
                    measures = compute_measures(s, seg, cfg)
                except SegmentationError as e:
                    logger.warning("trial %s (%s): %s", info.trial_id, system.value, e.message)
                    return [], {}
                segmentations[(info.trial_id, system.value)] = seg
                rows.append({"trial_id": info.trial_id, "participant_id": info.participant_id,
                             "arm": info.arm.value, "system": system.value, **measures.as_row()})
            return rows, segmentations

        rows, segmentations = [], {}
        for trial_rows, trial_segs in self._map(measure_one, self._infos()):
            rows += trial_rows
            segmentations.update(trial_segs)
        if not rows:
            raise NoTrialsError("no trial could be measured", path=str(ws.root / "trajectories"))
        outputs = [str(write_measures(ws.measures / "measures.csv", rows)),
                   str(write_phases(ws.measures / "phases.csv", segmentations))]
        return {"outputs": outputs, "trials": sorted({r["trial_id"] for r in rows})}

    def _compare(self) -> Dict:
        ws = self.workspace
        cfg = self.config.compare
        infos = self._infos()
        status = self._fit_status()
        phases_path = ws.measures / "phases.csv"
        phases = read_phases(phases_path) if phases_path.exists() else {}

        def compare_one(info: TrialInfo):
            tid = info.trial_id
            mmc_fit, omc_fit = status.get((System.MMC, tid)), status.get((System.OMC, tid))
            mmc_path, omc_path = ws.trajectory(System.MMC, tid), ws.trajectory(System.OMC, tid)
            if mmc_fit is None or mmc_fit.status != "ok" or not mmc_path.exists():
                return _exclusion(info, ExclusionReason.RECONSTRUCTION_FAILURE), None
            if omc_fit is None or omc_fit.status != "ok" or not omc_path.exists():
                return _exclusion(info, ExclusionReason.POOR_FIT), None
            if cfg.exclude_poor_fit and omc_fit.reason == ExclusionReason.POOR_FIT.value:
                return _exclusion(info, ExclusionReason.POOR_FIT), None
            if (tid, System.MMC.value) not in phases or (tid, System.OMC.value) not in phases:
                return _exclusion(info, ExclusionReason.SEGMENTATION_FAILURE), None
            mmc, omc = read_trajectory(mmc_path)[0], read_trajectory(omc_path)[0]
            try:
                results = compare_series(mmc, omc, cfg)
            except AlignmentError as e:
                logger.warning("trial %s: %s", tid, e.message)
                return _exclusion(info, ExclusionReason.SYNCHRONIZATION), None
            if synchronization_failed(results, cfg.sync_boundary_fraction):
                logger.warning("trial %s: lag on the search boundary for most channels", tid)
                return _exclusion(info, ExclusionReason.SYNCHRONIZATION), None

            a, b = common_grid(mmc, omc, cfg.target_rate_hz)
            movement_units = {}
            for system, s in ((System.MMC, a), (System.OMC, b)):
                seg = phases[(tid, system.value)].for_rate(s.rate_hz, s.n_samples)
                reach = seg.span(Phase.REACHING)
                peaks = movement_unit_peaks(s.channel(EEV)[reach], s.rate_hz, self.config.measures)
                movement_units[system.value] = [int(p) + reach.start for p in peaks]
            write_trajectory_plot(ws.compare / "plots" / f"{tid}.csv", a, b, results, movement_units,
                                  {"trial_id": tid, "participant_id": info.participant_id, "arm": info.arm.value})
            return None, results_frame(tid, info.participant_id, info.arm, results)

        exclusions, frames = [], []
        for excluded, frame in self._map(compare_one, infos):
            if excluded is not None:
                exclusions.append(excluded)
            else:
                frames.append(frame)
        results = pd.concat(frames, ignore_index=True) if frames else results_frame("", "", "affected", {})
        outputs = [str(write_results(ws.compare / "channel_results.csv", results)),
                   str(write_exclusions(ws.compare / "exclusions.csv", exclusions, len(infos)))]
        if not frames:
            logger.warning("every trial was excluded from comparison")
        return {"outputs": outputs, "included": len(frames),
                "excluded": {e["trial_id"]: e["reason"] for e in exclusions}}

    def _report(self) -> Dict:
        ws = self.workspace
        results_path = ws.compare / "channel_results.csv"
        if not results_path.exists():
            raise NoTrialsError("no trials to report; run compare first", path=str(ws.compare))
        results = read_results(results_path)
        if results.empty:
            raise NoTrialsError("no trials to report; every trial was excluded", path=str(results_path))
        exclusions_path = ws.compare / "exclusions.csv"
        exclusions = read_exclusions(exclusions_path) if exclusions_path.exists() else []
        excluded = {e["trial_id"] for e in exclusions}

        measures_path = ws.measures / "measures.csv"
        if measures_path.exists():
            measures = read_measures(measures_path)
        else:
            measures = pd.DataFrame(columns=[*ID_COLUMNS, *MEASURE_COLUMNS])
        measures = measures[~measures["trial_id"].isin(excluded)]
        correlations, points = measure_correlations(measures)

        report = aggregate(results)
        out = ws.report
        outputs = [
            write_table1(out / "table1.csv", report),
            write_table2(out / "table2.csv", report),
            write_table3(out / "table3.csv", correlations),
            write_measure_pairs(out / "measure_pairs.csv", points),
            write_summary(out / "summary.json", run_summary(self._infos(), exclusions)),
        ]
        return {"outputs": [str(p) for p in outputs], "trials": int(results["trial_id"].nunique())}
