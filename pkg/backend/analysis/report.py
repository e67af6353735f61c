"""
Report files: agreement tables, correlation table, plot data, exclusions and run summary.
"""

import json
import logging
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Union

import numpy as np
import pandas as pd

from fileio import read_table, write_table
from models.schemas import CHANNEL_UNITS, SCHEMA_VERSION, Arm, ChannelId, ExclusionReason, TrialInfo

from .compare import METRICS, RESULT_COLUMNS, AggregateReport, AlignmentResult, MeasureCorrelation, Summary
from .drinking_task import MEASURE_LABELS
from .trajectories import TrajectorySeries

logger = logging.getLogger(__name__)

CHANNEL_LABELS = {
    ChannelId.SHOULDER_FLEXION: "Shoulder Flexion",
    ChannelId.SHOULDER_ABDUCTION: "Shoulder Abduction",
    ChannelId.ELBOW_FLEXION: "Elbow Extension",
    ChannelId.ELBOW_ANGULAR_VELOCITY: "Elbow Angular Velocity",
    ChannelId.END_EFFECTOR_VELOCITY: "End-Effector Velocity",
    ChannelId.TRUNK_DISPLACEMENT: "Trunk Displacement",
}
METRIC_HEADERS = {"r": "r", "rmse": "RMSE", "bias": "Bias", "lag_s": "Time lag (s)"}
EXCLUSION_COLUMNS = ["trial_id", "participant_id", "arm", "reason"]


def _for_label(channel: ChannelId, metric: str, summary: Summary) -> Summary:
    # The elbow row is reported as extension (180 - flexion): bias flips sign.
    if channel == ChannelId.ELBOW_FLEXION and metric == "bias":
        return Summary(-summary.median, -summary.q75, -summary.q25, summary.n)
    return summary


def _cell(value: Optional[float], digits: int = 2) -> str:
    return "" if value is None or not np.isfinite(value) else f"{value:.{digits}f}"


def write_table1(path: Union[str, Path], report: AggregateReport) -> Path:
    """Trajectory x arm rows with r, RMSE, bias and lag as "median [q25, q75]"."""
    rows = []
    for channel in ChannelId:
        for arm in Arm:
            cells = {m: report.table1.get((channel, arm, m)) for m in METRICS}
            if all(c is None for c in cells.values()):
                continue
            row = {"Trajectory": CHANNEL_LABELS[channel], "Units": CHANNEL_UNITS[channel], "Arm": arm.value}
            for metric in METRICS:
                summary = cells[metric]
                row[METRIC_HEADERS[metric]] = _for_label(channel, metric, summary).formatted() if summary else ""
            row["n"] = max(c.n for c in cells.values() if c is not None)
            rows.append(row)
    columns = ["Trajectory", "Units", "Arm", *METRIC_HEADERS.values(), "n"]
    return write_table(path, pd.DataFrame(rows, columns=columns), "table1")


def write_table2(path: Union[str, Path], report: AggregateReport) -> Path:
    """Mean over participants of the within-participant bias IQR."""
    rows = [{
        "Trajectory": CHANNEL_LABELS[channel],
        "Units": CHANNEL_UNITS[channel],
        "Affected": _cell(report.table2.get((channel, Arm.AFFECTED))),
        "Unaffected": _cell(report.table2.get((channel, Arm.UNAFFECTED))),
    } for channel in ChannelId]
    return write_table(path, pd.DataFrame(rows), "table2")


def write_table3(path: Union[str, Path], correlations: Sequence[MeasureCorrelation]) -> Path:
    rows = [{
        "Measure": MEASURE_LABELS[c.measure],
        "measure_id": c.measure,
        "r_s": _cell(c.r_s),
        "r_av": _cell(c.r_av),
        "n_trials": c.n_pairs,
        "n_means": c.n_groups,
    } for c in correlations]
    return write_table(path, pd.DataFrame(rows, columns=["Measure", "measure_id", "r_s", "r_av", "n_trials",
                                                         "n_means"]), "table3")


def write_measure_pairs(path: Union[str, Path], points: pd.DataFrame) -> Path:
    """Paired (MMC, OMC) values per measure and trial, tagged by participant and arm."""
    ordered = points.sort_values(["measure", "trial_id"], kind="stable").reset_index(drop=True)
    return write_table(path, ordered, "measure_pairs")


def write_trajectory_plot(
    path: Union[str, Path],
    mmc: TrajectorySeries,
    omc: TrajectorySeries,
    results: Mapping[ChannelId, AlignmentResult],
    movement_units: Mapping[str, Iterable[int]],
    meta: Optional[Dict[str, object]] = None,
) -> Path:
    """
    One trial's channels from both systems for plotting.

    OMC columns carry the bias correction and are shifted by the channel lag;
    ``mu_mmc`` / ``mu_omc`` mark frames of detected movement units.
    """
    n = min(mmc.n_samples, omc.n_samples)
    table = pd.DataFrame({"time_s": mmc.times[:n]})
    for channel, result in results.items():
        b = omc.channel(channel)[:n] + result.bias
        shifted = np.full(n, np.nan)
        lag = result.lag_samples
        if lag >= 0:
            shifted[:n - lag] = b[lag:]
        else:
            shifted[-lag:] = b[:n + lag]
        table[f"{channel.value}_mmc"] = mmc.channel(channel)[:n]
        table[f"{channel.value}_omc"] = shifted
    for system in ("mmc", "omc"):
        flags = np.zeros(n, dtype=int)
        frames = [f for f in movement_units.get(system, ()) if 0 <= f < n]
        flags[frames] = 1
        table[f"mu_{system}"] = flags
    header = {"rate_hz": mmc.rate_hz}
    header.update(meta or {})
    return write_table(path, table, "trajectory_plot", header)


def write_exclusions(path: Union[str, Path], exclusions: Sequence[Dict[str, str]], n_trials: int) -> Path:
    table = pd.DataFrame(list(exclusions), columns=EXCLUSION_COLUMNS).sort_values("trial_id", kind="stable")
    rate = len(table) / n_trials if n_trials else 0.0
    return write_table(path, table.reset_index(drop=True), "exclusions",
                       {"trials": n_trials, "excluded": len(table), "exclusion_rate": f"{rate:.4f}"})


def run_summary(infos: Sequence[TrialInfo], exclusions: Sequence[Dict[str, str]]) -> Dict[str, object]:
    """Trial counts per arm, median trials per participant per arm, exclusions by reason."""
    excluded = {e["trial_id"] for e in exclusions}
    summary: Dict[str, object] = {
        "schema_version": SCHEMA_VERSION,
        "trials": len(infos),
        "included": len(infos) - len(excluded),
    }
    per_arm: Dict[str, Dict[str, object]] = {}
    for arm in Arm:
        arm_infos = [i for i in infos if i.arm == arm]
        included = [i for i in arm_infos if i.trial_id not in excluded]
        counts: Dict[str, int] = {}
        for info in included:
            counts[info.participant_id] = counts.get(info.participant_id, 0) + 1
        per_arm[arm.value] = {
            "trials": len(arm_infos),
            "included": len(included),
            "median_trials_per_participant": float(np.median(list(counts.values()))) if counts else None,
        }
    summary["arms"] = per_arm
    summary["exclusions"] = {r.value: sum(e["reason"] == r.value for e in exclusions) for r in ExclusionReason}
    summary["exclusion_rate"] = round(len(excluded) / len(infos), 6) if infos else 0.0
    return summary


def write_summary(path: Union[str, Path], summary: Dict[str, object]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return path


def write_results(path: Union[str, Path], results: pd.DataFrame) -> Path:
    """Per-trial, per-channel agreement rows."""
    ordered = results.sort_values(["trial_id", "channel"], kind="stable").reset_index(drop=True)
    return write_table(path, ordered[list(RESULT_COLUMNS)], "channel_results")


def read_results(path: Union[str, Path]) -> pd.DataFrame:
    _, table = read_table(path, "channel results", RESULT_COLUMNS, ["bias", "lag_s", "lag_samples", "rmse", "r"])
    return table


def read_exclusions(path: Union[str, Path]) -> List[Dict[str, str]]:
    _, table = read_table(path, "exclusions file", EXCLUSION_COLUMNS)
    return table[EXCLUSION_COLUMNS].to_dict("records")
