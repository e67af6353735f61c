"""
Drinking-task phase segmentation and movement-quality measures.

A trial starts with the reach (trials are trigger-segmented) and contains four
movements separated by quiet periods: reach to the cup, cup to mouth, mouth
back to the table, and the return of the hand. Phases:

    Reaching   frame 0 .. offset of movement 1
    Forward    .. offset of movement 2
    Drinking   .. onset of movement 3
    Back       .. offset of movement 3
    Returning  .. offset of movement 4
    Rest       .. end of the trial (may be empty)
"""

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy.signal import find_peaks
from scipy.stats import pearsonr

from errors import ContractViolationError, SegmentationError
from fileio import read_table, write_table
from models.schemas import PHASE_ORDER, ChannelId, MeasureConfig, Phase

from .trajectories import TrajectorySeries, elbow_extension

logger = logging.getLogger(__name__)

N_MOVEMENTS = 4

MEASURE_COLUMNS: Tuple[str, ...] = (
    "total_movement_time",
    "n_movement_units",
    "peak_velocity",
    "elbow_angular_pv",
    "time_to_pv",
    "time_to_first_pv",
    "max_elbow_extension",
    "max_shoulder_abduction",
    "max_trunk_displacement",
    "max_shoulder_flexion_reach",
    "max_shoulder_flexion_drink",
    "interjoint_coordination",
)

MEASURE_LABELS: Dict[str, str] = {
    "peak_velocity": "PV",
    "time_to_pv": "Time to PV",
    "time_to_first_pv": "Time to first PV",
    "n_movement_units": "Number of MUs",
    "total_movement_time": "Total movement time",
    "elbow_angular_pv": "Elbow angular PV",
    "interjoint_coordination": "Interjoint coordination",
    "max_trunk_displacement": "Trunk displacement",
    "max_elbow_extension": "Elbow extension",
    "max_shoulder_abduction": "Shoulder abduction",
    "max_shoulder_flexion_reach": "Shoulder flexion R",
    "max_shoulder_flexion_drink": "Shoulder flexion D",
}

ID_COLUMNS = ("trial_id", "participant_id", "arm", "system")


@dataclass(frozen=True)
class PhaseSegmentation:
    """Contiguous phases (start inclusive, end exclusive) covering [0, n_frames)."""
    phases: Tuple[Tuple[Phase, int, int], ...]
    n_frames: int
    rate_hz: float
    movements: Tuple[Tuple[int, int], ...] = ()

    def __post_init__(self):
        names = tuple(p for p, _, _ in self.phases)
        if names != PHASE_ORDER:
            raise ContractViolationError("phases must appear once each in canonical order")
        cursor = 0
        for phase, start, end in self.phases:
            if start != cursor or end < start:
                raise ContractViolationError(f"phase {phase.value} is not contiguous")
            cursor = end
        if cursor != self.n_frames:
            raise ContractViolationError("phases must cover the whole trial")

    def span(self, phase: Phase) -> slice:
        for name, start, end in self.phases:
            if name == phase:
                return slice(start, end)
        raise ContractViolationError(f"unknown phase {phase}")

    def boundaries(self) -> List[int]:
        return [start for _, start, _ in self.phases] + [self.n_frames]

    def for_rate(self, rate_hz: float, n_frames: int) -> "PhaseSegmentation":
        """The same segmentation mapped by time onto another sampling grid."""
        if rate_hz == self.rate_hz and n_frames == self.n_frames:
            return self
        inner = [int(round(b * rate_hz / self.rate_hz)) for b in self.boundaries()[1:-1]]
        bounds = np.maximum.accumulate(np.clip([0, *inner, n_frames], 0, n_frames))
        phases = tuple((p, int(bounds[i]), int(bounds[i + 1])) for i, p in enumerate(PHASE_ORDER))
        movements = tuple((int(round(a * rate_hz / self.rate_hz)), int(round(b * rate_hz / self.rate_hz)))
                          for a, b in self.movements)
        return PhaseSegmentation(phases, n_frames, rate_hz, movements)


# --- segmentation -------------------------------------------------------------------

def _runs(mask: np.ndarray) -> List[Tuple[int, int]]:
    """(start, end) of each run of True values, end exclusive."""
    padded = np.concatenate([[False], mask, [False]])
    edges = np.flatnonzero(np.diff(padded.astype(int)))
    return list(zip(edges[::2], edges[1::2]))


def _episodes(v: np.ndarray, threshold: float, dwell: int) -> List[Tuple[int, int]]:
    runs = _runs(v > threshold)
    merged: List[List[int]] = []
    for start, end in runs:
        if merged and start - merged[-1][1] < dwell:
            merged[-1][1] = end
        else:
            merged.append([start, end])
    return [(s, e) for s, e in merged if e - s >= dwell]


def _quiet_before(v: np.ndarray, peak: int, threshold: float, dwell: int, floor: int) -> int:
    """First frame of the movement: just after the last quiet dwell before ``peak``."""
    i = peak
    while i > floor:
        if v[i - 1] < threshold and np.all(v[max(floor, i - dwell):i] < threshold):
            return i
        i -= 1
    return floor


def _quiet_after(v: np.ndarray, peak: int, threshold: float, dwell: int, ceil: int) -> int:
    """First frame after the movement that starts a quiet dwell (exclusive end)."""
    i = peak + 1
    while i < ceil:
        if v[i] < threshold and np.all(v[i:min(ceil, i + dwell)] < threshold):
            return i
        i += 1
    return ceil


def classify_phases(eev: np.ndarray, rate_hz: float, config: MeasureConfig = MeasureConfig()) -> PhaseSegmentation:
    """
    Segment a drinking cycle from the end-effector velocity.

    Args:
        eev: End-effector speed (m/s), one sample per frame
        rate_hz: Sample rate
        config: Onset fraction, dwell and absolute velocity floor

    Returns:
        PhaseSegmentation with six phases in canonical order

    Raises:
        SegmentationError: If the velocity never exceeds the floor or four
            movements cannot be found
    """
    v = np.nan_to_num(np.asarray(eev, dtype=np.float64))
    n = len(v)
    if n == 0 or v.max() < config.velocity_floor:
        raise SegmentationError("velocity never exceeds the movement floor",
                                floor=config.velocity_floor, peak=float(v.max()) if n else 0.0)
    dwell = max(1, int(round(config.dwell_s * rate_hz)))
    episodes = _episodes(v, config.onset_fraction * v.max(), dwell)
    while len(episodes) > N_MOVEMENTS:
        gaps = [episodes[i + 1][0] - episodes[i][1] for i in range(len(episodes) - 1)]
        k = int(np.argmin(gaps))
        episodes[k:k + 2] = [(episodes[k][0], episodes[k + 1][1])]
    if len(episodes) < N_MOVEMENTS:
        raise SegmentationError("could not find four movements in the velocity profile",
                                movements=len(episodes))

    movements = []
    for k, (start, end) in enumerate(episodes):
        peak = start + int(np.argmax(v[start:end]))
        threshold = config.onset_fraction * v[peak]
        floor = movements[-1][1] if movements else 0
        ceil = episodes[k + 1][0] if k + 1 < len(episodes) else n
        onset = _quiet_before(v, peak, threshold, dwell, floor)
        offset = _quiet_after(v, peak, threshold, dwell, ceil)
        movements.append((onset, offset))

    inner = [movements[0][1], movements[1][1], movements[2][0], movements[2][1], movements[3][1]]
    bounds = np.maximum.accumulate([0, *inner, n])
    phases = tuple((p, int(bounds[i]), int(bounds[i + 1])) for i, p in enumerate(PHASE_ORDER))
    empty = [p.value for p, s, e in phases[:-1] if e <= s]
    if empty:
        raise SegmentationError("empty drinking-task phases", phases=empty)
    return PhaseSegmentation(phases, n, rate_hz, tuple(movements))


# --- movement units -----------------------------------------------------------------

def movement_unit_peaks(segment: np.ndarray, rate_hz: float, config: MeasureConfig = MeasureConfig()) -> np.ndarray:
    """Indices of velocity maxima with enough prominence and separation."""
    distance = max(1, math.ceil(config.mu_separation_s * rate_hz - 1e-9))
    peaks, _ = find_peaks(np.asarray(segment, dtype=np.float64), prominence=config.mu_prominence, distance=distance)
    return peaks


def count_movement_units(segment: np.ndarray, rate_hz: float, config: MeasureConfig = MeasureConfig()) -> int:
    """
    Number of movement units in a velocity segment.

    A monotone segment with any motion still counts as one unit.
    """
    segment = np.asarray(segment, dtype=np.float64)
    if segment.size == 0:
        raise ContractViolationError("movement-unit segment is empty")
    peaks = movement_unit_peaks(segment, rate_hz, config)
    if len(peaks) == 0:
        return 1 if segment.max() > 0 else 0
    return int(len(peaks))


# --- measures -------------------------------------------------------------------------

@dataclass(frozen=True)
class MeasureSet:
    total_movement_time: float
    n_movement_units: int
    peak_velocity: float
    elbow_angular_pv: float
    time_to_pv: float
    time_to_first_pv: float
    max_elbow_extension: float
    max_shoulder_abduction: float
    max_trunk_displacement: float
    max_shoulder_flexion_reach: float
    max_shoulder_flexion_drink: float
    interjoint_coordination: Optional[float]

    def as_row(self) -> Dict[str, object]:
        return {k: getattr(self, k) for k in MEASURE_COLUMNS}


def pearson_or_none(a: np.ndarray, b: np.ndarray) -> Optional[float]:
    """Pearson r, or None when either input is constant or too short."""
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    if len(a) < 2 or np.ptp(a) == 0 or np.ptp(b) == 0:
        return None
    r = float(pearsonr(a, b)[0])
    return float(np.clip(r, -1.0, 1.0)) if np.isfinite(r) else None


def compute_measures(
    series: TrajectorySeries,
    phases: PhaseSegmentation,
    config: MeasureConfig = MeasureConfig(),
) -> MeasureSet:
    """
    The twelve movement-quality measures of one trial.

    Reach-phase measures use Reaching only; drink shoulder flexion uses
    Drinking; abduction spans Reaching through Drinking; trunk displacement
    spans the whole trial. Times are seconds from the Reaching start.

    Raises:
        ContractViolationError: If a required channel is missing
        SegmentationError: If Reaching or Drinking is empty on this series
    """
    v = series.channel(ChannelId.END_EFFECTOR_VELOCITY)
    omega = series.channel(ChannelId.ELBOW_ANGULAR_VELOCITY)
    flexion = series.channel(ChannelId.SHOULDER_FLEXION)
    abduction = series.channel(ChannelId.SHOULDER_ABDUCTION)
    trunk = series.channel(ChannelId.TRUNK_DISPLACEMENT)
    extension = elbow_extension(series)
    phases = phases.for_rate(series.rate_hz, series.n_samples)
    rate = series.rate_hz

    reach = phases.span(Phase.REACHING)
    drink = phases.span(Phase.DRINKING)
    to_back = slice(reach.start, phases.span(Phase.BACK).start)
    if reach.stop <= reach.start or drink.stop <= drink.start:
        raise SegmentationError("Reaching and Drinking must be non-empty on this series",
                                reaching=reach.stop - reach.start, drinking=drink.stop - drink.start)

    v_reach = v[reach]
    pv_index = int(np.argmax(v_reach))
    peaks = movement_unit_peaks(v_reach, rate, config)
    first_index = min(int(peaks[0]), pv_index) if len(peaks) else pv_index

    return MeasureSet(
        total_movement_time=(phases.span(Phase.REST).start - reach.start) / rate,
        n_movement_units=count_movement_units(v_reach, rate, config),
        peak_velocity=float(v_reach[pv_index]),
        elbow_angular_pv=float(np.max(np.abs(omega[reach]))),
        time_to_pv=pv_index / rate,
        time_to_first_pv=first_index / rate,
        max_elbow_extension=float(np.max(extension[reach])),
        max_shoulder_abduction=float(np.max(abduction[to_back])),
        max_trunk_displacement=float(np.max(trunk)),
        max_shoulder_flexion_reach=float(np.max(flexion[reach])),
        max_shoulder_flexion_drink=float(np.max(flexion[drink])),
        interjoint_coordination=pearson_or_none(extension[reach], flexion[reach]),
    )


# --- files ----------------------------------------------------------------------------

def write_measures(path: Union[str, Path], rows: Sequence[Dict[str, object]]) -> Path:
    """One row per (trial, system): identifiers then the measures in MEASURE_COLUMNS order."""
    table = pd.DataFrame(list(rows), columns=[*ID_COLUMNS, *MEASURE_COLUMNS])
    table = table.sort_values(["trial_id", "system"], kind="stable").reset_index(drop=True)
    return write_table(path, table, "measures")


def read_measures(path: Union[str, Path]) -> pd.DataFrame:
    _, table = read_table(path, "measures file", [*ID_COLUMNS, *MEASURE_COLUMNS], MEASURE_COLUMNS)
    return table


PHASE_COLUMNS = ["trial_id", "system", "phase", "start_frame", "end_frame", "rate_hz"]


def write_phases(path: Union[str, Path], segmentations: Dict[Tuple[str, str], PhaseSegmentation]) -> Path:
    """Phase boundaries per (trial_id, system)."""
    rows = []
    for trial_id, system in sorted(segmentations):
        seg = segmentations[(trial_id, system)]
        for phase, start, end in seg.phases:
            rows.append({"trial_id": trial_id, "system": system, "phase": phase.value,
                         "start_frame": start, "end_frame": end, "rate_hz": seg.rate_hz})
    return write_table(path, pd.DataFrame(rows, columns=PHASE_COLUMNS), "phases")


def read_phases(path: Union[str, Path]) -> Dict[Tuple[str, str], PhaseSegmentation]:
    _, table = read_table(path, "phases file", PHASE_COLUMNS, ["start_frame", "end_frame", "rate_hz"])
    segmentations = {}
    for (trial_id, system), rows in table.groupby(["trial_id", "system"], sort=True):
        order = {p.value: i for i, p in enumerate(PHASE_ORDER)}
        rows = rows.sort_values("phase", key=lambda s: s.map(order))
        phases = tuple((Phase(r.phase), int(r.start_frame), int(r.end_frame)) for r in rows.itertuples())
        segmentations[(trial_id, system)] = PhaseSegmentation(
            phases, phases[-1][2] if phases else 0, float(rows["rate_hz"].iloc[0]))
    return segmentations
