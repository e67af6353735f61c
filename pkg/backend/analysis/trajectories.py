"""
The six kinematic trajectories compared between capture systems.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Mapping, Optional, Tuple, Union

import numpy as np
import pandas as pd
from scipy.interpolate import CubicSpline
from scipy.signal import butter, sosfiltfilt

from biomech.body_model import BodyModel, MarkerOffsets, ScaleParams
from biomech.kinematics import marker_positions
from errors import ContractViolationError, MalformedFileError
from fileio import read_table, write_table
from models.schemas import CHANNEL_UNITS, ChannelId, DeriveConfig

logger = logging.getLogger(__name__)

MIN_FRAMES = 5
_UNIT_SUFFIX = {"deg": "deg", "deg/s": "deg_per_s", "m/s": "m_per_s", "mm": "mm"}


@dataclass(frozen=True)
class TrajectorySeries:
    """Uniformly sampled channels sharing one time base."""
    rate_hz: float
    t0: float
    channels: Mapping[ChannelId, np.ndarray]

    def __post_init__(self):
        if not self.rate_hz > 0:
            raise ContractViolationError("rate must be positive", rate_hz=self.rate_hz)
        channels = {ChannelId(k): np.asarray(v, dtype=np.float64) for k, v in self.channels.items()}
        lengths = {v.shape for v in channels.values()}
        if len(lengths) > 1 or any(len(s) != 1 for s in lengths):
            raise ContractViolationError("all channels must be 1-D with the same length")
        object.__setattr__(self, "channels", channels)

    @property
    def n_samples(self) -> int:
        return len(next(iter(self.channels.values()))) if self.channels else 0

    @property
    def times(self) -> np.ndarray:
        return self.t0 + np.arange(self.n_samples) / self.rate_hz

    @property
    def units(self) -> Dict[ChannelId, str]:
        return {c: CHANNEL_UNITS[c] for c in self.channels}

    def channel(self, channel_id: ChannelId) -> np.ndarray:
        try:
            return self.channels[ChannelId(channel_id)]
        except KeyError:
            raise ContractViolationError(f"missing channel '{ChannelId(channel_id).value}'",
                                         channel=ChannelId(channel_id).value)

    def shifted(self, dt: float) -> "TrajectorySeries":
        return TrajectorySeries(self.rate_hz, self.t0 + dt, self.channels)


def lowpass(x: np.ndarray, rate_hz: float, cutoff_hz: float, order: int = 2) -> np.ndarray:
    """Zero-phase Butterworth low-pass along axis 0; a no-op at or above Nyquist."""
    nyquist = 0.5 * rate_hz
    if cutoff_hz >= nyquist:
        logger.debug("cutoff %.3g Hz at or above Nyquist %.3g Hz; not filtering", cutoff_hz, nyquist)
        return np.asarray(x, dtype=np.float64)
    sos = butter(order, cutoff_hz / nyquist, btype="low", output="sos")
    padlen = min(3 * (2 * len(sos) + 1), len(x) - 1)
    return sosfiltfilt(sos, x, axis=0, padlen=padlen)


def derive_channels(
    model: BodyModel,
    angles: np.ndarray,
    scale: ScaleParams,
    offsets: MarkerOffsets,
    rate_hz: float,
    side: str = "right",
    config: DeriveConfig = DeriveConfig(),
) -> TrajectorySeries:
    """
    Channels of one arm from a fitted joint-angle trajectory.

    Angles come straight from theta (degrees). Elbow angular velocity and hand
    speed are central differences, low-pass filtered. Trunk displacement is the
    sternum's distance (mm) from its mean over the first ``baseline_s``.

    Args:
        model: Model the angles were fitted with
        angles: (T, dof) joint angles
        scale: Fitted segment scales
        offsets: Fitted marker corrections
        rate_hz: Sample rate of ``angles``
        side: Which arm ("right" or "left")
        config: Filter cutoff and baseline window

    Returns:
        TrajectorySeries with all six channels, t0 = 0

    Raises:
        ContractViolationError: If fewer than 5 frames are given
    """
    angles = np.asarray(angles, dtype=np.float64)
    if angles.ndim != 2 or angles.shape[0] < MIN_FRAMES:
        raise ContractViolationError("trajectory too short to derive channels",
                                     frames=int(angles.shape[0]) if angles.ndim else 0, required=MIN_FRAMES)
    s = {"right": "r", "left": "l"}[side]
    dt = 1.0 / rate_hz
    deg = np.degrees
    elbow = deg(angles[:, model.dof_index(f"elbow_flexion_{s}")])
    markers = marker_positions(model, scale, offsets, angles)
    hand = markers[:, model.marker_index(f"hand_{s}")]
    sternum = markers[:, model.marker_index("sternum")]

    elbow_velocity = lowpass(np.gradient(elbow, dt), rate_hz, config.cutoff_hz)
    hand_velocity = lowpass(np.gradient(hand, dt, axis=0), rate_hz, config.cutoff_hz)
    n_base = min(int(np.floor(config.baseline_s * rate_hz + 1e-9)) + 1, len(sternum))
    baseline = sternum[:n_base].mean(axis=0)

    channels = {
        ChannelId.SHOULDER_FLEXION: deg(angles[:, model.dof_index(f"shoulder_flexion_{s}")]),
        ChannelId.SHOULDER_ABDUCTION: deg(angles[:, model.dof_index(f"shoulder_abduction_{s}")]),
        ChannelId.ELBOW_FLEXION: elbow,
        ChannelId.ELBOW_ANGULAR_VELOCITY: elbow_velocity,
        ChannelId.END_EFFECTOR_VELOCITY: np.linalg.norm(hand_velocity, axis=1),
        ChannelId.TRUNK_DISPLACEMENT: 1000.0 * np.linalg.norm(sternum - baseline, axis=1),
    }
    return TrajectorySeries(rate_hz, 0.0, channels)


def elbow_extension(series: TrajectorySeries) -> np.ndarray:
    """Elbow extension angle (deg) = 180 - elbow flexion."""
    return 180.0 - series.channel(ChannelId.ELBOW_FLEXION)


def resample(series: TrajectorySeries, target_rate_hz: float) -> TrajectorySeries:
    """
    Cubic-spline resampling onto ``t0 + k / target_rate``.

    The output includes t0 and stops at the last input time (no extrapolation).
    """
    if not target_rate_hz > 0:
        raise ContractViolationError("target rate must be positive", target_rate_hz=target_rate_hz)
    times = series.times
    if series.n_samples < 2:
        return TrajectorySeries(target_rate_hz, series.t0, series.channels)
    span = times[-1] - series.t0
    n_out = int(np.floor(span * target_rate_hz + 1e-9)) + 1
    new_times = series.t0 + np.arange(n_out) / target_rate_hz
    channels = {c: CubicSpline(times, v)(new_times) for c, v in series.channels.items()}
    return TrajectorySeries(target_rate_hz, series.t0, channels)


# --- trajectory files -------------------------------------------------------------

def _column(channel: ChannelId) -> str:
    return f"{channel.value}_{_UNIT_SUFFIX[CHANNEL_UNITS[channel]]}"


def write_trajectory(path: Union[str, Path], series: TrajectorySeries,
                     meta: Optional[Dict[str, object]] = None) -> Path:
    """time_s followed by one ``<Channel>_<unit>`` column per channel."""
    table = pd.DataFrame({"time_s": series.times})
    for channel in ChannelId:
        if channel in series.channels:
            table[_column(channel)] = series.channels[channel]
    header = {"rate_hz": series.rate_hz, "t0": series.t0}
    header.update(meta or {})
    return write_table(path, table, "trajectory", header)


def read_trajectory(path: Union[str, Path]) -> Tuple[TrajectorySeries, Dict[str, str]]:
    columns = {_column(c): c for c in ChannelId}
    meta, table = read_table(path, "trajectory file", ["time_s"], ["time_s", *columns])
    try:
        rate, t0 = float(meta["rate_hz"]), float(meta["t0"])
    except (KeyError, ValueError):
        raise MalformedFileError(str(path), "header needs numeric 'rate_hz' and 't0'")
    unknown = [c for c in table.columns if c != "time_s" and c not in columns]
    if unknown:
        raise MalformedFileError(str(path), f"unknown channel column '{unknown[0]}'", len(meta) + 1)
    channels = {columns[c]: table[c].to_numpy() for c in table.columns if c in columns}
    return TrajectorySeries(rate, t0, channels), meta
