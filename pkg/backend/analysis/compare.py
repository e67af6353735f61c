"""
Agreement between the markerless (MMC) and marker-based (OMC) trajectories.

For every channel the constant bias is removed, the lag minimizing RMSE is
found on the integer sample grid, and RMSE / Pearson r are reported on the
overlapping region. Per-trial results are aggregated as median [q25, q75]
per channel and arm.
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from errors import AlignmentError, ContractViolationError
from models.schemas import Arm, ChannelId, CompareConfig

from .drinking_task import MEASURE_COLUMNS, pearson_or_none
from .trajectories import TrajectorySeries, resample

logger = logging.getLogger(__name__)

METRICS = ("r", "rmse", "bias", "lag_s")
RESULT_COLUMNS = ("trial_id", "participant_id", "arm", "channel", "bias", "lag_s", "lag_samples", "rmse", "r",
                  "on_boundary")


@dataclass(frozen=True)
class AlignmentResult:
    channel: ChannelId
    bias: float
    lag_s: float
    lag_samples: int
    rmse: float
    r: Optional[float]
    on_boundary: bool = False


class LagSearch(NamedTuple):
    lag_samples: int
    lag_s: float
    rmse: float
    on_boundary: bool


@dataclass(frozen=True)
class Summary:
    """median [q25, q75] of one group."""
    median: float
    q25: float
    q75: float
    n: int

    def formatted(self, digits: int = 2) -> str:
        return f"{self.median:.{digits}f} [{self.q25:.{digits}f}, {self.q75:.{digits}f}]"


@dataclass
class AggregateReport:
    """Table I cells keyed by (channel, arm, metric); Table II keyed by (channel, arm)."""
    table1: Dict[Tuple[ChannelId, Arm, str], Summary]
    table2: Dict[Tuple[ChannelId, Arm], float]


@dataclass(frozen=True)
class MeasureCorrelation:
    measure: str
    r_s: Optional[float]
    r_av: Optional[float]
    n_pairs: int
    n_groups: int


def _pair(a: np.ndarray, b: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ContractViolationError("signals must be 1-D with equal length", a=list(a.shape), b=list(b.shape))
    return a, b


def static_bias(a: np.ndarray, b: np.ndarray) -> Tuple[float, np.ndarray]:
    """
    Difference in means of ``a`` and ``b``.

    Returns:
        Tuple (bias, b + bias)
    """
    a, b = _pair(a, b)
    bias = float(np.mean(a) - np.mean(b))
    return bias, b + bias


def _overlap(a: np.ndarray, b: np.ndarray, lag: int) -> Tuple[np.ndarray, np.ndarray]:
    """Pairs (a[n], b[n + lag]) for every n where both exist."""
    n = len(a)
    if lag >= 0:
        return a[:n - lag], b[lag:]
    return a[-lag:], b[:n + lag]


def _rmse(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.sqrt(np.mean((a - b) ** 2)))


def align_lag(
    a: np.ndarray,
    b: np.ndarray,
    rate_hz: float,
    max_lag_s: float = 0.25,
    min_overlap_fraction: float = 0.5,
) -> LagSearch:
    """
    Grid search for the lag L with a[n] ~ b[n + L] minimizing RMSE.

    Candidates are visited as 0, -1, +1, -2, +2, ... so ties resolve toward
    the smaller |lag| and then the negative one.

    Raises:
        AlignmentError: If the largest lag would leave less than
            ``min_overlap_fraction`` of the signal overlapping
    """
    a, b = _pair(a, b)
    n = len(a)
    max_k = int(np.floor(max_lag_s * rate_hz + 1e-9))
    if n == 0 or n - max_k < min_overlap_fraction * n:
        raise AlignmentError("lag search leaves too little overlap",
                             samples=n, max_lag_samples=max_k)
    best_lag, best_rmse = 0, _rmse(a, b)
    for k in range(1, max_k + 1):
        for lag in (-k, k):
            rmse = _rmse(*_overlap(a, b, lag))
            if rmse < best_rmse - 1e-12 * max(1.0, best_rmse):
                best_lag, best_rmse = lag, rmse
    return LagSearch(best_lag, best_lag / rate_hz, best_rmse, max_k > 0 and abs(best_lag) == max_k)


def agreement(a: np.ndarray, b: np.ndarray) -> Tuple[float, Optional[float]]:
    """RMSE and Pearson r of two aligned signals; r is None for constant input."""
    a, b = _pair(a, b)
    if len(a) < 3:
        raise ContractViolationError("agreement needs at least 3 samples", samples=len(a))
    return _rmse(a, b), pearson_or_none(a, b)


def compare_channel(channel: ChannelId, a: np.ndarray, b: np.ndarray, rate_hz: float,
                    config: CompareConfig = CompareConfig()) -> AlignmentResult:
    """Bias, lag, RMSE and r of one channel pair (a = MMC, b = OMC)."""
    bias, adjusted = static_bias(a, b)
    search = align_lag(a, adjusted, rate_hz, config.max_lag_s, config.min_overlap_fraction)
    rmse, r = agreement(*_overlap(np.asarray(a, dtype=np.float64), adjusted, search.lag_samples))
    return AlignmentResult(channel, bias, search.lag_s, search.lag_samples, rmse, r, search.on_boundary)


def common_grid(mmc: TrajectorySeries, omc: TrajectorySeries,
                target_rate_hz: float) -> Tuple[TrajectorySeries, TrajectorySeries]:
    """Both series at ``target_rate_hz`` and truncated to a common length."""
    if mmc.rate_hz != target_rate_hz:
        mmc = resample(mmc, target_rate_hz)
    if omc.rate_hz != target_rate_hz:
        omc = resample(omc, target_rate_hz)
    n = min(mmc.n_samples, omc.n_samples)

    def trim(s: TrajectorySeries) -> TrajectorySeries:
        return TrajectorySeries(s.rate_hz, s.t0, {c: v[:n] for c, v in s.channels.items()})

    return trim(mmc), trim(omc)


def compare_series(mmc: TrajectorySeries, omc: TrajectorySeries,
                   config: CompareConfig = CompareConfig()) -> Dict[ChannelId, AlignmentResult]:
    """Per-channel agreement of one trial, channels present in both series."""
    mmc, omc = common_grid(mmc, omc, config.target_rate_hz)
    return {
        channel: compare_channel(channel, mmc.channel(channel), omc.channel(channel), mmc.rate_hz, config)
        for channel in ChannelId
        if channel in mmc.channels and channel in omc.channels
    }


def synchronization_failed(results: Dict[ChannelId, AlignmentResult], fraction: float = 0.5) -> bool:
    """True when the best lag hit the search boundary on more than ``fraction`` of channels."""
    if not results:
        return False
    hits = sum(r.on_boundary for r in results.values())
    return hits > fraction * len(results)


def results_frame(trial_id: str, participant_id: str, arm: Arm,
                  results: Dict[ChannelId, AlignmentResult]) -> pd.DataFrame:
    rows = [{
        "trial_id": trial_id, "participant_id": participant_id, "arm": Arm(arm).value,
        "channel": r.channel.value, "bias": r.bias, "lag_s": r.lag_s, "lag_samples": r.lag_samples,
        "rmse": r.rmse, "r": np.nan if r.r is None else r.r, "on_boundary": r.on_boundary,
    } for r in results.values()]
    return pd.DataFrame(rows, columns=list(RESULT_COLUMNS))


# --- aggregation ---------------------------------------------------------------------

def summarize(values: Sequence[float]) -> Optional[Summary]:
    """Median and linear-interpolation quartiles; None when nothing is finite."""
    v = np.asarray(values, dtype=np.float64)
    v = v[np.isfinite(v)]
    if v.size == 0:
        return None
    q25, median, q75 = np.percentile(v, [25, 50, 75])
    return Summary(float(median), float(q25), float(q75), int(v.size))


def aggregate(results: pd.DataFrame) -> AggregateReport:
    """
    Table I and Table II statistics from per-trial channel results.

    Args:
        results: Rows with RESULT_COLUMNS, one per (trial, channel)

    Returns:
        AggregateReport; groups without data are omitted with a warning
    """
    table1: Dict[Tuple[ChannelId, Arm, str], Summary] = {}
    table2: Dict[Tuple[ChannelId, Arm], float] = {}
    for channel in ChannelId:
        for arm in Arm:
            group = results[(results["channel"] == channel.value) & (results["arm"] == arm.value)]
            if group.empty:
                logger.warning("No trials for %s / %s arm; omitting from report", channel.value, arm.value)
                continue
            for metric in METRICS:
                summary = summarize(group[metric].to_numpy(dtype=float))
                if summary is None:
                    logger.warning("No finite %s values for %s / %s arm", metric, channel.value, arm.value)
                    continue
                table1[(channel, arm, metric)] = summary
            iqrs = []
            for _, per_participant in group.groupby("participant_id", sort=True):
                s = summarize(per_participant["bias"].to_numpy(dtype=float))
                if s is not None:
                    iqrs.append(s.q75 - s.q25)
            if iqrs:
                table2[(channel, arm)] = float(np.mean(iqrs))
    return AggregateReport(table1, table2)


def measure_correlations(measures: pd.DataFrame) -> Tuple[List[MeasureCorrelation], pd.DataFrame]:
    """
    Per-measure correlation between systems.

    r_s pairs individual trials; r_av pairs per-participant, per-arm means.
    Fewer than 3 pairs gives None.

    Returns:
        Tuple (correlations in MEASURE_COLUMNS order, paired plot points)
    """
    mmc = measures[measures["system"] == "mmc"].set_index("trial_id")
    omc = measures[measures["system"] == "omc"].set_index("trial_id")
    paired_ids = sorted(set(mmc.index) & set(omc.index))
    correlations, points = [], []
    for measure in MEASURE_COLUMNS:
        pairs = pd.DataFrame({
            "trial_id": paired_ids,
            "participant_id": [omc.at[t, "participant_id"] for t in paired_ids],
            "arm": [omc.at[t, "arm"] for t in paired_ids],
            "mmc": [float(mmc.at[t, measure]) for t in paired_ids],
            "omc": [float(omc.at[t, measure]) for t in paired_ids],
        })
        pairs = pairs.astype({"mmc": float, "omc": float})
        pairs = pairs[np.isfinite(pairs["mmc"]) & np.isfinite(pairs["omc"])]
        means = pairs.groupby(["participant_id", "arm"], sort=True)[["mmc", "omc"]].mean()
        r_s = pearson_or_none(pairs["mmc"], pairs["omc"]) if len(pairs) >= 3 else None
        r_av = pearson_or_none(means["mmc"], means["omc"]) if len(means) >= 3 else None
        if r_s is None or r_av is None:
            logger.warning("Correlation for %s is missing (%d pairs, %d participant means)",
                           measure, len(pairs), len(means))
        correlations.append(MeasureCorrelation(measure, r_s, r_av, len(pairs), len(means)))
        points.append(pairs.assign(measure=measure))
    columns = ["measure", "trial_id", "participant_id", "arm", "mmc", "omc"]
    plot = pd.concat(points, ignore_index=True)[columns] if points else pd.DataFrame(columns=columns)
    return correlations, plot
