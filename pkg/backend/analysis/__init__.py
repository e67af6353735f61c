from .trajectories import (
    TrajectorySeries,
    derive_channels,
    elbow_extension,
    lowpass,
    read_trajectory,
    resample,
    write_trajectory,
)
from .drinking_task import (
    MEASURE_COLUMNS,
    MeasureSet,
    PhaseSegmentation,
    classify_phases,
    compute_measures,
    count_movement_units,
    movement_unit_peaks,
    read_measures,
    read_phases,
    write_measures,
    write_phases,
)
from .compare import (
    AggregateReport,
    AlignmentResult,
    MeasureCorrelation,
    aggregate,
    agreement,
    align_lag,
    compare_series,
    measure_correlations,
    static_bias,
    summarize,
    synchronization_failed,
)

__all__ = [
    "TrajectorySeries",
    "derive_channels",
    "elbow_extension",
    "lowpass",
    "read_trajectory",
    "resample",
    "write_trajectory",
    "MEASURE_COLUMNS",
    "MeasureSet",
    "PhaseSegmentation",
    "classify_phases",
    "compute_measures",
    "count_movement_units",
    "movement_unit_peaks",
    "read_measures",
    "read_phases",
    "write_measures",
    "write_phases",
    "AggregateReport",
    "AlignmentResult",
    "MeasureCorrelation",
    "aggregate",
    "agreement",
    "align_lag",
    "compare_series",
    "measure_correlations",
    "static_bias",
    "summarize",
    "synchronization_failed",
]
