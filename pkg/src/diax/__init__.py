"""diax: read, write, validate, convert, align and summarize DIAX diabetes time-series files."""

from .align import (
    AlignedFrame, Grid, HoldUntilNext, IntegrateRate, Linear, PreserveMissing, SumIntoBin,
    align_preset, align_subject, integrate_basal, make_grid, resample_signal,
)
from .convert import (
    MappingSpec, SourceTable, SyntheticProfile, convert_tables, generate_synthetic,
    load_mapping_spec, read_table,
)
from .metrics import (
    AgpProfile, ByDay, ByWeek, Custom, GlycemicReport, RangeThresholds, Rolling, Window,
    agp_profile, cohort_aggregate, glycemic_summary, outcomes_over_time, slice_windows, time_in_range,
)
from .model import (
    REGISTRY, Signal, SignalMetadata, SubjectRecord, format_subject_filename, load_subject,
    parse_subject_filename, read_subject, save_subject, write_subject,
)
from .plotout import PlotStyle, render_agp, render_outcomes
from .timeparse import TimedInstant, format_timestamp, parse_timestamp
from .validate import ValidationReport, validate_dataset, validate_subject

__version__ = "0.1.0"

__all__ = [
    "AlignedFrame", "Grid", "HoldUntilNext", "IntegrateRate", "Linear", "PreserveMissing",
    "SumIntoBin", "align_preset", "align_subject", "integrate_basal", "make_grid",
    "resample_signal", "MappingSpec", "SourceTable", "SyntheticProfile", "convert_tables",
    "generate_synthetic", "load_mapping_spec", "read_table", "AgpProfile", "ByDay", "ByWeek",
    "Custom", "GlycemicReport", "RangeThresholds", "Rolling", "Window", "agp_profile",
    "cohort_aggregate", "glycemic_summary", "outcomes_over_time", "slice_windows", "time_in_range",
    "REGISTRY", "Signal", "SignalMetadata", "SubjectRecord", "format_subject_filename",
    "load_subject", "parse_subject_filename", "read_subject", "save_subject", "write_subject",
    "PlotStyle", "render_agp", "render_outcomes", "TimedInstant", "format_timestamp",
    "parse_timestamp", "ValidationReport", "validate_dataset", "validate_subject",
]
