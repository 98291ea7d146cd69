"""Glycemic metrics, AGP percentile profiles and cohort aggregation.

Range percentages count samples by default.  ``tbr_low_pct`` and
``tar_high_pct`` are cumulative (they include the very-low / very-high
bands), so that ``tbr_low + tir + tar_high == 100``::

    tbr_very_low   v <  very_low                 (default  < 54)
    tbr_low        v <  low                      (default  < 70)
    tir            low <= v <= high              (default 70..180)
    tar_high       v >  high                     (default > 180)
    tar_very_high  v >  very_high                (default > 250)

GMI is ``3.31 + 0.02392 * mean`` and CV is ``100 * sd / mean`` with the
n-1 sample SD.  Percentiles interpolate linearly between closest ranks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np

from .errors import EmptyCohort, EmptySignal, NoData
from .timeparse import TimedInstant

__all__ = [
    "MISSING",
    "RangeThresholds",
    "ByDay",
    "ByWeek",
    "Custom",
    "Rolling",
    "Window",
    "GlycemicReport",
    "AgpProfile",
    "MetricAggregate",
    "REPORT_METRICS",
    "GMI_INTERCEPT",
    "GMI_SLOPE",
    "percentile",
    "slice_windows",
    "time_in_range",
    "glycemic_summary",
    "agp_profile",
    "outcomes_over_time",
    "cohort_aggregate",
]

MISSING = math.nan
GMI_INTERCEPT = 3.31
GMI_SLOPE = 0.02392
DAY_MS = 86_400_000
AGP_PERCENTILES = (5, 25, 50, 75, 95)


@dataclass(frozen=True)
class RangeThresholds:
    very_low: float = 54.0
    low: float = 70.0
    high: float = 180.0
    very_high: float = 250.0

    def __post_init__(self):
        if not self.very_low < self.low < self.high < self.very_high:
            raise ValueError("thresholds must satisfy very_low < low < high < very_high")

    def scaled(self, factor):
        return RangeThresholds(*(factor * getattr(self, f.name) for f in fields(self)))


@dataclass(frozen=True)
class ByDay:
    pass


@dataclass(frozen=True)
class ByWeek:
    pass


@dataclass(frozen=True)
class Custom:
    start: TimedInstant
    end: TimedInstant

    def __post_init__(self):
        if not self.start < self.end:
            raise ValueError("custom window start must precede end")


@dataclass(frozen=True)
class Rolling:
    length_seconds: float
    stride_seconds: float

    def __post_init__(self):
        if not (self.length_seconds > 0 and self.stride_seconds > 0):
            raise ValueError("rolling length and stride must be positive")


@dataclass(frozen=True)
class Window:
    """Half-open ``[start, end)`` analysis window."""

    start: TimedInstant
    end: TimedInstant
    partial: bool = False

    @property
    def length_seconds(self):
        return (self.end.epoch_ms - self.start.epoch_ms) / 1000.0


@dataclass(frozen=True)
class GlycemicReport:
    window: tuple
    n_samples: int
    wear_time_pct: float
    mean: float
    sd: float
    cv_pct: float
    gmi_pct: float
    tir_pct: float
    tbr_low_pct: float
    tbr_very_low_pct: float
    tar_high_pct: float
    tar_very_high_pct: float

    def to_row(self):
        row = {"window_start": str(self.window[0]), "window_end": str(self.window[1])}
        for name in ("n_samples", *REPORT_METRICS[1:]):
            row[name] = getattr(self, name)
        return row


REPORT_METRICS = (
    "n_samples", "wear_time_pct", "mean", "sd", "cv_pct", "gmi_pct", "tir_pct",
    "tbr_low_pct", "tbr_very_low_pct", "tar_high_pct", "tar_very_high_pct",
)


@dataclass(frozen=True)
class AgpProfile:
    bin_minutes: int
    p5: np.ndarray
    p25: np.ndarray
    p50: np.ndarray
    p75: np.ndarray
    p95: np.ndarray
    counts: np.ndarray
    label: str = ""

    @property
    def n_bins(self):
        return 1440 // self.bin_minutes

    def curves(self):
        return [self.p5, self.p25, self.p50, self.p75, self.p95]


# -- helpers -------------------------------------------------------------


def percentile(sorted_values, q):
    """Linear interpolation between closest ranks on an ascending array."""
    n = len(sorted_values)
    if n == 0:
        return MISSING
    h = (n - 1) * q / 100.0
    lo = int(math.floor(h))
    hi = min(lo + 1, n - 1)
    a, b = sorted_values[lo], sorted_values[hi]
    return float(min(a + (b - a) * (h - lo), b))


def _sorted_arrays(signal):
    sig = signal.sorted()
    return sig.epoch_ms, sig.values, sig


def _median_gap_ms(t):
    if len(t) < 2:
        return None
    d = np.diff(t)
    d = d[d > 0]
    return float(np.median(d)) if len(d) else None


def _window_slice(t, window):
    lo = np.searchsorted(t, window.start.epoch_ms, side="left")
    hi = np.searchsorted(t, window.end.epoch_ms, side="left")
    return lo, hi


def _weights(t_all, lo, hi, window, nominal_ms):
    """Half-open sample-to-next durations (ms), clipped at the window end."""
    t = t_all[lo:hi]
    nxt = np.empty(len(t), dtype=np.float64)
    nxt[:-1] = t[1:]
    nxt[-1] = t[-1] + (nominal_ms or 0)
    nxt = np.minimum(nxt, window.end.epoch_ms)
    return nxt - t


def _fraction(mask, weights):
    if weights is not None:
        total = float(weights.sum())
        if total > 0:
            return 100.0 * float(weights[mask].sum()) / total
    return 100.0 * int(np.count_nonzero(mask)) / len(mask)


# -- windows -------------------------------------------------------------


def _local_midnight(epoch_ms, offset_min):
    off = offset_min * 60_000
    return (epoch_ms + off) // DAY_MS * DAY_MS - off


def slice_windows(record, spec):
    """Windows for ``spec`` over the record's cgm span, in chronological order.

    Day and week boundaries are local midnights in the offset of the first
    cgm sample.  A window is flagged ``partial`` when the data span does
    not cover it (the span runs to the last sample plus one nominal period).
    """
    cgm = record.signals.get("cgm")
    if cgm is None or len(cgm) == 0:
        raise EmptySignal("record has no cgm samples")
    t, _, sig = _sorted_arrays(cgm)
    off = int(sig.offset_minutes[0])
    aware = bool(sig.zone_aware[0])
    first, last = int(t[0]), int(t[-1])
    span_end = last + int(_median_gap_ms(t) or 0)

    def inst(ms):
        return TimedInstant.from_epoch_ms(ms, off, aware)

    def block_windows(length_ms, anchor):
        out = []
        s = anchor
        while s <= last:
            e = s + length_ms
            out.append(Window(inst(s), inst(e), partial=first > s or span_end < e))
            s = e
        return out

    if isinstance(spec, ByDay):
        return block_windows(DAY_MS, _local_midnight(first, off))
    if isinstance(spec, ByWeek):
        return block_windows(7 * DAY_MS, _local_midnight(first, off))
    if isinstance(spec, Custom):
        s, e = spec.start.epoch_ms, spec.end.epoch_ms
        return [Window(spec.start, spec.end, partial=first > s or span_end < e)]
    if isinstance(spec, Rolling):
        length = int(round(spec.length_seconds * 1000))
        stride = int(round(spec.stride_seconds * 1000))
        out = []
        s = first
        while s <= last:
            out.append(Window(inst(s), inst(s + length), partial=span_end < s + length))
            s += stride
        return out
    raise TypeError(f"unknown window spec {spec!r}")


def _as_window(window):
    if isinstance(window, Window):
        return window
    start, end = window
    return Window(start, end)


# -- metrics -------------------------------------------------------------


def time_in_range(cgm, window, lo, hi, weighting="count"):
    """Percent of samples in ``window`` with ``lo <= v <= hi``."""
    if not lo < hi:
        raise ValueError("lo must be below hi")
    window = _as_window(window)
    t, v, _ = _sorted_arrays(cgm)
    i, j = _window_slice(t, window)
    if j <= i:
        raise NoData("no cgm samples in window")
    vals = v[i:j]
    w = _weights(t, i, j, window, _median_gap_ms(t)) if weighting == "duration" else None
    return _fraction((vals >= lo) & (vals <= hi), w)


def _placeholder(window):
    nan = MISSING
    return GlycemicReport((window.start, window.end), 0, 0.0, nan, nan, nan, nan, nan, nan, nan, nan, nan)


def _summary(t, v, window, thresholds, nominal_ms, weighting, gmi):
    i, j = _window_slice(t, window)
    i, j = int(i), int(j)
    n = j - i
    if n == 0:
        return None
    vals = v[i:j]
    mean = math.fsum(vals.tolist()) / n
    if n >= 2:
        sd = float(np.sqrt(np.sum((vals - mean) ** 2) / (n - 1)))
        cv = 100.0 * sd / mean if mean > 0 else MISSING
    else:
        sd = cv = MISSING
    w = _weights(t, i, j, window, nominal_ms) if weighting == "duration" else None
    th = thresholds
    length_ms = window.end.epoch_ms - window.start.epoch_ms
    wear = min(100.0, 100.0 * n * (nominal_ms or 0) / length_ms) if length_ms > 0 else MISSING
    return GlycemicReport(
        window=(window.start, window.end),
        n_samples=int(n),
        wear_time_pct=wear,
        mean=mean,
        sd=sd,
        cv_pct=cv,
        gmi_pct=gmi[0] + gmi[1] * mean,
        tir_pct=_fraction((vals >= th.low) & (vals <= th.high), w),
        tbr_low_pct=_fraction(vals < th.low, w),
        tbr_very_low_pct=_fraction(vals < th.very_low, w),
        tar_high_pct=_fraction(vals > th.high, w),
        tar_very_high_pct=_fraction(vals > th.very_high, w),
    )


def glycemic_summary(cgm, window, thresholds=None, nominal_period_seconds=None,
                     weighting="count", gmi=(GMI_INTERCEPT, GMI_SLOPE)):
    """Metric bundle for the cgm samples inside ``window``.

    ``nominal_period_seconds`` (for wear time) defaults to the median
    positive inter-sample gap of the whole signal.  With fewer than two
    samples SD and CV are ``NaN``.
    """
    window = _as_window(window)
    thresholds = thresholds or RangeThresholds()
    t, v, _ = _sorted_arrays(cgm)
    nominal_ms = nominal_period_seconds * 1000.0 if nominal_period_seconds else _median_gap_ms(t)
    rep = _summary(t, v, window, thresholds, nominal_ms, weighting, gmi)
    if rep is None:
        raise NoData("no cgm samples in window")
    return rep


def outcomes_over_time(record, window_spec, thresholds=None, nominal_period_seconds=None,
                       weighting="count", gmi=(GMI_INTERCEPT, GMI_SLOPE)):
    """One report per window; empty windows yield ``n_samples == 0`` placeholders."""
    windows = slice_windows(record, window_spec)
    thresholds = thresholds or RangeThresholds()
    t, v, _ = _sorted_arrays(record.signals["cgm"])
    nominal_ms = nominal_period_seconds * 1000.0 if nominal_period_seconds else _median_gap_ms(t)
    out = []
    for w in windows:
        rep = _summary(t, v, w, thresholds, nominal_ms, weighting, gmi)
        out.append(rep if rep is not None else _placeholder(w))
    return out


def agp_profile(cgm, window=None, bin_minutes=5, label=""):
    """Time-of-day percentile profile (5/25/50/75/95) of cgm samples in ``window``.

    Samples are binned by their own local wall-clock time.  Empty bins are
    ``NaN``.  ``window=None`` uses every sample.
    """
    if bin_minutes <= 0 or 1440 % bin_minutes:
        raise ValueError(f"bin_minutes must divide 1440, got {bin_minutes}")
    sig = cgm.sorted()
    t, v, off = sig.epoch_ms, sig.values, sig.offset_minutes.astype(np.int64)
    if window is not None:
        window = _as_window(window)
        i, j = _window_slice(t, window)
        t, v, off = t[i:j], v[i:j], off[i:j]
    if len(t) == 0:
        raise NoData("no cgm samples for AGP")
    n_bins = 1440 // bin_minutes
    local = t + off * 60_000
    bins = (local % DAY_MS) // (bin_minutes * 60_000)
    order = np.lexsort((v, bins))
    b_sorted, v_sorted = bins[order], v[order]
    counts = np.bincount(b_sorted, minlength=n_bins)
    starts = np.concatenate(([0], np.cumsum(counts)[:-1]))
    curves = []
    nonempty = counts > 0
    for q in AGP_PERCENTILES:
        h = (counts - 1) * (q / 100.0)
        lo = np.floor(h).astype(np.int64)
        hi = np.minimum(lo + 1, counts - 1)
        out = np.full(n_bins, np.nan)
        a = v_sorted[(starts + lo)[nonempty]]
        b = v_sorted[(starts + hi)[nonempty]]
        frac = (h - lo)[nonempty]
        out[nonempty] = np.minimum(a + (b - a) * frac, b)
        curves.append(out)
    return AgpProfile(bin_minutes, *curves, counts=counts, label=label)


@dataclass(frozen=True)
class MetricAggregate:
    n: int
    mean: float
    median: float
    q1: float
    q3: float

    @property
    def iqr(self):
        return self.q3 - self.q1


def cohort_aggregate(reports, metrics=REPORT_METRICS):
    """Per-metric mean/median/quartiles across subject-level reports.

    ``NaN`` entries are left out of that metric's ``n``.  Values are sorted
    before reduction so results do not depend on input order.
    """
    reports = list(reports)
    if not reports:
        raise EmptyCohort("no reports to aggregate")
    out = {}
    for name in metrics:
        vals = sorted(float(getattr(r, name)) for r in reports if not math.isnan(float(getattr(r, name))))
        if not vals:
            out[name] = MetricAggregate(0, MISSING, MISSING, MISSING, MISSING)
            continue
        out[name] = MetricAggregate(
            len(vals),
            math.fsum(vals) / len(vals),
            percentile(vals, 50),
            percentile(vals, 25),
            percentile(vals, 75),
        )
    return out
