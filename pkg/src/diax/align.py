"""Resampling of DIAX signals onto uniform time grids.

Grids are half-open: points ``start + k*step`` strictly before ``end``, and
bin ``k`` covers ``[point_k, min(point_k + step, end))``.  Missing values
are ``NaN`` in the numeric columns (rendered as empty CSV cells).

Per-signal policies:

* :class:`Linear` interpolates between bracketing samples no further apart
  than ``max_gap_seconds``; optionally fills the grid edges with the
  nearest sample.
* :class:`HoldUntilNext` carries the last value forward (basal-rate style).
* :class:`SumIntoBin` sums impulse samples (bolus, carbs) per bin.
* :class:`IntegrateRate` integrates a piecewise-constant U/h rate per bin.
* :class:`PreserveMissing` wraps Linear or Hold and blanks points whose
  nearest earlier sample is older than ``max_gap_seconds``.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BadRange, NegativeRate, PolicyMismatch, UnknownKey
from .timeparse import TimedInstant, format_many

log = logging.getLogger(__name__)

__all__ = [
    "MISSING",
    "Grid",
    "Linear",
    "HoldUntilNext",
    "SumIntoBin",
    "IntegrateRate",
    "PreserveMissing",
    "AlignedFrame",
    "PRESETS",
    "make_grid",
    "grid_for",
    "resample_signal",
    "integrate_basal",
    "default_policy",
    "align_subject",
    "align_preset",
]

MISSING = math.nan
HOUR_MS = 3_600_000


@dataclass(frozen=True)
class Grid:
    start: TimedInstant
    end: TimedInstant
    step_seconds: int

    @property
    def step_ms(self):
        return self.step_seconds * 1000

    def __len__(self):
        span = self.end.epoch_ms - self.start.epoch_ms
        return -(-span // self.step_ms)

    @property
    def points_ms(self):
        return self.start.epoch_ms + np.arange(len(self), dtype=np.int64) * self.step_ms

    @property
    def edges_ms(self):
        """Bin edges, ``len(self) + 1`` of them; the last one is ``end``."""
        pts = self.points_ms
        return np.append(pts, self.end.epoch_ms)

    @property
    def points(self):
        return [
            TimedInstant.from_epoch_ms(p, self.start.offset_minutes, self.start.zone_aware)
            for p in self.points_ms.tolist()
        ]


def make_grid(start, end, step_seconds):
    if step_seconds <= 0 or int(step_seconds) != step_seconds:
        raise BadRange(f"step must be a positive whole number of seconds, got {step_seconds!r}")
    if not start < end:
        raise BadRange(f"grid start {start} is not before end {end}")
    return Grid(start, end, int(step_seconds))


def grid_for(signal, step_seconds):
    """Grid covering ``signal``'s span, snapped outward to multiples of the step in local time."""
    if len(signal) == 0:
        raise BadRange("cannot derive a grid from an empty signal")
    step_ms = int(step_seconds) * 1000
    off = int(signal.offset_minutes[0]) * 60_000
    aware = bool(signal.zone_aware[0])
    lo = (int(signal.epoch_ms.min()) + off) // step_ms * step_ms - off
    hi = (int(signal.epoch_ms.max()) + off) // step_ms * step_ms - off + step_ms
    return make_grid(
        TimedInstant.from_epoch_ms(lo, off // 60_000, aware),
        TimedInstant.from_epoch_ms(hi, off // 60_000, aware),
        step_seconds,
    )


@dataclass(frozen=True)
class Linear:
    max_gap_seconds: float = 1800.0
    fill_edges: bool = False

    def __post_init__(self):
        if not self.max_gap_seconds > 0:
            raise ValueError("max_gap_seconds must be positive")


@dataclass(frozen=True)
class HoldUntilNext:
    pass


@dataclass(frozen=True)
class SumIntoBin:
    pass


@dataclass(frozen=True)
class IntegrateRate:
    pass


@dataclass(frozen=True)
class PreserveMissing:
    inner: object = field(default_factory=Linear)
    max_gap_seconds: float = 1800.0

    def __post_init__(self):
        if not isinstance(self.inner, (Linear, HoldUntilNext)):
            raise ValueError("PreserveMissing wraps Linear or HoldUntilNext only")
        if not self.max_gap_seconds > 0:
            raise ValueError("max_gap_seconds must be positive")


def _check_numeric(signal, policy):
    if signal.categorical:
        raise PolicyMismatch(f"{type(policy).__name__} cannot resample a categorical signal")


def _linear(t, v, pts, max_gap_ms, fill_edges):
    out = np.full(len(pts), np.nan)
    if len(t) == 0:
        return out
    right = np.searchsorted(t, pts, side="left")  # first sample >= p
    left = np.searchsorted(t, pts, side="right") - 1  # last sample <= p
    hit = (left >= 0) & (t[np.clip(left, 0, None)] == pts)
    out[hit] = v[left[hit]]
    inner = ~hit & (left >= 0) & (right < len(t))
    li, ri = left[inner], right[inner]
    gap = t[ri] - t[li]
    ok = gap <= max_gap_ms
    frac = (pts[inner][ok] - t[li[ok]]) / gap[ok]
    idx = np.flatnonzero(inner)[ok]
    out[idx] = v[li[ok]] + (v[ri[ok]] - v[li[ok]]) * frac
    if fill_edges:
        out[(left < 0)] = v[0]
        out[(right >= len(t)) & ~hit] = v[-1]
    return out


def _hold(t, v, pts):
    out = np.full(len(pts), np.nan)
    if len(t) == 0:
        return out
    left = np.searchsorted(t, pts, side="right") - 1
    have = left >= 0
    out[have] = v[left[have]]
    return out


def _sum_into_bins(t, v, grid):
    edges = grid.edges_ms
    inside = (t >= edges[0]) & (t < edges[-1])
    k = (t[inside] - edges[0]) // grid.step_ms
    return np.bincount(k, weights=v[inside], minlength=len(grid)).astype(np.float64)


def integrate_basal(basal_rate, grid):
    """Insulin (U) delivered per bin by a piecewise-constant U/h rate.

    The rate is zero before the first sample and the last rate persists to
    the grid end.  Bin totals telescope, so their sum is the integral over
    ``[grid.start, grid.end)``.
    """
    _check_numeric(basal_rate, IntegrateRate())
    sig = basal_rate.sorted()
    t, r = sig.epoch_ms, sig.values
    if len(r) and np.any(r < 0):
        raise NegativeRate(f"negative basal rate at sample {int(np.flatnonzero(r < 0)[0])}")
    edges = grid.edges_ms
    if len(t) == 0:
        return np.zeros(len(grid))
    # cumulative U at each sample time; duplicate stamps give zero-width steps
    cum = np.concatenate(([0.0], np.cumsum(r[:-1] * (np.diff(t) / HOUR_MS))))
    i = np.searchsorted(t, edges, side="right") - 1
    have = i >= 0
    ic = np.clip(i, 0, None)
    at_edges = np.where(have, cum[ic] + r[ic] * ((edges - t[ic]) / HOUR_MS), 0.0)
    return np.diff(at_edges)


def resample_signal(signal, grid, policy):
    """Resample one numeric signal onto ``grid``; ``NaN`` marks MISSING."""
    _check_numeric(signal, policy)
    sig = signal.sorted()
    t, v = sig.epoch_ms, sig.values
    pts = grid.points_ms
    if isinstance(policy, Linear):
        return _linear(t, v, pts, policy.max_gap_seconds * 1000, policy.fill_edges)
    if isinstance(policy, HoldUntilNext):
        return _hold(t, v, pts)
    if isinstance(policy, SumIntoBin):
        return _sum_into_bins(t, v, grid)
    if isinstance(policy, IntegrateRate):
        return integrate_basal(sig, grid)
    if isinstance(policy, PreserveMissing):
        out = resample_signal(sig, grid, policy.inner)
        if len(t):
            left = np.searchsorted(t, pts, side="right") - 1
            stale = (left < 0) | (pts - t[np.clip(left, 0, None)] > policy.max_gap_seconds * 1000)
            out[stale] = np.nan
        return out
    raise PolicyMismatch(f"unknown policy {policy!r}")


_DEFAULTS = {
    "cgm": Linear(1800.0),
    "smbg": Linear(1800.0),
    "heart_rate": Linear(1800.0),
    "basal_rate": IntegrateRate(),
    "bolus": SumIntoBin(),
    "basal_inj": SumIntoBin(),
    "carbs": SumIntoBin(),
    "steps": SumIntoBin(),
    "hba1c": HoldUntilNext(),
    "height": HoldUntilNext(),
    "weight": HoldUntilNext(),
}


def default_policy(key):
    return _DEFAULTS.get(key)


@dataclass(frozen=True)
class Preset:
    step_seconds: int
    glucose_policy: object


_GLUCOSE_KEYS = ("cgm", "smbg", "heart_rate")

PRESETS = {
    # gap-free: interpolate across any gap, then edge-fill
    "replay": Preset(300, None),
    "advisor": Preset(900, PreserveMissing(Linear(1800.0), 1800.0)),
}


@dataclass
class AlignedFrame:
    grid: Grid
    columns: dict
    events: dict = field(default_factory=dict)

    @property
    def keys(self):
        return list(self.columns)

    def missing_count(self, key):
        return int(np.isnan(self.columns[key]).sum())

    def to_csv(self):
        """Frame as CSV text: timestamp column, one column per key, MISSING as empty."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        keys = list(self.columns)
        w.writerow(["time", *keys])
        pts = self.grid.points_ms
        stamps = format_many(
            pts,
            np.full(len(pts), self.grid.start.offset_minutes),
            np.full(len(pts), self.grid.start.zone_aware),
        )
        cols = [self.columns[k].tolist() for k in keys]
        for i, s in enumerate(stamps):
            w.writerow([s, *("" if math.isnan(c[i]) else repr(c[i]) for c in cols)])
        return buf.getvalue()


def _policy_for(key, policies, default_policies, preset, grid):
    if policies and key in policies:
        return policies[key]
    if preset is not None and key in _GLUCOSE_KEYS:
        p = PRESETS[preset]
        if p.glucose_policy is None:
            span = grid.end.epoch_ms - grid.start.epoch_ms
            return Linear(max(span / 1000.0, 1.0), fill_edges=True)
        return p.glucose_policy
    if default_policies:
        return default_policy(key)
    return None


def align_subject(record, grid, policies=None, default_policies=True, preset=None, strict=True):
    """Resample a record's numeric signals onto ``grid``.

    With explicit ``policies`` only those keys become columns; otherwise
    every numeric signal does.  Categorical signals are attached as event
    lists ``[(TimedInstant, value), ...]`` restricted to the grid range.
    """
    if preset is not None and preset not in PRESETS:
        raise UnknownKey(f"unknown preset {preset!r}; expected one of {sorted(PRESETS)}")
    if policies:
        keys = list(policies)
    else:
        keys = sorted(k for k, s in record.signals.items() if not s.categorical)
    columns = {}
    for key in keys:
        sig = record.signals.get(key)
        if sig is None:
            if strict:
                raise UnknownKey(f"record has no signal {key!r}")
            log.warning("skipping absent signal %s", key)
            continue
        policy = _policy_for(key, policies, default_policies, preset, grid)
        if policy is None:
            if strict:
                raise PolicyMismatch(f"no policy for {key!r}; pass one explicitly")
            log.warning("skipping %s: no policy", key)
            continue
        columns[key] = resample_signal(sig, grid, policy)
    events = {}
    lo, hi = grid.start.epoch_ms, grid.end.epoch_ms
    for key in sorted(record.signals):
        sig = record.signals[key]
        if sig.categorical:
            sig = sig.sorted()
            events[key] = [(t, v) for t, v in zip(sig.times, sig.values.tolist()) if lo <= t.epoch_ms < hi]
    return AlignedFrame(grid, columns, events)


def align_preset(record, preset, start=None, end=None, strict=True):
    """Align with a named preset on its native step; the grid defaults to the cgm span."""
    if preset not in PRESETS:
        raise UnknownKey(f"unknown preset {preset!r}; expected one of {sorted(PRESETS)}")
    step = PRESETS[preset].step_seconds
    if start is None or end is None:
        auto = grid_for(record.signals["cgm"], step)
        start = start or auto.start
        end = end or auto.end
    grid = make_grid(start, end, step)
    return align_subject(record, grid, preset=preset, strict=strict)
