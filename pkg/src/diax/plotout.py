"""Standalone, byte-deterministic SVG figures: AGP (single or compared) and outcomes over time.

No plotting library is involved; coordinates are rounded to two decimals
so the same input renders to the same bytes everywhere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from xml.sax.saxutils import escape, quoteattr

import numpy as np

from .errors import BinMismatch, EmptyProfile, EmptySeries, UnknownMetric
from .metrics import REPORT_METRICS
from .timeparse import civil_from_days

__all__ = ["PlotStyle", "METRIC_ALIASES", "METRIC_UNITS", "render_agp", "render_outcomes", "resolve_metric"]

METRIC_ALIASES = {
    "tir": "tir_pct",
    "tbr": "tbr_low_pct",
    "tbr_low": "tbr_low_pct",
    "tbr_very_low": "tbr_very_low_pct",
    "tar": "tar_high_pct",
    "tar_high": "tar_high_pct",
    "tar_very_high": "tar_very_high_pct",
    "cv": "cv_pct",
    "gmi": "gmi_pct",
    "wear": "wear_time_pct",
    "wear_time": "wear_time_pct",
}

METRIC_UNITS = {
    "n_samples": "samples",
    "mean": "mg/dL",
    "sd": "mg/dL",
}

_PROFILE_COLORS = (
    {"median": "#1f4e79", "inner": "#4a86c5", "outer": "#a9c8e8"},
    {"median": "#8c2d04", "inner": "#e6550d", "outer": "#fdbe85"},
)
_SERIES_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b")


@dataclass(frozen=True)
class PlotStyle:
    width: int = 800
    height: int = 400
    target_lo: float = 70.0
    target_hi: float = 180.0
    y_max: float = 400.0
    labels: tuple = ()
    profile_colors: tuple = _PROFILE_COLORS
    series_colors: tuple = _SERIES_COLORS
    margin: tuple = (30, 30, 45, 60)  # top, right, bottom, left

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError("plot dimensions must be positive")
        if not self.target_lo < self.target_hi:
            raise ValueError("target band lo must be below hi")

    @property
    def plot_box(self):
        top, right, bottom, left = self.margin
        return left, top, self.width - left - right, self.height - top - bottom


def _n(x):
    s = f"{x:.2f}"
    return "0.00" if s == "-0.00" else s


def _runs(mask):
    """Start/stop index pairs of consecutive True runs."""
    runs, start = [], None
    for i, m in enumerate(mask.tolist()):
        if m and start is None:
            start = i
        elif not m and start is not None:
            runs.append((start, i))
            start = None
    if start is not None:
        runs.append((start, len(mask)))
    return runs


class _Svg:
    def __init__(self, style):
        self.style = style
        self.parts = [
            '<?xml version="1.0" encoding="UTF-8"?>',
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{style.width}" height="{style.height}" '
            f'viewBox="0 0 {style.width} {style.height}" font-family="sans-serif" font-size="11">',
            f'<rect class="background" x="0" y="0" width="{style.width}" height="{style.height}" fill="#ffffff"/>',
        ]

    def add(self, line):
        self.parts.append(line)

    def text(self, x, y, s, anchor="middle", cls="label"):
        self.add(f'<text class="{cls}" x="{_n(x)}" y="{_n(y)}" text-anchor="{anchor}">{escape(s)}</text>')

    def finish(self):
        self.parts.append("</svg>")
        return ("\n".join(self.parts) + "\n").encode("utf-8")


def _axes(svg, y_ticks, y_of, y_label):
    x0, y0, w, h = svg.style.plot_box
    svg.add('<g class="axes" stroke="#444444" stroke-width="1">')
    svg.add(f'<line x1="{_n(x0)}" y1="{_n(y0 + h)}" x2="{_n(x0 + w)}" y2="{_n(y0 + h)}"/>')
    svg.add(f'<line x1="{_n(x0)}" y1="{_n(y0)}" x2="{_n(x0)}" y2="{_n(y0 + h)}"/>')
    for v in y_ticks:
        y = y_of(v)
        svg.add(f'<line x1="{_n(x0 - 4)}" y1="{_n(y)}" x2="{_n(x0)}" y2="{_n(y)}"/>')
    svg.add("</g>")
    svg.add('<g class="ticks" fill="#222222">')
    for v in y_ticks:
        svg.text(x0 - 7, y_of(v) + 4, f"{v:g}", anchor="end")
    svg.text(14, y0 + h / 2, y_label, anchor="middle", cls="axis-title")
    svg.add("</g>")


def _legend(svg, entries):
    """``entries``: (label, color) pairs, drawn as swatches in the top-right corner."""
    x0, y0, w, _ = svg.style.plot_box
    x = x0 + w - 150
    svg.add('<g class="legend">')
    for i, (label, color) in enumerate(entries):
        y = y0 + 6 + 16 * i
        svg.add(f'<rect x="{_n(x)}" y="{_n(y)}" width="12" height="10" fill="{color}"/>')
        svg.text(x + 18, y + 9, label, anchor="start", cls="legend-label")
    svg.add("</g>")


def render_agp(profiles, style=None):
    """AGP figure for one profile, or two overlaid for comparison (with legend)."""
    style = style or PlotStyle()
    profiles = list(profiles) if isinstance(profiles, (list, tuple)) else [profiles]
    if not 1 <= len(profiles) <= 2:
        raise ValueError("render_agp takes one or two profiles")
    bins = {p.bin_minutes for p in profiles}
    if len(bins) != 1:
        raise BinMismatch(f"profiles use different bin widths: {sorted(bins)}")
    for p in profiles:
        if not np.any(p.counts > 0):
            raise EmptyProfile("profile has no samples")

    x0, y0, w, h = style.plot_box
    ymax = style.y_max

    def y_of(v):
        return y0 + h - h * min(max(v, 0.0), ymax) / ymax

    bin_minutes = profiles[0].bin_minutes
    n_bins = 1440 // bin_minutes
    xs = [x0 + w * (k + 0.5) / n_bins for k in range(n_bins)]

    svg = _Svg(style)
    ticks = sorted({0, 54, style.target_lo, style.target_hi, 250, ymax})
    _axes(svg, [t for t in ticks if t <= ymax], y_of, "glucose (mg/dL)")
    svg.add('<g class="ticks" fill="#222222">')
    for hour in range(0, 25, 3):
        svg.text(x0 + w * hour / 24, y0 + h + 16, f"{hour:02d}:00")
    svg.add("</g>")
    svg.add('<g class="target" stroke="#2e7d32" stroke-width="1" stroke-dasharray="4 3">')
    for v in (style.target_lo, style.target_hi):
        svg.add(f'<line x1="{_n(x0)}" y1="{_n(y_of(v))}" x2="{_n(x0 + w)}" y2="{_n(y_of(v))}"/>')
    svg.add("</g>")

    opacity = "0.55" if len(profiles) == 2 else "1"
    for i, p in enumerate(profiles):
        colors = style.profile_colors[i % len(style.profile_colors)]
        label = style.labels[i] if i < len(style.labels) else (p.label or f"profile {i + 1}")
        ok = ~np.isnan(p.p50)
        runs = _runs(ok)
        svg.add(f'<g class="profile" data-label={quoteattr(label)}>')
        for cls, lo, hi in (("band-outer", p.p5, p.p95), ("band-inner", p.p25, p.p75)):
            d = []
            for a, b in runs:
                upper = [f"{_n(xs[k])},{_n(y_of(hi[k]))}" for k in range(a, b)]
                lower = [f"{_n(xs[k])},{_n(y_of(lo[k]))}" for k in range(b - 1, a - 1, -1)]
                d.append("M" + " L".join(upper + lower) + " Z")
            fill = colors["outer" if cls == "band-outer" else "inner"]
            svg.add(f'<path class="{cls}" d="{" ".join(d)}" fill="{fill}" fill-opacity="{opacity}" stroke="none"/>')
        for a, b in runs:
            pts = " ".join(f"{_n(xs[k])},{_n(y_of(p.p50[k]))}" for k in range(a, b))
            svg.add(f'<polyline class="median" points="{pts}" fill="none" stroke="{colors["median"]}" stroke-width="2"/>')
        svg.add("</g>")

    if len(profiles) == 2:
        entries = []
        for i, p in enumerate(profiles):
            label = style.labels[i] if i < len(style.labels) else (p.label or f"profile {i + 1}")
            entries.append((label, style.profile_colors[i % len(style.profile_colors)]["median"]))
        _legend(svg, entries)
    return svg.finish()


def resolve_metric(name):
    full = METRIC_ALIASES.get(name, name)
    if full not in REPORT_METRICS:
        raise UnknownMetric(f"unknown metric {name!r}")
    return full


def _unit(metric):
    return METRIC_UNITS.get(metric, "%")


def _nice_ceil(v):
    if not v > 0:
        return 1.0
    mag = 10 ** math.floor(math.log10(v))
    for m in (1, 2, 2.5, 5, 10):
        if v <= m * mag:
            return m * mag
    return 10 * mag


def _date_label(instant):
    days = instant.local_ms // 86_400_000
    y, m, d = civil_from_days(days)
    return f"{m:02d}-{d:02d}"


def render_outcomes(series, metrics=("tir_pct",), style=None):
    """One polyline per selected metric against window start; placeholders break lines.

    Metrics in ``%`` share a fixed 0-100 axis; other units get an axis from
    zero to a rounded-up maximum.  At most two distinct units per figure
    (left and right axes).
    """
    style = style or PlotStyle()
    series = list(series)
    if not series:
        raise EmptySeries("no reports to plot")
    metrics = [resolve_metric(m) for m in metrics]
    if not metrics:
        raise UnknownMetric("no metrics selected")
    units = []
    for m in metrics:
        if _unit(m) not in units:
            units.append(_unit(m))
    if len(units) > 2:
        raise UnknownMetric(f"at most two units per figure, got {units}")

    def axis_max(unit):
        if unit == "%":
            return 100.0
        vals = [getattr(r, m) for r in series for m in metrics if _unit(m) == unit]
        vals = [float(v) for v in vals if not math.isnan(float(v))]
        return _nice_ceil(max(vals) if vals else 1.0)

    maxima = {u: axis_max(u) for u in units}
    x0, y0, w, h = style.plot_box
    n = len(series)
    xs = [x0 + w * (i + 0.5) / n for i in range(n)]

    def y_of(v, unit):
        top = maxima[unit]
        return y0 + h - h * min(max(v, 0.0), top) / top

    svg = _Svg(style)
    first = units[0]
    _axes(svg, [maxima[first] * k / 5 for k in range(6)], lambda v: y_of(v, first), first)
    if len(units) == 2:
        second = units[1]
        svg.add('<g class="axes-right" stroke="#444444" stroke-width="1">')
        svg.add(f'<line x1="{_n(x0 + w)}" y1="{_n(y0)}" x2="{_n(x0 + w)}" y2="{_n(y0 + h)}"/>')
        svg.add("</g>")
        svg.add('<g class="ticks" fill="#222222">')
        for k in range(6):
            v = maxima[second] * k / 5
            svg.text(x0 + w + 4, y_of(v, second) + 4, f"{v:g}", anchor="start")
        svg.add("</g>")
    every = max(1, math.ceil(n / 10))
    svg.add('<g class="ticks" fill="#222222">')
    for i in range(0, n, every):
        svg.text(xs[i], y0 + h + 16, _date_label(series[i].window[0]))
    svg.add("</g>")

    entries = []
    for j, m in enumerate(metrics):
        color = style.series_colors[j % len(style.series_colors)]
        entries.append((m, color))
        vals = np.array([float(getattr(r, m)) for r in series])
        ok = ~np.isnan(vals) & np.array([r.n_samples > 0 for r in series])
        svg.add(f'<g class="series" data-metric="{m}">')
        for a, b in _runs(ok):
            pts = " ".join(f"{_n(xs[k])},{_n(y_of(vals[k], _unit(m)))}" for k in range(a, b))
            svg.add(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="2"/>')
        svg.add("</g>")
    _legend(svg, entries)
    return svg.finish()
