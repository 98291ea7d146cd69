"""Mapping-spec driven conversion of tabular exports, plus a synthetic cohort generator.

A mapping spec says, per target DIAX key, which table/columns to read and
how to bring values into canonical units (``value * scale + offset``, or a
category lookup for ``carb_category``).  Tables are plain CSV with a header
row; every table must carry the spec's subject id column.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import re
from collections import defaultdict
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path

import jsonschema
import numpy as np

from .errors import BadProfile, ColumnMissing, RowError, SpecError, TableError, TimestampError
from .model import CARB_CATEGORIES, REGISTRY, Signal, SignalMetadata, SubjectRecord, is_valid_key
from .timeparse import TimedInstant, days_from_civil, parse_timestamp

log = logging.getLogger(__name__)

__all__ = [
    "Rule",
    "MappingSpec",
    "SourceTable",
    "ConversionLog",
    "SyntheticProfile",
    "MAPPING_SCHEMA",
    "load_mapping_spec",
    "read_table",
    "load_tables",
    "convert_tables",
    "generate_synthetic",
    "builtin_spec",
]

_META_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["unit", "description"],
    "properties": {
        "unit": {"type": "string", "minLength": 1},
        "description": {"type": "string", "minLength": 1},
        "device": {"type": "string"},
        "precision": {"type": "string"},
        "insulin": {"type": "string"},
        "medication": {"type": "string"},
    },
}

MAPPING_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["trial_name", "subject_id_column", "rules"],
    "properties": {
        "trial_name": {"type": "string", "pattern": "^[A-Za-z0-9-]+$"},
        "subject_id_column": {"type": "string", "minLength": 1},
        "description": {"type": "string"},
        "rules": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["target", "source_table", "time_column", "value_column", "unit_in", "metadata"],
                "properties": {
                    "target": {"type": "string", "pattern": "^[a-z][a-z0-9_]*$"},
                    "source_table": {"type": "string", "minLength": 1},
                    "time_column": {"type": "string", "minLength": 1},
                    "time_format": {"type": "string", "minLength": 1},
                    "value_column": {"type": "string", "minLength": 1},
                    "unit_in": {"type": "string", "minLength": 1},
                    "scale": {"type": "number", "not": {"const": 0}},
                    "offset": {"type": "number"},
                    "category_map": {
                        "type": "object",
                        "additionalProperties": {"enum": list(CARB_CATEGORIES)},
                    },
                    "metadata": _META_SCHEMA,
                },
            },
        },
    },
}


@dataclass(frozen=True)
class Rule:
    target: str
    source_table: str
    time_column: str
    value_column: str
    unit_in: str
    metadata: SignalMetadata
    scale: float = 1.0
    offset: float = 0.0
    time_format: str | None = None
    category_map: dict | None = None


@dataclass(frozen=True)
class MappingSpec:
    trial_name: str
    subject_id_column: str
    rules: tuple

    @property
    def targets(self):
        return sorted({r.target for r in self.rules})


def _json_path(error):
    return ".".join(str(p) for p in error.absolute_path)


def load_mapping_spec(document):
    """Parse and fully validate a mapping-spec JSON document."""
    if isinstance(document, (bytes, bytearray)):
        document = document.decode("utf-8")
    try:
        doc = json.loads(document)
    except json.JSONDecodeError as exc:
        raise SpecError("", f"invalid JSON: {exc}") from None
    validator = jsonschema.Draft202012Validator(MAPPING_SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        raise SpecError(_json_path(e), e.message)

    rules = []
    seen_meta = {}
    for i, r in enumerate(doc["rules"]):
        path = f"rules.{i}"
        target = r["target"]
        if not is_valid_key(target):
            raise SpecError(f"{path}.target", f"{target!r} is not a usable signal key")
        meta = SignalMetadata(**r["metadata"])
        spec = REGISTRY.get(target)
        if spec is not None and spec.unit is not None and meta.unit != spec.unit:
            raise SpecError(f"{path}.metadata.unit", f"{target} must be stamped {spec.unit!r}, got {meta.unit!r}")
        categorical = target == "carb_category" or (spec is None and meta.precision == "categorical")
        if "category_map" in r and not categorical:
            raise SpecError(f"{path}.category_map", "only categorical targets take a category_map")
        if categorical and ("scale" in r or "offset" in r):
            raise SpecError(path, "categorical targets take no scale/offset")
        if target in seen_meta and seen_meta[target] != meta:
            raise SpecError(f"{path}.metadata", f"conflicts with an earlier rule for {target}")
        seen_meta[target] = meta
        rules.append(Rule(
            target=target,
            source_table=r["source_table"],
            time_column=r["time_column"],
            value_column=r["value_column"],
            unit_in=r["unit_in"],
            metadata=meta,
            scale=float(r.get("scale", 1.0)),
            offset=float(r.get("offset", 0.0)),
            time_format=r.get("time_format"),
            category_map=dict(r["category_map"]) if "category_map" in r else None,
        ))
    return MappingSpec(doc["trial_name"], doc["subject_id_column"], tuple(rules))


def builtin_spec(name):
    """Load one of the shipped example specs (``"babelbetes"``, ``"generic_trial"``)."""
    path = Path(__file__).parent / "specs" / f"{name}.json"
    if not path.is_file():
        raise SpecError("", f"no shipped spec named {name!r}")
    return load_mapping_spec(path.read_text(encoding="utf-8"))


# -- tables ------------------------------------------------------------------


@dataclass(frozen=True)
class SourceTable:
    name: str
    header: tuple
    rows: list = field(default_factory=list)

    def __post_init__(self):
        width = len(self.header)
        for i, row in enumerate(self.rows, 1):
            if len(row) != width:
                raise TableError(f"{self.name} row {i}: {len(row)} cells, header has {width}")

    def column(self, name):
        try:
            return self.header.index(name)
        except ValueError:
            raise ColumnMissing(f"table {self.name!r} has no column {name!r}") from None


def read_table(source, name=None):
    """Read an RFC-4180 CSV file (path or text stream) into a :class:`SourceTable`."""
    if isinstance(source, (str, Path)):
        path = Path(source)
        with open(path, newline="", encoding="utf-8-sig") as fh:
            return read_table(fh, name or path.stem)
    reader = csv.reader(source)
    try:
        header = tuple(next(reader))
    except StopIteration:
        raise TableError(f"table {name!r} is empty") from None
    rows = [tuple(r) for r in reader if r]
    return SourceTable(name or "table", header, rows)


def load_tables(directory):
    return [read_table(p) for p in sorted(Path(directory).glob("*.csv"))]


# -- conversion --------------------------------------------------------------

_DECIMAL_RE = re.compile(r"[+-]?(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?")


def _parse_decimal(cell):
    text = cell.strip()
    if not _DECIMAL_RE.fullmatch(text):
        raise ValueError(f"not a '.'-decimal number: {cell!r}")
    return float(text)


def _parse_time(cell, rule, fallback):
    text = cell.strip()
    if rule.time_format is None:
        return parse_timestamp(text, fallback)
    try:
        dt = datetime.strptime(text, rule.time_format)
    except ValueError as exc:
        raise TimestampError(str(exc)) from None
    return TimedInstant.from_datetime(dt, fallback)


@dataclass
class ConversionLog:
    warnings: list = field(default_factory=list)
    skipped: list = field(default_factory=list)
    blank: int = 0

    def warn(self, message):
        self.warnings.append(message)
        log.warning(message)


def convert_tables(tables, spec, fallback_offset_minutes=0, skip_bad_rows=False, log=None):
    """Convert source tables into one :class:`SubjectRecord` per subject.

    Rows with an empty value cell carry no sample and are only counted
    (``log.blank``).  Unparseable cells and unmapped categories are row
    errors: with the default fail policy all of them are collected and
    raised together as :class:`RowError`; with ``skip_bad_rows`` they are
    dropped and listed in ``log.skipped``.
    """
    log = log if log is not None else ConversionLog()
    by_name = {t.name: t for t in tables}
    if "cgm" not in spec.targets:
        log.warn("NoCgmRule: mapping spec has no cgm rule; records will fail validation")

    # subject -> target -> list of (instant, value)
    samples = defaultdict(lambda: defaultdict(list))
    errors = []
    for rule in spec.rules:
        table = by_name.get(rule.source_table)
        if table is None:
            raise ColumnMissing(f"no source table named {rule.source_table!r}")
        sid_col = table.column(spec.subject_id_column)
        t_col = table.column(rule.time_column)
        v_col = table.column(rule.value_column)
        categorical = rule.category_map is not None or rule.target == "carb_category"
        for rownum, row in enumerate(table.rows, 1):
            cell = row[v_col]
            if not cell.strip():
                log.blank += 1
                continue
            try:
                sid = row[sid_col].strip()
                if not sid:
                    raise ValueError("empty subject id")
                t = _parse_time(row[t_col], rule, fallback_offset_minutes)
                if categorical:
                    key = cell.strip()
                    if rule.category_map is not None:
                        if key not in rule.category_map:
                            raise ValueError(f"unmapped category {key!r}")
                        value = rule.category_map[key]
                    elif key in CARB_CATEGORIES:
                        value = key
                    else:
                        raise ValueError(f"unknown category {key!r}")
                else:
                    value = _parse_decimal(cell) * rule.scale + rule.offset
                    if not math.isfinite(value):
                        raise ValueError(f"non-finite value from {cell!r}")
            except (ValueError, TimestampError) as exc:
                errors.append((table.name, rownum, str(exc)))
                continue
            samples[sid][rule.target].append((t, value))

    if errors:
        if not skip_bad_rows:
            raise RowError(errors)
        log.skipped.extend(errors)
        log.warn(f"skipped {len(errors)} bad row(s)")

    meta_by_target = {r.target: r.metadata for r in spec.rules}
    records = []
    for sid in sorted(samples):
        signals, metadata = {}, {}
        for target in sorted(samples[sid]):
            pairs = samples[sid][target]
            categorical = target == "carb_category" or any(
                r.category_map is not None for r in spec.rules if r.target == target
            )
            sig = Signal.from_instants([p[0] for p in pairs], [p[1] for p in pairs], categorical)
            signals[target] = sig.sorted()
            metadata[target] = meta_by_target[target]
        if "cgm" not in signals and "cgm" in spec.targets:
            log.warn(f"subject {sid} has no cgm rows")
        records.append(SubjectRecord(f"{spec.trial_name}-{sid}", signals, metadata))
    return records


# -- synthetic generator -----------------------------------------------------


@dataclass(frozen=True)
class SyntheticProfile:
    basal_u_per_h: float = 0.9
    meals_per_day: int = 3
    cgm_mean: float = 150.0
    cgm_amplitude: float = 40.0


_SYNTH_META = {
    "cgm": SignalMetadata("mg/dL", "Continuous glucose monitor readings", device="synthetic CGM"),
    "basal_rate": SignalMetadata("U/h", "Pump basal rate", device="synthetic pump", insulin="insulin aspart"),
    "bolus": SignalMetadata("U", "Meal boluses", device="synthetic pump", insulin="insulin aspart"),
    "carbs": SignalMetadata("g", "User announced carbohydrate intake"),
    "carb_category": SignalMetadata("category", "Announced meal type", precision="categorical"),
}

_DEFAULT_START = TimedInstant(days_from_civil(2021, 3, 1) * 86400)


def generate_synthetic(seed, days, step_minutes=5, profile=None, start=None, subject_id=None):
    """Deterministic synthetic subject: cgm, basal_rate, bolus, carbs, carb_category.

    CGM is a daily sinusoid plus post-meal excursions and seeded noise,
    rounded to whole mg/dL and clamped to [40, 400].  Basal changes four
    times a day.  Meals are jittered around evenly spaced times; boluses
    use a 10 g/U ratio rounded to 0.05 U.
    """
    profile = profile or SyntheticProfile()
    if not isinstance(days, int) or days < 1:
        raise BadProfile(f"days must be a positive integer, got {days!r}")
    if step_minutes not in (1, 5, 15):
        raise BadProfile(f"step_minutes must be 1, 5 or 15, got {step_minutes!r}")
    for name in ("basal_u_per_h", "meals_per_day", "cgm_mean", "cgm_amplitude"):
        if not getattr(profile, name) > 0:
            raise BadProfile(f"{name} must be positive")
    if int(profile.meals_per_day) != profile.meals_per_day:
        raise BadProfile("meals_per_day must be an integer")
    start = start or _DEFAULT_START
    rng = np.random.default_rng(seed)
    t0 = start.epoch_ms

    n = days * 1440 // step_minutes
    t_min = np.arange(n, dtype=np.int64) * step_minutes
    phase = rng.uniform(0, 2 * np.pi)
    glucose = profile.cgm_mean + profile.cgm_amplitude * np.sin(2 * np.pi * t_min / 1440.0 + phase)

    meals = int(profile.meals_per_day)
    slot = 1440 // meals
    meal_t, carbs = [], []
    for d in range(days):
        for k in range(meals):
            center = d * 1440 + k * slot + slot // 2
            meal_t.append(center + int(rng.integers(-45, 46)))
            carbs.append(float(rng.integers(15, 91)))
    meal_t = np.array(meal_t, dtype=np.int64)
    carbs = np.array(carbs)
    horizon = 480 // step_minutes
    for mt, c in zip(meal_t.tolist(), carbs.tolist()):
        i0 = -(-mt // step_minutes)
        dt = t_min[i0:i0 + horizon] - mt
        glucose[i0:i0 + horizon] += 0.9 * c * (dt / 60.0) * np.exp(1 - dt / 60.0)
    glucose += rng.normal(0, 8, n)
    cgm = np.clip(np.round(glucose), 40, 400)

    seg_t = np.arange(days * 4, dtype=np.int64) * 360
    basal = np.round(profile.basal_u_per_h * rng.uniform(0.7, 1.3, len(seg_t)), 2)
    basal = np.maximum(basal, 0.05)
    bolus = np.maximum(np.round(carbs / 10.0 / 0.05) * 0.05, 0.05)
    bolus = np.round(bolus, 2)
    cats = np.array(["Less", "Typical", "More"])[np.digitize(carbs, [35, 70])]

    def sig(minutes, values, categorical=False):
        ms = t0 + minutes * 60_000
        k = len(ms)
        return Signal(ms, np.full(k, start.offset_minutes), np.full(k, start.zone_aware), values, categorical)

    signals = {
        "cgm": sig(t_min, cgm),
        "basal_rate": sig(seg_t, basal),
        "bolus": sig(meal_t, bolus),
        "carbs": sig(meal_t, carbs),
        "carb_category": sig(meal_t, cats.tolist(), categorical=True),
    }
    signals = {k: s.sorted() for k, s in signals.items()}
    uid = subject_id or f"SYNTH-{seed:04d}"
    return SubjectRecord(uid, signals, {k: _SYNTH_META[k] for k in signals})
