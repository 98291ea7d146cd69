"""DIAX domain types and the canonical JSON encoding.

A subject file is one JSON object: ``unique_id``, one ``{"time": [...],
"value": [...]}`` object per signal key, and a ``metadata`` object keyed by
signal name.  :func:`write_subject` emits a canonical form (sorted keys,
time-sorted samples, 2-space indent) that :func:`read_subject` restores
exactly.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BadComponent,
    BadFilename,
    InvariantViolation,
    MalformedDocument,
    SchemaViolation,
)
from .timeparse import TimedInstant, format_many, parse_many

__all__ = [
    "KeySpec",
    "REGISTRY",
    "CARB_CATEGORIES",
    "Signal",
    "SignalMetadata",
    "SubjectRecord",
    "is_valid_key",
    "is_categorical",
    "check_record",
    "read_subject",
    "write_subject",
    "load_subject",
    "save_subject",
    "parse_subject_filename",
    "format_subject_filename",
]


@dataclass(frozen=True)
class KeySpec:
    unit: str | None
    categorical: bool
    description: str


REGISTRY = {
    "cgm": KeySpec("mg/dL", False, "CGM values"),
    "bolus": KeySpec("U", False, "Insulin boluses (meal or correction)"),
    "basal_rate": KeySpec("U/h", False, "Basal insulin delivery rate"),
    "basal_inj": KeySpec("U", False, "Basal injection (for MDI)"),
    "carbs": KeySpec("g", False, "Carbohydrate intake"),
    # Table unit is a free-text note, so any non-empty unit is accepted.
    "carb_category": KeySpec(None, True, "Announced type of meal"),
    "smbg": KeySpec("mg/dL", False, "Self-monitored blood glucose measurements"),
    "hba1c": KeySpec("%", False, "Measured HbA1c value"),
    "heart_rate": KeySpec("bps", False, "Recorded heart-rate"),
    "steps": KeySpec("steps per ten seconds", False, "Recorded steps in a 10 second interval"),
    "height": KeySpec("cm", False, "Height of subject"),
    "weight": KeySpec("kg", False, "Weight of subject"),
}

CARB_CATEGORIES = ("HT", "Less", "Typical", "More", "Ann")

RESERVED = frozenset({"unique_id", "metadata"})
_KEY_RE = re.compile(r"[a-z][a-z0-9_]*")
_META_FIELDS = ("unit", "description", "device", "precision", "insulin", "medication")


def is_valid_key(name):
    return isinstance(name, str) and bool(_KEY_RE.fullmatch(name)) and name not in RESERVED


def is_categorical(key, metadata=None):
    spec = REGISTRY.get(key)
    if spec is not None:
        return spec.categorical
    return metadata is not None and metadata.precision == "categorical"


@dataclass(frozen=True)
class SignalMetadata:
    unit: str
    description: str
    device: str | None = None
    precision: str | None = None
    insulin: str | None = None
    medication: str | None = None

    def to_dict(self):
        return {k: getattr(self, k) for k in _META_FIELDS if getattr(self, k) is not None}


def _frozen(a):
    a.flags.writeable = False
    return a


class Signal:
    """Parallel time/value arrays for one key.

    Times are held as three aligned arrays (``epoch_ms``, ``offset_minutes``,
    ``zone_aware``) rather than a list of :class:`TimedInstant`, so that
    year-long CGM traces stay cheap.  Numeric values are float64;
    categorical values are an object array of ``str``.

    The constructor does not enforce invariants (length parity, sortedness,
    finiteness) so that broken input can still be reported on; see
    :func:`check_record` and :mod:`diax.validate`.
    """

    __slots__ = ("epoch_ms", "offset_minutes", "zone_aware", "values", "categorical")

    def __init__(self, epoch_ms, offset_minutes, zone_aware, values, categorical=False):
        self.epoch_ms = _frozen(np.array(epoch_ms, dtype=np.int64))
        self.offset_minutes = _frozen(np.array(offset_minutes, dtype=np.int16))
        self.zone_aware = _frozen(np.array(zone_aware, dtype=bool))
        if categorical:
            vals = np.empty(len(values), dtype=object)
            vals[:] = list(values)
        else:
            vals = np.array(values, dtype=np.float64)
        self.values = _frozen(vals)
        self.categorical = bool(categorical)

    @classmethod
    def from_instants(cls, times, values, categorical=False):
        times = list(times)
        return cls(
            [t.epoch_ms for t in times],
            [t.offset_minutes for t in times],
            [t.zone_aware for t in times],
            values,
            categorical,
        )

    @classmethod
    def empty(cls, categorical=False):
        return cls([], [], [], [], categorical)

    @property
    def times(self):
        return [
            TimedInstant.from_epoch_ms(e, o, a)
            for e, o, a in zip(self.epoch_ms.tolist(), self.offset_minutes.tolist(), self.zone_aware.tolist())
        ]

    @property
    def seconds(self):
        return self.epoch_ms / 1000.0

    def __len__(self):
        return len(self.epoch_ms)

    @property
    def lengths_match(self):
        return len(self.epoch_ms) == len(self.values)

    @property
    def is_sorted(self):
        return bool(np.all(np.diff(self.epoch_ms) >= 0))

    def sorted(self):
        """Stable sort by instant; returns ``self`` when already ordered."""
        if not self.lengths_match:
            raise InvariantViolation("cannot sort a signal with mismatched time/value lengths")
        if self.is_sorted:
            return self
        order = np.argsort(self.epoch_ms, kind="stable")
        return Signal(
            self.epoch_ms[order],
            self.offset_minutes[order],
            self.zone_aware[order],
            self.values[order],
            self.categorical,
        )

    def __eq__(self, other):
        if not isinstance(other, Signal):
            return NotImplemented
        return (
            self.categorical == other.categorical
            and np.array_equal(self.epoch_ms, other.epoch_ms)
            and np.array_equal(self.offset_minutes, other.offset_minutes)
            and np.array_equal(self.zone_aware, other.zone_aware)
            and len(self.values) == len(other.values)
            and bool(np.all(self.values == other.values))
        )

    __hash__ = None

    def __repr__(self):
        kind = "categorical" if self.categorical else "numeric"
        return f"Signal(n={len(self)}, {kind})"


@dataclass(frozen=True, eq=True)
class SubjectRecord:
    """One subject's DIAX content.  Treat the mappings as read-only."""

    unique_id: str
    signals: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    @property
    def keys(self):
        return sorted(self.signals)


def check_record(record):
    """Raise :class:`InvariantViolation` unless ``record`` can be written."""
    if not isinstance(record.unique_id, str) or not record.unique_id:
        raise InvariantViolation("unique_id must be a non-empty string")
    if "cgm" not in record.signals:
        raise InvariantViolation("record has no cgm signal")
    if set(record.signals) != set(record.metadata):
        missing = sorted(set(record.signals) ^ set(record.metadata))
        raise InvariantViolation(f"signal/metadata key sets differ: {missing}")
    for key, sig in record.signals.items():
        if not is_valid_key(key):
            raise InvariantViolation(f"invalid signal key {key!r}")
        if not sig.lengths_match:
            raise InvariantViolation(f"{key}: {len(sig.epoch_ms)} times vs {len(sig.values)} values")
        meta = record.metadata[key]
        if not meta.unit or not meta.description:
            raise InvariantViolation(f"{key}: metadata unit and description are required")
        if sig.categorical:
            if key == "carb_category":
                bad = [v for v in sig.values if v not in CARB_CATEGORIES]
                if bad:
                    raise InvariantViolation(f"{key}: unknown categories {sorted(set(bad))}")
            elif any(not isinstance(v, str) for v in sig.values):
                raise InvariantViolation(f"{key}: categorical values must be strings")
        elif len(sig.values) and not np.all(np.isfinite(sig.values)):
            raise InvariantViolation(f"{key}: non-finite values cannot be persisted")


# -- JSON encoding -----------------------------------------------------------


def _reject_constant(name):
    raise MalformedDocument(f"non-standard JSON constant {name}")


def _number_token(v):
    if v.is_integer() and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def read_subject(data, fallback_offset_minutes=0, strict=True):
    """Parse a DIAX document (``bytes`` or ``str``) into a :class:`SubjectRecord`.

    With ``strict=False`` record-level problems (missing cgm, metadata
    coverage, length mismatch, unknown categories) are left in place for
    :func:`diax.validate.validate_subject` to report; only problems that
    make the document unrepresentable still raise.
    """
    if isinstance(data, (bytes, bytearray)):
        try:
            data = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise MalformedDocument(f"not UTF-8: {exc}") from None
    try:
        doc = json.loads(data, parse_constant=_reject_constant)
    except json.JSONDecodeError as exc:
        raise MalformedDocument(f"invalid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise SchemaViolation("", "top level must be an object")

    uid = doc.get("unique_id")
    if not isinstance(uid, str) or (strict and not uid):
        raise SchemaViolation("unique_id", "must be a non-empty string", "MISSING_ID")

    raw_meta = doc.get("metadata", {})
    if not isinstance(raw_meta, dict):
        raise SchemaViolation("metadata", "must be an object")
    metadata = {}
    for key, m in raw_meta.items():
        path = f"metadata.{key}"
        if not isinstance(m, dict):
            raise SchemaViolation(path, "must be an object")
        extra = set(m) - set(_META_FIELDS)
        if extra:
            raise SchemaViolation(path, f"unknown metadata fields {sorted(extra)}")
        for f in _META_FIELDS:
            if f in m and not isinstance(m[f], str):
                raise SchemaViolation(f"{path}.{f}", "must be a string")
        if strict and (not m.get("unit") or not m.get("description")):
            raise SchemaViolation(path, "unit and description are required", "EMPTY_METADATA")
        metadata[key] = SignalMetadata(
            m.get("unit", ""), m.get("description", ""),
            *(m.get(f) for f in _META_FIELDS[2:]),
        )

    signals = {}
    for key, node in doc.items():
        if key in RESERVED:
            continue
        if not is_valid_key(key):
            raise SchemaViolation(key, "signal keys must be lowercase ASCII with digits/underscores", "BAD_KEY")
        if not isinstance(node, dict) or set(node) != {"time", "value"}:
            raise SchemaViolation(key, 'signal must be an object with exactly "time" and "value"')
        times, values = node["time"], node["value"]
        if not isinstance(times, list) or not isinstance(values, list):
            raise SchemaViolation(key, "time and value must be arrays")
        if strict and len(times) != len(values):
            raise SchemaViolation(key, f"{len(times)} times vs {len(values)} values", "LENGTH_MISMATCH")
        categorical = is_categorical(key, metadata.get(key))
        if categorical:
            if any(not isinstance(v, str) for v in values):
                raise SchemaViolation(key, "categorical values must be strings", "BAD_VALUE")
            if strict and key == "carb_category":
                for i, v in enumerate(values):
                    if v not in CARB_CATEGORIES:
                        raise SchemaViolation(key, f"value {i} {v!r} not in {CARB_CATEGORIES}", "BAD_CATEGORY")
        else:
            for i, v in enumerate(values):
                if isinstance(v, bool) or not isinstance(v, (int, float)):
                    raise SchemaViolation(key, f"value {i} must be a number, got {v!r}", "BAD_VALUE")
        epoch, offset, aware = parse_many(times, fallback_offset_minutes)
        signals[key] = Signal(epoch, offset, aware, values, categorical)

    if strict:
        if "cgm" not in signals:
            raise SchemaViolation("cgm", "the cgm signal is required", "MISSING_CGM")
        for key in signals:
            if key not in metadata:
                raise SchemaViolation(f"metadata.{key}", "no metadata entry", "MISSING_METADATA")
        for key in metadata:
            if key not in signals:
                raise SchemaViolation(f"metadata.{key}", "metadata for absent signal", "ORPHAN_METADATA")
    return SubjectRecord(uid, signals, metadata)


def write_subject(record):
    """Canonical UTF-8 encoding of ``record`` (bytes, trailing newline)."""
    check_record(record)
    parts = ["{", f"  {json.dumps('unique_id')}: {json.dumps(record.unique_id, ensure_ascii=False)},"]
    for key in sorted(record.signals):
        sig = record.signals[key].sorted()
        stamps = format_many(sig.epoch_ms, sig.offset_minutes, sig.zone_aware)
        if sig.categorical:
            vals = [json.dumps(v, ensure_ascii=False) for v in sig.values.tolist()]
        else:
            vals = [_number_token(v) for v in sig.values.tolist()]
        parts.append(f"  {json.dumps(key)}: {{")
        parts.append(_array_block("time", ['"' + s + '"' for s in stamps], ","))
        parts.append(_array_block("value", vals, ""))
        parts.append("  },")
    meta = {k: record.metadata[k].to_dict() for k in sorted(record.metadata)}
    body = json.dumps(meta, indent=2, ensure_ascii=False).replace("\n", "\n  ")
    parts.append(f'  "metadata": {body}')
    parts.append("}")
    return ("\n".join(parts) + "\n").encode("utf-8")


def _array_block(name, tokens, trailer):
    if not tokens:
        return f'    "{name}": []{trailer}'
    inner = ",\n      ".join(tokens)
    return f'    "{name}": [\n      {inner}\n    ]{trailer}'


def load_subject(path, fallback_offset_minutes=0, strict=True):
    with open(path, "rb") as fh:
        return read_subject(fh.read(), fallback_offset_minutes, strict)


def save_subject(record, path):
    data = write_subject(record)
    with open(path, "wb") as fh:
        fh.write(data)


# -- file naming -------------------------------------------------------------

_COMPONENT_RE = re.compile(r"[A-Za-z0-9-]+")
_FILENAME_RE = re.compile(r"subj_([A-Za-z0-9-]+)_([A-Za-z0-9-]+)\.json")


def parse_subject_filename(name):
    """``"subj_MyTrial_001-001.json"`` -> ``("MyTrial", "001-001")``."""
    m = _FILENAME_RE.fullmatch(name)
    if m is None:
        raise BadFilename(f"{name!r} does not match subj_<trial>_<id>.json")
    return m.group(1), m.group(2)


def format_subject_filename(trial, subject_id):
    for label, part in (("trial", trial), ("subject id", subject_id)):
        if not part or not _COMPONENT_RE.fullmatch(part):
            raise BadComponent(f"{label} {part!r} must be non-empty letters, digits or hyphens")
    return f"subj_{trial}_{subject_id}.json"
