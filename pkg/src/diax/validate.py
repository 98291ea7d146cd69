"""Schema and plausibility checks for subject records and dataset directories."""

from __future__ import annotations

import json
import logging
import os
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import BadFilename, DiaxError, IoFailure, SchemaViolation
from .model import CARB_CATEGORIES, REGISTRY, is_valid_key, load_subject, parse_subject_filename

log = logging.getLogger(__name__)

__all__ = [
    "ERROR",
    "WARNING",
    "PLAUSIBLE_RANGES",
    "Finding",
    "ValidationReport",
    "DatasetSummary",
    "DatasetValidation",
    "validate_subject",
    "validate_dataset",
    "cgm_hours",
    "read_jsonl",
]

ERROR = "ERROR"
WARNING = "WARNING"

# Bounds are inclusive; values outside are flagged, not rejected.
PLAUSIBLE_RANGES = {
    "cgm": (10.0, 600.0),
    "smbg": (10.0, 600.0),
    "bolus": (0.0, 100.0),
    "basal_rate": (0.0, 40.0),
    "carbs": (0.0, 500.0),
}

INSULIN_KEYS = ("bolus", "basal_rate", "basal_inj")


@dataclass(frozen=True)
class Finding:
    severity: str
    code: str
    message: str
    key: str | None = None
    sample_index: int | None = None


@dataclass
class ValidationReport:
    findings: list = field(default_factory=list)

    @property
    def counts(self):
        c = Counter(f.severity for f in self.findings)
        return {ERROR: c.get(ERROR, 0), WARNING: c.get(WARNING, 0)}

    @property
    def passing(self):
        return self.counts[ERROR] == 0

    def codes(self, severity=None):
        return [f.code for f in self.findings if severity is None or f.severity == severity]

    def add(self, severity, code, message, key=None, sample_index=None):
        self.findings.append(Finding(severity, code, message, key, sample_index))

    def to_jsonl(self, file=None):
        """One JSON object per finding, newline-terminated."""
        lines = []
        for f in self.findings:
            obj = {
                "file": file,
                "severity": f.severity,
                "code": f.code,
                "key": f.key,
                "index": f.sample_index,
                "message": f.message,
            }
            lines.append(json.dumps(obj, ensure_ascii=False) + "\n")
        return "".join(lines)


def read_jsonl(text):
    """Parse :meth:`ValidationReport.to_jsonl` output back into reports keyed by file."""
    reports = {}
    for line in text.splitlines():
        if not line.strip():
            continue
        obj = json.loads(line)
        rep = reports.setdefault(obj["file"], ValidationReport())
        rep.add(obj["severity"], obj["code"], obj["message"], obj["key"], obj["index"])
    return reports


def validate_subject(record):
    report = ValidationReport()
    add = report.add
    signals, metadata = record.signals, record.metadata

    if not record.unique_id:
        add(ERROR, "MISSING_ID", "unique_id is empty")
    if "cgm" not in signals:
        add(ERROR, "MISSING_CGM", "the cgm signal is required", "cgm")

    for key in sorted(signals):
        sig = signals[key]
        if not is_valid_key(key):
            add(ERROR, "BAD_KEY", f"invalid signal key {key!r}", key)
        if key not in metadata:
            add(ERROR, "MISSING_METADATA", "signal has no metadata entry", key)
        if not sig.lengths_match:
            add(ERROR, "LENGTH_MISMATCH", f"{len(sig.epoch_ms)} times vs {len(sig.values)} values", key)
        _check_values(report, key, sig)
        n = min(len(sig.epoch_ms), len(sig.values))
        if n > 1:
            d = np.diff(sig.epoch_ms[:n])
            bad = np.flatnonzero(d < 0)
            if len(bad):
                add(WARNING, "UNSORTED_TIMES",
                    f"{len(bad)} out-of-order step(s); first at sample {int(bad[0]) + 1}",
                    key, int(bad[0]) + 1)
        if len(sig.zone_aware) and sig.zone_aware.any() and not sig.zone_aware.all():
            first = int(np.flatnonzero(sig.zone_aware != sig.zone_aware[0])[0])
            add(WARNING, "MIXED_ZONE_AWARENESS", "signal mixes naive and zone-aware timestamps", key, first)

    for key in sorted(metadata):
        meta = metadata[key]
        if key not in signals:
            add(ERROR, "ORPHAN_METADATA", "metadata entry for absent signal", key)
        if not meta.unit or not meta.description:
            add(ERROR, "EMPTY_METADATA", "unit and description must be non-empty", key)
        spec = REGISTRY.get(key)
        if spec is not None and spec.unit is not None and meta.unit != spec.unit:
            add(ERROR, "UNIT_MISMATCH", f"unit {meta.unit!r}, expected {spec.unit!r}", key)

    if not any(k in signals for k in INSULIN_KEYS):
        add(WARNING, "NO_INSULIN", "no bolus, basal_rate or basal_inj signal (strongly recommended)")
    return report


def _check_values(report, key, sig):
    vals = sig.values
    spec = REGISTRY.get(key)
    if sig.categorical:
        if spec is not None and not spec.categorical:
            report.add(ERROR, "BAD_VALUE", "registry key is numeric but values are categorical", key)
            return
        for i, v in enumerate(vals.tolist()):
            if key == "carb_category" and v not in CARB_CATEGORIES:
                report.add(ERROR, "BAD_CATEGORY", f"{v!r} not one of {', '.join(CARB_CATEGORIES)}", key, i)
            elif not isinstance(v, str):
                report.add(ERROR, "BAD_VALUE", f"categorical value {v!r} is not a string", key, i)
        return
    if spec is not None and spec.categorical:
        report.add(ERROR, "BAD_CATEGORY", "categorical key holds numeric values", key)
        return
    finite = np.isfinite(vals)
    for i in np.flatnonzero(~finite).tolist():
        report.add(ERROR, "NON_FINITE", f"value {vals[i]!r} is not finite", key, i)
    bounds = PLAUSIBLE_RANGES.get(key)
    if bounds is not None:
        lo, hi = bounds
        unit = spec.unit
        for i in np.flatnonzero(finite & ((vals < lo) | (vals > hi))).tolist():
            report.add(WARNING, "IMPLAUSIBLE_VALUE",
                       f"{vals[i]:g} {unit} outside [{lo:g}, {hi:g}]", key, i)


def cgm_hours(record):
    """Calendar span of the cgm signal in hours (0 for fewer than 2 samples)."""
    sig = record.signals.get("cgm")
    if sig is None or len(sig.epoch_ms) < 2:
        return 0.0
    return float(sig.epoch_ms.max() - sig.epoch_ms.min()) / 3_600_000.0


@dataclass
class DatasetSummary:
    subjects: int
    files: int
    patient_hours: float
    code_counts: dict

    def to_dict(self):
        return asdict(self)


@dataclass
class DatasetValidation:
    reports: dict
    summary: DatasetSummary

    @property
    def passing(self):
        return all(r.passing for r in self.reports.values())

    def to_jsonl(self):
        return "".join(self.reports[name].to_jsonl(name) for name in sorted(self.reports))


def _validate_file(path, fallback_offset_minutes):
    report = ValidationReport()
    try:
        parse_subject_filename(path.name)
    except BadFilename as exc:
        report.add(WARNING, "BAD_FILENAME", str(exc))
    try:
        record = load_subject(path, fallback_offset_minutes, strict=False)
    except SchemaViolation as exc:
        report.add(ERROR, "MALFORMED", str(exc), exc.path.split(".")[-1] or None)
        return report, None
    except (DiaxError, OSError) as exc:
        report.add(ERROR, "MALFORMED", str(exc))
        return report, None
    sub = validate_subject(record)
    report.findings.extend(sub.findings)
    return report, record


def validate_dataset(directory, fallback_offset_minutes=0, workers=1):
    """Validate every ``subj_*.json`` file in ``directory``.

    Other files are ignored.  Results are keyed by file name and do not
    depend on completion order.
    """
    directory = Path(directory)
    try:
        entries = sorted(os.listdir(directory))
    except OSError as exc:
        raise IoFailure(f"cannot read directory {directory}: {exc}") from None
    names = [n for n in entries if n.startswith("subj_") and n.endswith(".json")]
    ignored = [n for n in entries if n not in names and (directory / n).is_file()]
    if ignored:
        log.info("ignoring %d non-subject file(s) in %s", len(ignored), directory)

    def run(name):
        return name, _validate_file(directory / name, fallback_offset_minutes)

    if workers > 1 and len(names) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, names))
    else:
        results = [run(n) for n in names]

    reports, hours, subjects, codes = {}, 0.0, 0, Counter()
    for name, (report, record) in sorted(results):
        reports[name] = report
        codes.update(report.codes())
        if record is not None:
            subjects += 1
            hours += cgm_hours(record)
    summary = DatasetSummary(subjects, len(names), hours, dict(sorted(codes.items())))
    return DatasetValidation(reports, summary)
