"""DIAX timestamp grammar: parsing, formatting and instant arithmetic.

Accepted input::

    YYYY-MM-DD HH:MM:SS[.f{1,6}][ offset]      ("T" may replace the space)
    offset := +HH:MM | -HH:MM | +HHMM | -HHMM | Z

Stamps without an offset are "naive": they are resolved to an instant with a
caller-supplied fixed fallback offset, but keep that offset (and the
``zone_aware=False`` flag) so they re-serialize with their original
wall-clock digits.  Sub-second precision is truncated to milliseconds.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone

import numpy as np

from .errors import TimestampError

__all__ = [
    "TimedInstant",
    "parse_timestamp",
    "format_timestamp",
    "parse_many",
    "format_many",
    "parse_offset",
    "format_offset",
    "parse_duration",
    "days_from_civil",
    "civil_from_days",
]

MAX_OFFSET_MINUTES = 18 * 60
MS_PER_DAY = 86_400_000

_STAMP_RE = re.compile(
    r"(\d{4})-(\d{2})-(\d{2})[ T](\d{2}):(\d{2}):(\d{2})"
    r"(?:\.(\d{1,6}))?"
    r"(?: ?(Z|[+-]\d{2}:?\d{2}))?"
)
_OFFSET_RE = re.compile(r"([+-])(\d{2}):?(\d{2})")
_DURATION_RE = re.compile(r"(\d+(?:\.\d+)?)\s*(ms|s|m|min|h|d|w)?")
_DURATION_UNITS = {"ms": 0.001, "s": 1, None: 1, "m": 60, "min": 60, "h": 3600, "d": 86400, "w": 604800}

_EPOCH = datetime(1970, 1, 1, tzinfo=timezone.utc)
_DAYS_IN_MONTH = np.array([0, 31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31])


def days_from_civil(y, m, d):
    """Days since 1970-01-01 for a proleptic Gregorian date.

    Works on Python ints and on numpy integer arrays alike.
    """
    y = y - (m <= 2)
    era = y // 400
    yoe = y - era * 400
    mp = (m + 9) % 12
    doy = (153 * mp + 2) // 5 + d - 1
    doe = yoe * 365 + yoe // 4 - yoe // 100 + doy
    return era * 146097 + doe - 719468


def civil_from_days(z):
    """Inverse of :func:`days_from_civil`; returns ``(year, month, day)``."""
    z = z + 719468
    era = z // 146097
    doe = z - era * 146097
    yoe = (doe - doe // 1460 + doe // 36524 - doe // 146096) // 365
    doy = doe - (365 * yoe + yoe // 4 - yoe // 100)
    mp = (5 * doy + 2) // 153
    d = doy - (153 * mp + 2) // 5 + 1
    m = mp + 3 - 12 * (mp >= 10)
    y = yoe + era * 400 + (m <= 2)
    return y, m, d


def _is_leap(y):
    return (y % 4 == 0) & ((y % 100 != 0) | (y % 400 == 0))


def _days_in_month(y, m):
    return _DAYS_IN_MONTH[m] + ((m == 2) & _is_leap(y))


@dataclass(frozen=True)
class TimedInstant:
    """A point in time plus the offset it was (or is to be) written in.

    Equality is structural (offset and awareness included); ordering
    compares only the instant, so ``a <= b`` agrees with chronology across
    offsets.  Use :meth:`same_instant` for offset-blind equality.
    """

    epoch_seconds: int
    millis: int = 0
    offset_minutes: int = 0
    zone_aware: bool = True

    def __post_init__(self):
        if not 0 <= self.millis < 1000:
            raise ValueError(f"millis out of range: {self.millis}")
        if abs(self.offset_minutes) > MAX_OFFSET_MINUTES:
            raise ValueError(f"offset out of range: {self.offset_minutes} min")

    @classmethod
    def from_epoch_ms(cls, epoch_ms, offset_minutes=0, zone_aware=True):
        s, ms = divmod(int(epoch_ms), 1000)
        return cls(s, ms, int(offset_minutes), bool(zone_aware))

    @classmethod
    def from_datetime(cls, dt, fallback_offset_minutes=0):
        if dt.tzinfo is None or dt.utcoffset() is None:
            offset = fallback_offset_minutes
            aware = False
            local = dt
        else:
            offset = int(dt.utcoffset().total_seconds() // 60)
            aware = True
            local = dt.replace(tzinfo=None)
        days = days_from_civil(local.year, local.month, local.day)
        local_ms = (
            (days * 86400 + local.hour * 3600 + local.minute * 60 + local.second) * 1000
            + local.microsecond // 1000
        )
        return cls.from_epoch_ms(local_ms - offset * 60_000, offset, aware)

    @property
    def subsec(self):
        return self.millis / 1000.0

    @property
    def epoch_ms(self):
        return self.epoch_seconds * 1000 + self.millis

    @property
    def local_ms(self):
        """Milliseconds since epoch of the wall-clock reading in this offset."""
        return self.epoch_ms + self.offset_minutes * 60_000

    def to_datetime(self):
        tz = timezone(timedelta(minutes=self.offset_minutes))
        return (_EPOCH + timedelta(milliseconds=self.epoch_ms)).astimezone(tz)

    def shifted(self, seconds):
        return TimedInstant.from_epoch_ms(
            self.epoch_ms + round(seconds * 1000), self.offset_minutes, self.zone_aware
        )

    def same_instant(self, other):
        return self.epoch_ms == other.epoch_ms

    def __lt__(self, other):
        return self.epoch_ms < other.epoch_ms

    def __le__(self, other):
        return self.epoch_ms <= other.epoch_ms

    def __gt__(self, other):
        return self.epoch_ms > other.epoch_ms

    def __ge__(self, other):
        return self.epoch_ms >= other.epoch_ms

    def __str__(self):
        return format_timestamp(self)


def _check_fallback(fallback_offset_minutes):
    if abs(fallback_offset_minutes) > MAX_OFFSET_MINUTES:
        raise TimestampError(f"fallback offset out of range: {fallback_offset_minutes} min")


def _offset_minutes(text):
    if text == "Z":
        return 0
    m = _OFFSET_RE.fullmatch(text)
    if m is None:
        raise TimestampError(f"bad offset {text!r}")
    hh, mm = int(m.group(2)), int(m.group(3))
    if mm >= 60:
        raise TimestampError(f"offset minutes out of range in {text!r}")
    total = hh * 60 + mm
    if total > MAX_OFFSET_MINUTES:
        raise TimestampError(f"offset beyond +-18:00 in {text!r}")
    return -total if m.group(1) == "-" else total


def parse_timestamp(text, fallback_offset_minutes=0):
    """Parse one DIAX timestamp into a :class:`TimedInstant`."""
    _check_fallback(fallback_offset_minutes)
    if not isinstance(text, str):
        raise TimestampError(f"timestamp must be a string, got {type(text).__name__}")
    m = _STAMP_RE.fullmatch(text)
    if m is None:
        raise TimestampError(f"unparseable timestamp {text!r}")
    y, mo, d, hh, mi, ss = (int(g) for g in m.group(1, 2, 3, 4, 5, 6))
    if y < 1:
        raise TimestampError(f"year out of range in {text!r}")
    if not 1 <= mo <= 12:
        raise TimestampError(f"month out of range in {text!r}")
    if not 1 <= d <= _days_in_month(y, mo):
        raise TimestampError(f"day out of range in {text!r}")
    if hh > 23 or mi > 59 or ss > 59:
        raise TimestampError(f"time of day out of range in {text!r}")
    frac = m.group(7)
    millis = int((frac + "00")[:3]) if frac else 0
    if m.group(8) is None:
        offset, aware = fallback_offset_minutes, False
    else:
        offset, aware = _offset_minutes(m.group(8)), True
    local_s = days_from_civil(y, mo, d) * 86400 + hh * 3600 + mi * 60 + ss
    return TimedInstant(local_s - offset * 60, millis, offset, aware)


def format_offset(minutes):
    sign = "-" if minutes < 0 else "+"
    hh, mm = divmod(abs(int(minutes)), 60)
    return f"{sign}{hh:02d}:{mm:02d}"


def parse_offset(text):
    """Parse a CLI-style offset (``+HH:MM``, ``-HHMM`` or ``Z``) to minutes."""
    return _offset_minutes(text.strip())


def format_timestamp(t):
    local_ms = t.local_ms
    days, ms_of_day = divmod(local_ms, MS_PER_DAY)
    y, mo, d = civil_from_days(days)
    secs, millis = divmod(ms_of_day, 1000)
    hh, rem = divmod(secs, 3600)
    mi, ss = divmod(rem, 60)
    out = f"{y:04d}-{mo:02d}-{d:02d} {hh:02d}:{mi:02d}:{ss:02d}"
    if millis:
        out += f".{millis:03d}"
    if t.zone_aware:
        out += " " + format_offset(t.offset_minutes)
    return out


def parse_duration(text):
    """``"5m"`` -> 300.0 seconds.  Bare numbers are seconds."""
    m = _DURATION_RE.fullmatch(text.strip())
    if m is None:
        raise ValueError(f"bad duration {text!r}")
    return float(m.group(1)) * _DURATION_UNITS[m.group(2)]


# -- vectorized paths ------------------------------------------------------

_D = 48  # ord("0")


def _fast_parse(codes, has_ms, has_offset, fallback):
    """Parse fixed-layout stamps from a (n, width) array of code points.

    Returns ``(ok_mask, epoch_ms, offset, aware)``; rows not ok must go
    through the scalar parser, which produces the error message.
    """
    dig = codes.astype(np.int64) - _D

    def num(*cols):
        v = np.zeros(len(codes), dtype=np.int64)
        for c in cols:
            v = v * 10 + dig[:, c]
        return v

    digit_cols = [0, 1, 2, 3, 5, 6, 8, 9, 11, 12, 14, 15, 17, 18]
    ok = np.all((dig[:, digit_cols] >= 0) & (dig[:, digit_cols] <= 9), axis=1)
    ok &= (codes[:, 4] == 45) & (codes[:, 7] == 45)
    ok &= (codes[:, 10] == 32) | (codes[:, 10] == 84)
    ok &= (codes[:, 13] == 58) & (codes[:, 16] == 58)
    y, mo, d = num(0, 1, 2, 3), num(5, 6), num(8, 9)
    hh, mi, ss = num(11, 12), num(14, 15), num(17, 18)
    o = 19
    millis = np.zeros(len(codes), dtype=np.int64)
    if has_ms:
        ok &= codes[:, 19] == 46
        ok &= np.all((dig[:, 20:23] >= 0) & (dig[:, 20:23] <= 9), axis=1)
        millis = num(20, 21, 22)
        o = 23
    if has_offset:
        ok &= codes[:, o] == 32
        ok &= (codes[:, o + 1] == 43) | (codes[:, o + 1] == 45)
        ok &= codes[:, o + 4] == 58
        cols = [o + 2, o + 3, o + 5, o + 6]
        ok &= np.all((dig[:, cols] >= 0) & (dig[:, cols] <= 9), axis=1)
        oh, om = num(o + 2, o + 3), num(o + 5, o + 6)
        ok &= (om < 60) & (oh * 60 + om <= MAX_OFFSET_MINUTES)
        offset = np.where(codes[:, o + 1] == 45, -(oh * 60 + om), oh * 60 + om)
        aware = np.ones(len(codes), dtype=bool)
    else:
        offset = np.full(len(codes), fallback, dtype=np.int64)
        aware = np.zeros(len(codes), dtype=bool)
    mo_safe = np.clip(mo, 1, 12)
    ok &= (y >= 1) & (mo >= 1) & (mo <= 12) & (d >= 1) & (d <= _days_in_month(y, mo_safe))
    ok &= (hh <= 23) & (mi <= 59) & (ss <= 59)
    days = days_from_civil(y, mo_safe, d)
    local_ms = (days * 86400 + hh * 3600 + mi * 60 + ss) * 1000 + millis
    return ok, local_ms - offset * 60_000, offset, aware


_FAST_LAYOUTS = {19: (False, False), 23: (True, False), 26: (False, True), 30: (True, True)}


def parse_many(texts, fallback_offset_minutes=0):
    """Parse a sequence of stamps into ``(epoch_ms, offset_minutes, zone_aware)`` arrays.

    Canonical-layout strings take a vectorized path; anything else falls
    back to :func:`parse_timestamp`.  Errors name the failing sample index.
    """
    _check_fallback(fallback_offset_minutes)
    n = len(texts)
    epoch = np.empty(n, dtype=np.int64)
    offset = np.empty(n, dtype=np.int64)
    aware = np.empty(n, dtype=bool)
    if n == 0:
        return epoch, offset.astype(np.int16), aware
    for i, t in enumerate(texts):
        if not isinstance(t, str):
            raise TimestampError(f"sample {i}: timestamp must be a string, got {type(t).__name__}")
    arr = np.asarray(texts, dtype=str)
    width = arr.dtype.itemsize // 4
    lens = np.char.str_len(arr)
    slow = []
    for length in np.unique(lens):
        idx = np.nonzero(lens == length)[0]
        layout = _FAST_LAYOUTS.get(int(length))
        if layout is None:
            slow.extend(idx.tolist())
            continue
        codes = arr[idx].view(np.uint32).reshape(len(idx), width)[:, :length]
        ok, e, o, a = _fast_parse(codes, layout[0], layout[1], fallback_offset_minutes)
        good = idx[ok]
        epoch[good], offset[good], aware[good] = e[ok], o[ok], a[ok]
        slow.extend(idx[~ok].tolist())
    for i in slow:
        try:
            t = parse_timestamp(texts[i], fallback_offset_minutes)
        except TimestampError as exc:
            raise TimestampError(f"sample {i}: {exc}") from None
        epoch[i], offset[i], aware[i] = t.epoch_ms, t.offset_minutes, t.zone_aware
    return epoch, offset.astype(np.int16), aware


def format_many(epoch_ms, offset_minutes, zone_aware):
    """Vectorized :func:`format_timestamp` over parallel arrays."""
    epoch_ms = np.asarray(epoch_ms, dtype=np.int64)
    if len(epoch_ms) == 0:
        return []
    offset_minutes = np.asarray(offset_minutes, dtype=np.int64)
    local = (epoch_ms + offset_minutes * 60_000).astype("datetime64[ms]")
    has_ms = (epoch_ms % 1000) != 0
    if has_ms.any():
        body = np.where(
            has_ms,
            np.datetime_as_string(local, unit="ms"),
            np.datetime_as_string(local, unit="s"),
        )
    else:
        body = np.datetime_as_string(local, unit="s")
    offs = {int(m): " " + format_offset(m) for m in np.unique(offset_minutes)}
    out = []
    for b, off, za in zip(body.tolist(), offset_minutes.tolist(), np.asarray(zone_aware).tolist()):
        s = b[:10] + " " + b[11:]
        out.append(s + offs[off] if za else s)
    return out
