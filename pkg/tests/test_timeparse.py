from datetime import datetime, timedelta, timezone

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from diax.errors import TimestampError
from diax.timeparse import (
    TimedInstant,
    civil_from_days,
    days_from_civil,
    format_many,
    format_timestamp,
    parse_duration,
    parse_many,
    parse_offset,
    parse_timestamp,
)

UTC = timezone.utc


def epoch_of(dt):
    return int(dt.timestamp())


def test_utc_identity():
    t = parse_timestamp("2021-03-05 14:30:00 +00:00", -300)
    assert t.epoch_seconds == epoch_of(datetime(2021, 3, 5, 14, 30, tzinfo=UTC))
    assert t.zone_aware and t.offset_minutes == 0


def test_naive_uses_fallback_offset():
    t = parse_timestamp("2021-03-05 14:30:00", -300)
    assert t.epoch_seconds == epoch_of(datetime(2021, 3, 5, 19, 30, tzinfo=UTC))
    assert not t.zone_aware
    assert t.offset_minutes == -300


@pytest.mark.parametrize("text", [
    "2021-13-05 00:00:00",
    "2021-02-30 00:00:00",
    "2021-02-29 00:00:00",
    "2021-03-05 24:00:00",
    "2021-03-05 12:60:00",
    "2021-03-05 12:00:60",
    "2021:03:05 12:00:00",
    "2021-03-05",
    "2021-03-05 12:00:00 +19:00",
    "2021-03-05 12:00:00 +05:75",
    "0000-01-01 00:00:00",
    "",
])
def test_rejects(text):
    with pytest.raises(TimestampError):
        parse_timestamp(text, 0)


def test_leap_day_accepted():
    assert parse_timestamp("2020-02-29 00:00:00", 0).epoch_seconds == epoch_of(datetime(2020, 2, 29, tzinfo=UTC))
    assert parse_timestamp("2000-02-29 00:00:00", 0)
    with pytest.raises(TimestampError):
        parse_timestamp("1900-02-29 00:00:00", 0)


@pytest.mark.parametrize("text,offset", [
    ("2021-03-05T14:30:00Z", 0),
    ("2021-03-05 14:30:00Z", 0),
    ("2021-03-05 14:30:00 +0530", 330),
    ("2021-03-05T14:30:00-04:00", -240),
    ("2021-03-05 14:30:00 -00:00", 0),
])
def test_offset_variants(text, offset):
    t = parse_timestamp(text, 600)
    assert t.zone_aware and t.offset_minutes == offset
    assert t.epoch_seconds == epoch_of(datetime(2021, 3, 5, 14, 30, tzinfo=timezone(timedelta(minutes=offset))))


def test_subsecond_truncated_to_millis():
    assert parse_timestamp("2021-03-05 14:30:00.5", 0).millis == 500
    assert parse_timestamp("2021-03-05 14:30:00.123987", 0).millis == 123
    assert format_timestamp(parse_timestamp("2021-03-05 14:30:00.120 +01:00", 0)) == "2021-03-05 14:30:00.120 +01:00"


def test_format_examples():
    assert format_timestamp(TimedInstant(epoch_of(datetime(2022, 1, 1, 12, tzinfo=UTC)))) == "2022-01-01 12:00:00 +00:00"
    assert format_timestamp(parse_timestamp("2021-03-05 14:30:00", -300)) == "2021-03-05 14:30:00"
    assert format_timestamp(parse_timestamp("2021-03-05 14:30:00 -03:30", 0)) == "2021-03-05 14:30:00 -03:30"


def test_ordering_is_chronological_across_offsets():
    a = parse_timestamp("2021-03-05 14:30:00 +02:00", 0)  # 12:30Z
    b = parse_timestamp("2021-03-05 13:00:00 +00:00", 0)
    assert a < b and b > a and not a.same_instant(b)
    c = parse_timestamp("2021-03-05 12:30:00 +00:00", 0)
    assert a.same_instant(c) and a != c and a <= c and a >= c


def test_datetime_round_trip():
    dt = datetime(2021, 3, 5, 14, 30, 0, 250000, tzinfo=timezone(timedelta(hours=-5)))
    t = TimedInstant.from_datetime(dt)
    assert t.to_datetime() == dt
    naive = TimedInstant.from_datetime(datetime(2021, 3, 5, 14, 30), fallback_offset_minutes=60)
    assert not naive.zone_aware and format_timestamp(naive) == "2021-03-05 14:30:00"


@given(st.integers(-719_162, 2_932_896))
def test_civil_days_against_datetime(days):
    d = datetime(1970, 1, 1) + timedelta(days=days)
    assert days_from_civil(d.year, d.month, d.day) == days
    assert civil_from_days(days) == (d.year, d.month, d.day)


def test_parse_many_matches_scalar_and_mixed_layouts():
    texts = [
        "2021-03-05 14:30:00 +00:00",
        "2021-03-05 14:30:00",
        "2021-03-05T14:30:00Z",
        "2021-03-05 14:30:00.250 -05:00",
        "2021-03-05 14:30:00.250",
        "2024-02-29 23:59:59 +14:00",
    ]
    e, o, a = parse_many(texts, 90)
    for i, s in enumerate(texts):
        t = parse_timestamp(s, 90)
        assert (e[i], o[i], a[i]) == (t.epoch_ms, t.offset_minutes, t.zone_aware)


def test_parse_many_error_names_index():
    with pytest.raises(TimestampError, match="sample 2"):
        parse_many(["2021-03-05 14:30:00", "2021-03-05 14:35:00", "2021-02-30 00:00:00"], 0)
    with pytest.raises(TimestampError, match="sample 1"):
        parse_many(["2021-03-05 14:30:00 +00:00", "2021-13-05 14:30:00 +00:00"], 0)


def test_format_many_matches_scalar():
    ts = [parse_timestamp(s, -300) for s in
          ["2021-03-05 14:30:00 +00:00", "2021-03-05 14:30:00", "1999-12-31 23:59:59.999 +05:45"]]
    got = format_many([t.epoch_ms for t in ts], [t.offset_minutes for t in ts], [t.zone_aware for t in ts])
    assert got == [format_timestamp(t) for t in ts]


def _normalize(y, mo, d, h, mi, s, frac, sep, off):
    """Independent rendering of the canonical form of a generated stamp."""
    out = f"{y:04d}-{mo:02d}-{d:02d} {h:02d}:{mi:02d}:{s:02d}"
    ms = int((frac + "00")[:3]) if frac else 0
    if ms:
        out += f".{ms:03d}"
    if off is not None:
        out += " " + ("+00:00" if off in ("Z", "-00:00", "-0000", "+0000") else (off if ":" in off else off[:3] + ":" + off[3:]))
    return out


@st.composite
def stamps(draw):
    y = draw(st.integers(1, 9999))
    mo = draw(st.integers(1, 12))
    dim = (datetime(y + (mo == 12), mo % 12 + 1, 1) - timedelta(days=1)).day if y < 9999 or mo < 12 else 31
    d = draw(st.integers(1, dim))
    h, mi, s = draw(st.integers(0, 23)), draw(st.integers(0, 59)), draw(st.integers(0, 59))
    frac = draw(st.sampled_from(["", "0", "5", "25", "125", "000", "999999"]))
    sep = draw(st.sampled_from([" ", "T"]))
    oh = draw(st.integers(0, 17))
    om = draw(st.integers(0, 59))
    sign = draw(st.sampled_from("+-"))
    off = draw(st.sampled_from([None, "Z", f"{sign}{oh:02d}:{om:02d}", f"{sign}{oh:02d}{om:02d}"]))
    text = f"{y:04d}-{mo:02d}-{d:02d}{sep}{h:02d}:{mi:02d}:{s:02d}"
    if frac:
        text += "." + frac
    if off is not None:
        text += draw(st.sampled_from(["", " "])) + off
    return text, _normalize(y, mo, d, h, mi, s, frac, sep, off)


@settings(max_examples=300)
@given(stamps(), st.integers(-1080, 1080))
def test_format_parse_round_trip(pair, fallback):
    text, canonical = pair
    t = parse_timestamp(text, fallback)
    assert format_timestamp(t) == canonical
    assert parse_timestamp(canonical, fallback) == t


@settings(max_examples=200)
@given(stamps(), st.integers(-1080, 1080), st.integers(-1080, 1080))
def test_fallback_never_affects_aware(pair, f1, f2):
    text, _ = pair
    a, b = parse_timestamp(text, f1), parse_timestamp(text, f2)
    if a.zone_aware:
        assert a == b


def test_cli_helpers():
    assert parse_offset("-05:00") == -300
    assert parse_offset("+0530") == 330
    assert parse_offset("Z") == 0
    assert parse_duration("5m") == 300
    assert parse_duration("1h") == 3600
    assert parse_duration("90") == 90
    with pytest.raises(ValueError):
        parse_duration("five minutes")


def test_empty_parse_many():
    e, o, a = parse_many([], 0)
    assert len(e) == len(o) == len(a) == 0
    assert format_many(np.array([], dtype=np.int64), [], []) == []
