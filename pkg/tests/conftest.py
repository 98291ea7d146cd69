import numpy as np
import pytest

from diax.convert import generate_synthetic
from diax.model import Signal, SignalMetadata, SubjectRecord
from diax.timeparse import TimedInstant, days_from_civil

T0 = days_from_civil(2021, 3, 1) * 86400  # 2021-03-01 00:00 UTC, seconds
MIN = 60
HOUR = 3600


def instant(seconds_after_t0=0, offset=0, aware=True):
    return TimedInstant(T0 + int(seconds_after_t0), 0, offset, aware)


def numeric(seconds, values, offset=0, aware=True):
    seconds = np.asarray(seconds, dtype=np.int64)
    return Signal((T0 + seconds) * 1000, np.full(len(seconds), offset), np.full(len(seconds), aware), values)


def cgm_record(seconds, values, uid="T-1", **extra):
    signals = {"cgm": numeric(seconds, values)}
    metadata = {"cgm": SignalMetadata("mg/dL", "CGM values")}
    for key, (sig, meta) in extra.items():
        signals[key] = sig
        metadata[key] = meta
    return SubjectRecord(uid, signals, metadata)


@pytest.fixture(scope="session")
def synth14():
    return generate_synthetic(7, 14)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in mod.RESULTS:
            terminalreporter.write_line(line)
