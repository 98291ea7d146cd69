"""
Putting signals on a common grid
================================

"""

import numpy as np
import diax
from diax.timeparse import parse_timestamp

# 5-min CGM for six hours with one hour missing after 02:00
minutes = np.array([m for m in range(0, 360, 5) if not 120 < m < 180])
t0 = parse_timestamp("2021-03-01 00:00:00 +00:00")
ms = t0.epoch_ms + minutes * 60_000
cgm = diax.Signal(ms, np.zeros(len(ms)), np.ones(len(ms), bool), 130 + 30 * np.sin(minutes / 50))
basal = diax.Signal([t0.epoch_ms, t0.epoch_ms + 3 * 3_600_000], [0, 0], [True, True], [1.0, 0.5])
bolus = diax.Signal([t0.epoch_ms + 95 * 60_000], [0], [True], [3.0])
rec = diax.SubjectRecord(
    "Demo-1",
    {"cgm": cgm, "basal_rate": basal, "bolus": bolus},
    {"cgm": diax.SignalMetadata("mg/dL", "CGM"), "basal_rate": diax.SignalMetadata("U/h", "basal"),
     "bolus": diax.SignalMetadata("U", "bolus")},
)

# replay: 5-min grid, interpolated through the gap and edge-filled
replay = diax.align_preset(rec, "replay")
print("replay missing cgm cells:", replay.missing_count("cgm"), "of", len(replay.grid))

# advisor: 15-min grid that keeps the hole
advisor = diax.align_preset(rec, "advisor")
print(advisor.to_csv())

# basal is integrated per bin, so bin totals add up to delivered insulin
print("basal total (U):", advisor.columns["basal_rate"].sum())

# any key can get its own policy
grid = diax.make_grid(t0, t0.shifted(6 * 3600), 1800)
frame = diax.align_subject(rec, grid, {"cgm": diax.Linear(max_gap_seconds=3600), "bolus": diax.SumIntoBin()})
print(frame.columns["cgm"].round(1))
print(frame.columns["bolus"])
