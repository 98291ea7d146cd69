"""
Glycemic metrics, AGP and outcome figures
=========================================

"""

import tempfile
from pathlib import Path

import diax
from diax.metrics import Window, cohort_aggregate

# two weeks of synthetic data stand in for a real subject
rec = diax.generate_synthetic(seed=2021, days=14)
cgm = rec.signals["cgm"]

daily = diax.outcomes_over_time(rec, diax.ByDay())
for r in daily[:3]:
    print(r.window[0], f"TIR {r.tir_pct:5.1f}%  mean {r.mean:6.1f}  CV {r.cv_pct:4.1f}%  GMI {r.gmi_pct:.2f}%")

# the three band percentages always partition the day
r = daily[0]
print(r.tbr_low_pct + r.tir_pct + r.tar_high_pct)

# per-day reports summarized like a cohort
agg = cohort_aggregate(daily)
print("median daily TIR:", agg["tir_pct"].median, "IQR:", agg["tir_pct"].iqr)

# AGP for each week, then both on one figure
start = cgm.times[0]
weeks = [Window(start.shifted(k * 7 * 86400), start.shifted((k + 1) * 7 * 86400)) for k in range(2)]
profiles = [diax.agp_profile(cgm, w, bin_minutes=15, label=f"week {k + 1}") for k, w in enumerate(weeks)]
print(profiles[0].p50[:8])

out = Path(tempfile.mkdtemp())
(out / "agp_compare.svg").write_bytes(diax.render_agp(profiles))
(out / "outcomes.svg").write_bytes(diax.render_outcomes(daily, ["tir", "cv"]))
print("figures in", out)
