"""
Converting a trial export with a mapping spec
=============================================

"""

import tempfile
from pathlib import Path

import diax
from diax.convert import ConversionLog, builtin_spec, load_tables

# three CSV tables the way a trial might ship them
src = Path(tempfile.mkdtemp())
(src / "glucose.csv").write_text(
    "PtID,Timestamp,Glucose_mmolL\n"
    "A1,2021-03-05 08:00:00,5.5\n"
    "A1,2021-03-05 08:05:00,5.9\n"
    "A1,2021-03-05 08:10:00,\n"
    "B2,2021-03-05 08:00:00,9.1\n"
)
(src / "insulin.csv").write_text(
    "PtID,Timestamp,BolusU,BasalRateUh\n"
    "A1,2021-03-05 00:00:00,,0.85\n"
    "A1,2021-03-05 07:58:00,4.0,\n"
)
(src / "meals.csv").write_text(
    "PtID,MealTime,CarbsG,MealSize\n"
    "A1,05/03/2021 07:55,45,usual\n"
    "A1,05/03/2021 15:20,15,hypo\n"
)

# the shipped spec converts mmol/L to mg/dL with scale 18.016
spec = builtin_spec("generic_trial")
for rule in spec.rules:
    print(rule.target, "<-", rule.source_table, rule.value_column, "x", rule.scale)

log = ConversionLog()
records = diax.convert_tables(load_tables(src), spec, fallback_offset_minutes=60, log=log)
print("blank cells:", log.blank, "warnings:", log.warnings)

for rec in records:
    print(rec.unique_id, {k: rec.signals[k].values.tolist() for k in rec.keys})
    print("  findings:", diax.validate_subject(rec).codes())

# B2 has cgm only, so the validator reminds us insulin is missing
