"""
Reading, writing and validating a subject file
==============================================

"""

# a subject file is plain JSON: one object per signal plus metadata
import json
import diax

doc = {
    "unique_id": "DemoTrial-001",
    "cgm": {"time": ["2021-03-05 14:35:00", "2021-03-05 14:30:00"], "value": [104.5, 101]},
    "bolus": {"time": ["2021-03-05 14:31:00 -05:00"], "value": [2.5]},
    "metadata": {
        "cgm": {"unit": "mg/dL", "description": "CGM values"},
        "bolus": {"unit": "U", "description": "meal bolus", "insulin": "insulin lispro"},
    },
}

# naive stamps need an offset to become instants; -05:00 here
rec = diax.read_subject(json.dumps(doc), fallback_offset_minutes=-300)
print(rec.keys, len(rec.signals["cgm"]))

# the writer sorts keys and samples, so the file is canonical
text = diax.write_subject(rec)
print(text.decode())
assert diax.write_subject(diax.read_subject(text, -300)) == text

# validation never raises, it collects findings
report = diax.validate_subject(rec)
for f in report.findings:
    print(f.severity, f.code, f.key, f.message)
print("passing:", report.passing)

# a value in mmol/L slips through the parser but not the plausibility check
doc["cgm"]["value"] = [5.5, 6.1]
report = diax.validate_subject(diax.read_subject(json.dumps(doc)))
print(report.to_jsonl("subj_DemoTrial_001.json"))
