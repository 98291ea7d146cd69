"""``diax`` command-line entry point.

Exit codes: 0 success, 1 validation or data errors, 2 usage errors.
Diagnostics go to stderr; data goes to ``--out`` files or stdout.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import align, convert, metrics, model, plotout, validate
from .errors import DiaxError, NoData
from .timeparse import TimedInstant, parse_duration, parse_offset, parse_timestamp

log = logging.getLogger("diax")

COMMANDS = ("validate", "convert", "synth", "align", "metrics", "agp", "agp-plot", "outcomes-plot", "info")


class UsageError(Exception):
    pass


@dataclass(frozen=True)
class GlobalConfig:
    fallback_offset_minutes: int = 0
    strict: bool = True
    threads: int = 1

    def __post_init__(self):
        if self.threads < 1:
            raise UsageError("--threads must be at least 1")


def _offset_arg(text):
    try:
        return parse_offset(text)
    except DiaxError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _duration_arg(text):
    try:
        return parse_duration(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--fallback-offset", type=_offset_arg, default=0, metavar="+HH:MM",
                        help="offset assumed for timestamps without zone (default +00:00)")
    mode = common.add_mutually_exclusive_group()
    mode.add_argument("--strict", dest="strict", action="store_true", default=True)
    mode.add_argument("--lenient", dest="strict", action="store_false")
    common.add_argument("--threads", type=int, default=1)
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="diax", description="DIAX diabetes time-series toolkit")
    sub = p.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    s = sub.add_parser("validate", parents=[common], help="validate a subject file or directory")
    s.add_argument("path")
    s.add_argument("--report", help="write JSON-lines findings here instead of stdout")

    s = sub.add_parser("convert", parents=[common], help="convert CSV exports with a mapping spec")
    s.add_argument("--spec", required=True, help="mapping-spec JSON file or shipped spec name")
    s.add_argument("--in", dest="inp", required=True, help="directory of CSV tables")
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--skip-bad-rows", action="store_true")

    s = sub.add_parser("synth", parents=[common], help="write a deterministic synthetic subject")
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--days", type=int, required=True)
    s.add_argument("--step", type=int, default=5, choices=(1, 5, 15), help="minutes")
    s.add_argument("--out", required=True)

    s = sub.add_parser("align", parents=[common], help="resample a subject onto a grid")
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--start")
    s.add_argument("--end")
    s.add_argument("--step", type=_duration_arg)
    s.add_argument("--preset", choices=("replay", "advisor", "custom"), default="custom")
    s.add_argument("--policy", action="append", default=[], metavar="KEY=SPEC",
                   help="e.g. cgm=linear:30m, basal_rate=integrate, bolus=sum, weight=hold, "
                        "cgm=preserve:linear:30m")
    s.add_argument("--out", required=True)

    s = sub.add_parser("metrics", parents=[common], help="glycemic metrics per window")
    s.add_argument("--in", dest="inp", required=True, help="subject file or directory")
    s.add_argument("--slice", default="day", help="day | week | all | custom:<start>:<end> | rolling:<len>:<stride>")
    s.add_argument("--duration-weighted", action="store_true")
    s.add_argument("--out", required=True)

    s = sub.add_parser("agp", parents=[common], help="AGP percentile table")
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--bin", type=_duration_arg, default=300.0)
    s.add_argument("--start")
    s.add_argument("--end")
    s.add_argument("--out", required=True)

    s = sub.add_parser("agp-plot", parents=[common], help="AGP figure (one or two weeks) as SVG")
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--weeks", help="comma-separated week start dates YYYY-MM-DD (at most two)")
    s.add_argument("--bin", type=_duration_arg, default=300.0)
    s.add_argument("--out", required=True)

    s = sub.add_parser("outcomes-plot", parents=[common], help="metrics-over-time figure as SVG")
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--slice", default="day")
    s.add_argument("--metrics", default="tir")
    s.add_argument("--out", required=True)

    s = sub.add_parser("info", parents=[common], help="summarize a subject file")
    s.add_argument("path")
    return p


# -- helpers -----------------------------------------------------------------


def _subject_files(path):
    path = Path(path)
    if path.is_dir():
        files = sorted(path.glob("subj_*.json"))
        others = [q for q in path.iterdir() if q.is_file() and q not in files]
        if others:
            log.info("ignoring %d non-subject file(s) in %s", len(others), path)
        return files
    return [path]


def _load(path, cfg):
    return model.load_subject(path, cfg.fallback_offset_minutes, strict=cfg.strict)


def _stamp(text, cfg):
    return parse_timestamp(text, cfg.fallback_offset_minutes)


def _parse_custom(body, cfg):
    for i, ch in enumerate(body):
        if ch != ":":
            continue
        try:
            return _stamp(body[:i], cfg), _stamp(body[i + 1:], cfg)
        except DiaxError:
            continue
    raise UsageError(f"cannot split custom window {body!r} into <start>:<end>")


def _window_spec(text, cfg):
    if text == "day":
        return metrics.ByDay()
    if text == "week":
        return metrics.ByWeek()
    if text.startswith("custom:"):
        start, end = _parse_custom(text[len("custom:"):], cfg)
        if not start < end:
            raise UsageError("custom window start must precede end")
        return metrics.Custom(start, end)
    if text.startswith("rolling:"):
        parts = text.split(":")
        if len(parts) != 3:
            raise UsageError("rolling slice is rolling:<length>:<stride>")
        try:
            return metrics.Rolling(parse_duration(parts[1]), parse_duration(parts[2]))
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    if text == "all":
        return None
    raise UsageError(f"unknown slice {text!r}")


def _policy(text):
    kind, _, rest = text.partition(":")
    if kind == "linear":
        return align.Linear(parse_duration(rest) if rest else 1800.0)
    if kind == "hold":
        return align.HoldUntilNext()
    if kind == "sum":
        return align.SumIntoBin()
    if kind == "integrate":
        return align.IntegrateRate()
    if kind == "preserve":
        inner_kind, _, gap = rest.partition(":")
        gap_s = parse_duration(gap) if gap else 1800.0
        inner = align.Linear(gap_s) if inner_kind == "linear" else align.HoldUntilNext()
        if inner_kind not in ("linear", "hold"):
            raise UsageError(f"preserve wraps linear or hold, got {inner_kind!r}")
        return align.PreserveMissing(inner, gap_s)
    raise UsageError(f"unknown policy {text!r}")


def _write_text(path, text):
    if path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def _write_bytes(path, data):
    if path == "-":
        sys.stdout.buffer.write(data)
    else:
        Path(path).write_bytes(data)


def _fmt(v):
    if isinstance(v, float):
        return "" if math.isnan(v) else repr(v)
    return str(v)


# -- commands ----------------------------------------------------------------


def cmd_validate(args, cfg):
    path = Path(args.path)
    if path.is_dir():
        result = validate.validate_dataset(path, cfg.fallback_offset_minutes, workers=cfg.threads)
        s = result.summary
        lines = result.to_jsonl()
        failing = sum(not r.passing for r in result.reports.values())
        print(f"{s.subjects} subject(s), {s.files} file(s), {s.patient_hours:.1f} patient-hours; "
              f"{failing} failing; codes: {s.code_counts or 'none'}", file=sys.stderr)
        passing = result.passing
    else:
        report, _ = validate._validate_file(path, cfg.fallback_offset_minutes)
        lines = report.to_jsonl(path.name)
        c = report.counts
        print(f"{path.name}: {c['ERROR']} error(s), {c['WARNING']} warning(s)", file=sys.stderr)
        passing = report.passing
    if args.report:
        _write_text(args.report, lines)
    else:
        sys.stdout.write(lines)
    return 0 if passing else 1


def cmd_convert(args, cfg):
    spec_arg = Path(args.spec)
    if spec_arg.is_file():
        spec = convert.load_mapping_spec(spec_arg.read_text(encoding="utf-8"))
    else:
        spec = convert.builtin_spec(args.spec)
    tables = convert.load_tables(args.inp)
    clog = convert.ConversionLog()
    records = convert.convert_tables(tables, spec, cfg.fallback_offset_minutes, args.skip_bad_rows, clog)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    prefix = spec.trial_name + "-"
    for rec in records:
        sid = rec.unique_id[len(prefix):]
        model.save_subject(rec, out / model.format_subject_filename(spec.trial_name, sid))
    print(f"converted {len(records)} subject(s); {len(clog.skipped)} row(s) skipped, "
          f"{clog.blank} blank value cell(s)", file=sys.stderr)
    return 0


def cmd_synth(args, cfg):
    if args.days < 1:
        raise UsageError("--days must be at least 1")
    rec = convert.generate_synthetic(args.seed, args.days, args.step)
    _write_bytes(args.out, model.write_subject(rec))
    return 0


def cmd_align(args, cfg):
    rec = _load(args.inp, cfg)
    start = _stamp(args.start, cfg) if args.start else None
    end = _stamp(args.end, cfg) if args.end else None
    policies = {}
    for item in args.policy:
        key, sep, spec = item.partition("=")
        if not sep:
            raise UsageError(f"--policy expects KEY=SPEC, got {item!r}")
        policies[key] = _policy(spec)
    preset = None if args.preset == "custom" else args.preset
    step = args.step or (align.PRESETS[preset].step_seconds if preset else 300)
    if start is None or end is None:
        auto = align.grid_for(rec.signals["cgm"], step)
        start, end = start or auto.start, end or auto.end
    grid = align.make_grid(start, end, step)
    frame = align.align_subject(rec, grid, policies or None, preset=preset, strict=cfg.strict)
    _write_text(args.out, frame.to_csv())
    return 0


def _metrics_rows(path, cfg, spec, weighting):
    rec = _load(path, cfg)
    cgm = rec.signals["cgm"]
    if spec is None:
        # whole span: first sample to one sampling period past the last
        t = cgm.sorted()
        if len(t) == 0:
            raise NoData("no cgm samples")
        first, last = int(t.epoch_ms[0]), int(t.epoch_ms[-1])
        gaps = np.diff(t.epoch_ms)
        period = int(np.median(gaps[gaps > 0])) if np.any(gaps > 0) else 1
        off, aware = int(t.offset_minutes[0]), bool(t.zone_aware[0])
        w = metrics.Window(TimedInstant.from_epoch_ms(first, off, aware),
                           TimedInstant.from_epoch_ms(last + period, off, aware))
        reports = [metrics.glycemic_summary(cgm, w, weighting=weighting)]
    else:
        reports = metrics.outcomes_over_time(rec, spec, weighting=weighting)
    return [{"file": Path(path).name, "subject_id": rec.unique_id, **r.to_row()} for r in reports]


def cmd_metrics(args, cfg):
    spec = _window_spec(args.slice, cfg)
    files = _subject_files(args.inp)
    weighting = "duration" if args.duration_weighted else "count"
    if cfg.threads > 1:
        with ThreadPoolExecutor(cfg.threads) as pool:
            chunks = list(pool.map(lambda f: _metrics_rows(f, cfg, spec, weighting), files))
    else:
        chunks = [_metrics_rows(f, cfg, spec, weighting) for f in files]
    buf = io.StringIO()
    fields = ["file", "subject_id", "window_start", "window_end", *metrics.REPORT_METRICS]
    w = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
    w.writeheader()
    for rows in chunks:
        for row in rows:
            w.writerow({k: _fmt(v) for k, v in row.items()})
    _write_text(args.out, buf.getvalue())
    print(f"{sum(map(len, chunks))} window report(s) from {len(files)} file(s)", file=sys.stderr)
    return 0


def _bin_minutes(seconds):
    minutes = seconds / 60
    if minutes != int(minutes) or int(minutes) <= 0 or 1440 % int(minutes):
        raise UsageError("--bin must be a whole number of minutes dividing 24h")
    return int(minutes)


def cmd_agp(args, cfg):
    rec = _load(args.inp, cfg)
    window = None
    if args.start or args.end:
        if not (args.start and args.end):
            raise UsageError("--start and --end go together")
        window = metrics.Window(_stamp(args.start, cfg), _stamp(args.end, cfg))
    prof = metrics.agp_profile(rec.signals["cgm"], window, _bin_minutes(args.bin))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["bin_start", "n", "p5", "p25", "p50", "p75", "p95"])
    for k in range(prof.n_bins):
        m = k * prof.bin_minutes
        w.writerow([f"{m // 60:02d}:{m % 60:02d}", int(prof.counts[k]),
                    *(_fmt(float(c[k])) for c in prof.curves())])
    _write_text(args.out, buf.getvalue())
    return 0


def cmd_agp_plot(args, cfg):
    rec = _load(args.inp, cfg)
    cgm = rec.signals["cgm"]
    bin_minutes = _bin_minutes(args.bin)
    if args.weeks:
        dates = [d.strip() for d in args.weeks.split(",") if d.strip()]
        if not 1 <= len(dates) <= 2:
            raise UsageError("--weeks takes one or two dates")
        off = int(cgm.offset_minutes[0]) if len(cgm) else cfg.fallback_offset_minutes
        aware = bool(cgm.zone_aware[0]) if len(cgm) else False
        profiles = []
        for d in dates:
            try:
                start = parse_timestamp(f"{d} 00:00:00", off)
            except DiaxError as exc:
                raise UsageError(f"bad week date {d!r}: {exc}") from None
            start = TimedInstant(start.epoch_seconds, 0, off, aware)
            window = metrics.Window(start, start.shifted(7 * 86400))
            profiles.append(metrics.agp_profile(cgm, window, bin_minutes, label=f"week of {d}"))
    else:
        profiles = [metrics.agp_profile(cgm, None, bin_minutes, label=rec.unique_id)]
    _write_bytes(args.out, plotout.render_agp(profiles))
    return 0


def cmd_outcomes_plot(args, cfg):
    rec = _load(args.inp, cfg)
    spec = _window_spec(args.slice, cfg)
    if spec is None:
        raise UsageError("outcomes-plot needs a slicing mode other than 'all'")
    series = metrics.outcomes_over_time(rec, spec)
    names = [m.strip() for m in args.metrics.split(",") if m.strip()]
    _write_bytes(args.out, plotout.render_outcomes(series, names))
    return 0


def cmd_info(args, cfg):
    rec = _load(args.path, cfg)
    lines = [f"unique_id: {rec.unique_id}"]
    for key in rec.keys:
        sig = rec.signals[key]
        line = f"{key}: {len(sig)} sample(s) [{rec.metadata[key].unit}]"
        if len(sig):
            s = sig.sorted()
            first = TimedInstant.from_epoch_ms(int(s.epoch_ms[0]), int(s.offset_minutes[0]), bool(s.zone_aware[0]))
            last = TimedInstant.from_epoch_ms(int(s.epoch_ms[-1]), int(s.offset_minutes[-1]), bool(s.zone_aware[-1]))
            line += f" {first} .. {last}"
        lines.append(line)
    lines.append(f"patient_hours: {validate.cgm_hours(rec):.2f}")
    sys.stdout.write("\n".join(lines) + "\n")
    return 0


_HANDLERS = {
    "validate": cmd_validate,
    "convert": cmd_convert,
    "synth": cmd_synth,
    "align": cmd_align,
    "metrics": cmd_metrics,
    "agp": cmd_agp,
    "agp-plot": cmd_agp_plot,
    "outcomes-plot": cmd_outcomes_plot,
    "info": cmd_info,
}


def _join_negative_offsets(argv):
    # argparse would read "-05:00" as an option
    out, it = [], iter(argv)
    for a in it:
        if a == "--fallback-offset":
            nxt = next(it, None)
            if nxt is not None and nxt.startswith("-") and len(nxt) > 1 and nxt[1].isdigit():
                out.append(f"{a}={nxt}")
                continue
            out.append(a)
            if nxt is not None:
                out.append(nxt)
            continue
        out.append(a)
    return out


def dispatch(argv):
    parser = _build_parser()
    try:
        args = parser.parse_args(_join_negative_offsets(list(argv)))
    except SystemExit as exc:
        return 0 if exc.code == 0 else 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="diax: %(message)s", stream=sys.stderr)
    try:
        cfg = GlobalConfig(args.fallback_offset, args.strict, args.threads)
        return _HANDLERS[args.command](args, cfg)
    except UsageError as exc:
        print(f"diax {args.command}: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 2
    except (DiaxError, OSError, KeyError, ValueError) as exc:
        print(f"diax {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


def main():
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
