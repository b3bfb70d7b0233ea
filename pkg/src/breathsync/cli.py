"""``breathsync`` command line: simulate, envelope, analyze, stats.

Exit codes: 0 success, 1 usage error, 2 data or validation error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from collections import defaultdict
from pathlib import Path
from typing import Sequence

import numpy as np

from . import engine, stats
from .analysis import CONDITION_ORDER, METRIC_ORDER, analyze_session
from .simloop import ALL_MODALITIES, CohortSpec, run_closed_loop
from .streams import Condition, IngestError, SignalTrack, Unit, load_session, save_session

logger = logging.getLogger("breathsync")

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2
METRICS_HEADER = ("participant", "condition", "metric", "value")
COHORT_MANIFEST = "cohort.json"
OUTLIER_METRIC_PREFIXES = ("cnv_",)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _fmt(x: float) -> str:
    return format(float(x), ".9g")


# ---------------------------------------------------------------- simulate


def cmd_simulate(args) -> int:
    lo, hi = args.coupling if len(args.coupling) == 2 else (args.coupling[0], args.coupling[0])
    try:
        cohort = CohortSpec(
            n_participants=args.participants,
            rate_range_bpm=tuple(args.rate_range),
            coupling_range=(lo, hi),
            master_seed=args.seed,
            n_trials=args.trials,
            modalities=tuple(dict.fromkeys(["breathing", *args.modalities])),
            eeg_rate_hz=args.eeg_rate,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    out = Path(args.out)
    logger.info("simulating %d participants (K in [%g, %g], seed %d)", cohort.n_participants, lo, hi,
                args.seed)
    sessions = []
    for rec in run_closed_loop(cohort):
        data_path, man_path = save_session(rec, out)
        sessions.append({"participant": rec.participant_id, "data": data_path.name,
                         "manifest": man_path.name})
        logger.info("wrote %s", data_path)
    manifest = {"master_seed": args.seed, "n_participants": cohort.n_participants,
                "coupling_range": [lo, hi], "rate_range_bpm": list(cohort.rate_range_bpm),
                "n_trials": cohort.n_trials, "modalities": list(cohort.modalities),
                "eeg_rate_hz": cohort.eeg_rate_hz, "sessions": sessions}
    (out / COHORT_MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n",
                                       encoding="utf-8")
    return EXIT_OK


# ---------------------------------------------------------------- envelope


def _read_breath(path: Path) -> tuple[np.ndarray, np.ndarray]:
    if path.suffix.lower() == ".csv":
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or [h.strip() for h in header[:2]] != ["t", "v"]:
                raise IngestError("breath CSV must start with a 't,v' header", 1, str(path))
            ts, vs = [], []
            for lineno, row in enumerate(reader, start=2):
                try:
                    ts.append(float(row[0]))
                    vs.append(float(row[1]))
                except (ValueError, IndexError) as exc:
                    raise IngestError(f"bad row {row!r}", lineno, str(path)) from exc
        track = SignalTrack("breathing", Unit.NU, 17.0, ts, vs)
        return track.t, track.v
    rec = load_session(path)
    if "breathing" not in rec.tracks:
        raise IngestError("session has no breathing channel", None, str(path))
    tr = rec.tracks["breathing"]
    return tr.t, tr.v


def cmd_envelope(args) -> int:
    if args.mode == "ft":
        mode = engine.FixedTempo()
    elif args.mode == "pt":
        if args.baseline_bpm is None:
            raise UsageError("--mode pt needs --baseline-bpm")
        mode = engine.PersonalizedTempo(args.baseline_bpm)
    else:
        mode = engine.PersonalizedEnvelope()
    if args.mode == "pe":
        if args.breath_in is None:
            raise UsageError("--mode pe needs --breath-in")
        bt, bv = _read_breath(Path(args.breath_in))
        curve = engine.render_gain_curve(mode, args.duration, breath_t=bt, breath_v=bv,
                                         control_rate=args.control_rate)
    else:
        if args.duration is None:
            raise UsageError(f"--mode {args.mode} needs --duration")
        curve = engine.render_gain_curve(mode, args.duration, control_rate=args.control_rate)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="", encoding="utf-8") as fh:
        fh.write("t,gain\n")
        for t, g in zip(curve.times.tolist(), curve.gains.tolist()):
            fh.write(f"{_fmt(t)},{_fmt(g)}\n")
    logger.info("wrote %d gains to %s", len(curve), out)
    if args.wav_out:
        audio = engine.apply_gain(engine.synth_drone(curve.duration, seed=args.seed), curve)
        Path(args.wav_out).parent.mkdir(parents=True, exist_ok=True)
        engine.write_wav(args.wav_out, audio)
        logger.info("wrote %s", args.wav_out)
    return EXIT_OK


# ---------------------------------------------------------------- analyze


def _session_files(inputs: Sequence[str]) -> list[Path]:
    files: list[Path] = []
    for item in inputs:
        p = Path(item)
        if p.is_dir():
            files.extend(sorted(p.glob("*.jsonl")))
        elif p.exists():
            files.append(p)
        else:
            raise FileNotFoundError(f"{p}: no such file or directory")
    if not files:
        raise FileNotFoundError(f"no session files found in {', '.join(inputs)}")
    return files


def cmd_analyze(args) -> int:
    rows = []
    for path in _session_files(args.inputs):
        logger.info("analysing %s", path)
        rec = load_session(path)
        try:
            rows.extend(analyze_session(rec))
        except ValueError as exc:
            raise ValueError(f"{path}: {exc}") from exc
    rank_c = {c: i for i, c in enumerate(CONDITION_ORDER)}
    rank_m = {m: i for i, m in enumerate(METRIC_ORDER)}
    rows.sort(key=lambda r: (r.participant, rank_c[r.condition], rank_m[r.metric]))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "metrics.csv", "w", newline="", encoding="utf-8") as fh:
        fh.write(",".join(METRICS_HEADER) + "\n")
        for r in rows:
            fh.write(f"{r.participant},{r.condition.value},{r.metric},{_fmt(r.value)}\n")
    logger.info("wrote %d metric rows", len(rows))
    return EXIT_OK


# ---------------------------------------------------------------- stats


def read_metrics(path: Path) -> dict[str, dict[Condition, list[float]]]:
    table: dict[str, dict[Condition, list[float]]] = defaultdict(lambda: defaultdict(list))
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != METRICS_HEADER:
            raise IngestError(f"header must be {','.join(METRICS_HEADER)}", 1, str(path))
        for lineno, row in enumerate(reader, start=2):
            if len(row) != 4:
                raise IngestError(f"expected 4 columns, got {len(row)}", lineno, str(path))
            try:
                cond = Condition(row[1])
                value = float(row[3])
            except ValueError as exc:
                raise IngestError(str(exc), lineno, str(path)) from exc
            table[row[2]][cond].append(value)
    return table


def _json_num(x):
    if x is None:
        return None
    x = float(x)
    if math.isnan(x):
        return None
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return x


def _pairwise(a, b, method: str) -> stats.PairwiseResult:
    if method == "mwu":
        return stats.mann_whitney_u(a, b)
    return stats.independent_t(a, b, "welch" if method == "welch" else "student")


def metric_report(metric: str, groups: dict[Condition, list[float]], method: str,
                  outlier_z: float | None) -> dict:
    conds = [c for c in CONDITION_ORDER if c in groups]
    samples: dict[Condition, np.ndarray] = {}
    per_cond = {}
    for c in conds:
        arr = np.asarray(groups[c], dtype=float)
        finite = arr[np.isfinite(arr)]
        removed: list[float] = []
        if outlier_z is not None and metric.startswith(OUTLIER_METRIC_PREFIXES) and finite.size >= 2:
            finite, rem = stats.z_outlier_filter(finite, outlier_z)
            removed = [float(v) for v in rem]
        samples[c] = finite
        entry = {"n": int(finite.size), "n_missing": int(arr.size - np.isfinite(arr).sum()),
                 "removed_outliers": removed}
        if finite.size:
            b = stats.box_stats(finite)
            entry.update(mean=_json_num(finite.mean()), median=b.median, q1=b.q1, q3=b.q3,
                         whisker_lo=b.whisker_lo, whisker_hi=b.whisker_hi,
                         outliers=[float(v) for v in b.outliers])
        per_cond[c.value] = entry
    report: dict = {"conditions": per_cond}
    try:
        res = stats.one_way_anova([samples[c] for c in conds])
        report["anova"] = {"f": _json_num(res.f_stat), "p": _json_num(res.p_value),
                           "df": [res.df_between, res.df_within],
                           "stars": stats.significance_stars(res.p_value)}
    except stats.DegenerateDataError as exc:
        report["anova"] = {"error": str(exc)}
    pairs = []
    for i, a in enumerate(conds):
        for b in conds[i + 1:]:
            entry = {"a": a.value, "b": b.value}
            try:
                r = _pairwise(samples[a], samples[b], method)
                entry.update(method=r.method.value, statistic=_json_num(r.statistic),
                             df=_json_num(r.df), p=_json_num(r.p_value),
                             stars=stats.significance_stars(r.p_value))
            except stats.DegenerateDataError as exc:
                entry["error"] = str(exc)
            pairs.append(entry)
    report["pairwise"] = pairs
    return report


def cmd_stats(args) -> int:
    table = read_metrics(Path(args.metrics))
    rank = {m: i for i, m in enumerate(METRIC_ORDER)}
    metrics = sorted(table, key=lambda m: (rank.get(m, len(rank)), m))
    report = {
        "pairwise_method": args.pairwise,
        "outlier_z": args.outlier_z,
        "legend": {"****": "p <= .0001", "***": ".0001 < p <= .001", "**": ".001 < p <= .01",
                   "*": ".01 < p <= .05", "ns": ".05 < p <= .1", "": "p > .1"},
        "metrics": {m: metric_report(m, table[m], args.pairwise, args.outlier_z) for m in metrics},
    }
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    text = json.dumps(report, indent=2, sort_keys=True, allow_nan=False)
    (out / "report.json").write_text(text + "\n", encoding="utf-8")
    logger.info("wrote report for %d metrics", len(metrics))
    return EXIT_OK


# ---------------------------------------------------------------- wiring


def _positive_int(s: str) -> int:
    v = int(s)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="master random seed")
    common.add_argument("--out", required=True, help="output directory (envelope: gains CSV path)")
    common.add_argument("--log-level", default="WARNING",
                        choices=["DEBUG", "INFO", "WARNING", "ERROR"])

    p = _Parser(prog="breathsync", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", parents=[common], help="simulate a closed-loop cohort")
    s.add_argument("--participants", type=int, default=19)
    s.add_argument("--coupling", type=float, nargs="+", default=[0.3], metavar="K",
                   help="coupling K (rad/s), or a low/high range")
    s.add_argument("--rate-range", type=float, nargs=2, default=[10.0, 22.0], metavar=("LO", "HI"))
    s.add_argument("--trials", type=_positive_int, default=40)
    s.add_argument("--eeg-rate", type=float, default=500.0)
    s.add_argument("--modalities", nargs="+", choices=ALL_MODALITIES, default=list(ALL_MODALITIES))
    s.set_defaults(func=cmd_simulate)

    e = sub.add_parser("envelope", parents=[common], help="render an envelope gain curve")
    e.add_argument("--mode", choices=["ft", "pt", "pe"], required=True)
    e.add_argument("--baseline-bpm", type=float)
    e.add_argument("--control-rate", type=float, default=engine.DEFAULT_CONTROL_RATE_HZ)
    e.add_argument("--duration", type=float)
    e.add_argument("--breath-in", help="session JSONL or t,v CSV (PE mode)")
    e.add_argument("--wav-out", help="also write a drone with the envelope applied")
    e.set_defaults(func=cmd_envelope)

    a = sub.add_parser("analyze", parents=[common], help="extract per-block metrics")
    a.add_argument("inputs", nargs="+", help="session JSONL files or directories")
    a.set_defaults(func=cmd_analyze)

    st = sub.add_parser("stats", parents=[common], help="box stats, ANOVA and pairwise tests")
    st.add_argument("metrics", help="metrics.csv from analyze")
    st.add_argument("--pairwise", choices=["student", "welch", "mwu"], default="student")
    st.add_argument("--outlier-z", type=float, default=3.0,
                    help="z limit for CNV outlier removal (negative disables)")
    st.set_defaults(func=cmd_stats)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:          # --help or an argparse usage error
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(level=getattr(logging, args.log_level), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "outlier_z", None) is not None and args.outlier_z < 0:
        args.outlier_z = None
    if args.command == "simulate" and len(args.coupling) > 2:
        parser.print_usage(sys.stderr)
        print("breathsync: error: --coupling takes one value or a low/high pair", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"breathsync: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, KeyError, OSError, stats.DegenerateDataError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"breathsync: error: {msg}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    raise SystemExit(main())
