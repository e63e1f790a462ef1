"""``enose`` command line: simulate, process, stereo, reproduce, select-tau.

Exit codes: 0 ok, 1 I/O failure, 2 config or schema error, 3 acceptance
check failed.
"""

from __future__ import annotations

import argparse
import sys
from collections import defaultdict
from pathlib import Path
from typing import Optional, Sequence

from . import csvio
from .acquisition import ConductanceSample
from .config import Config, load_config, sensor_label
from .errors import EnoseError, SchemaError
from .events import Polarity
from .kalman import select_tau
from .pipeline import Stage, process_stream
from .reproduce import FIGURES, reproduce
from .simulator import SIDES, synthesize, trial_id
from .stereo import Direction, SENSOR_PAIRS, StereoTrial, classify_trials

EXIT_OK, EXIT_IO, EXIT_CONFIG, EXIT_ACCEPTANCE = 0, 1, 2, 3


class UsageError(Exception):
    pass


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="TOML config file")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override one config key (repeatable)")
    common.add_argument("--seed", type=int, help="override simulator.seed")

    ap = argparse.ArgumentParser(prog="enose",
                                 description="Event-based e-nose signal chain over CSV streams.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="write synthetic stereo recordings")
    p.add_argument("scenario", type=Path, nargs="?", help="scenario TOML (same format as --config)")
    p.add_argument("-o", "--output-dir", type=Path, default=Path("."))

    p = sub.add_parser("process", parents=[common], help="run CSV inputs through the signal chain")
    p.add_argument("inputs", type=Path, nargs="*")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--to-conductance", dest="stage", action="store_const", const=Stage.CONDUCTANCE)
    g.add_argument("--to-filter", dest="stage", action="store_const", const=Stage.FILTER)
    g.add_argument("--to-events", dest="stage", action="store_const", const=Stage.EVENTS)
    p.add_argument("-o", "--output", type=Path, help="output CSV (default stdout)")

    p = sub.add_parser("stereo", parents=[common], help="classify direction from left/right events")
    p.add_argument("left", type=Path)
    p.add_argument("right", type=Path)
    p.add_argument("manifest", type=Path)
    p.add_argument("-o", "--output", type=Path, help="delay CSV (default stdout)")

    p = sub.add_parser("reproduce", parents=[common], help="emit plot data for one figure")
    p.add_argument("figure", help="one of: " + ", ".join(FIGURES))
    p.add_argument("-o", "--output-dir", type=Path, default=Path("."))

    p = sub.add_parser("select-tau", parents=[common], help="pick tau from a recorded step response")
    p.add_argument("input", type=Path, help="conductance CSV with a single channel")
    p.add_argument("--candidates", type=float, nargs="+", default=[1.0, 3.0, 10.0, 30.0])
    p.add_argument("--threshold", type=float, help="suppression threshold (default events.theta for o)")
    return ap


def _config(args, *extra) -> Config:
    paths = [p for p in (args.config, *extra) if p is not None]
    return load_config(paths, args.overrides, args.seed)


def cmd_simulate(args) -> int:
    cfg = _config(args, args.scenario)
    scenario = cfg.scenario()
    out = args.output_dir
    out.mkdir(parents=True, exist_ok=True)
    trials = synthesize(scenario)
    for side in SIDES:
        with csvio.open_out(out / f"{side}.csv") as fh:
            w = csvio.writer(fh)
            w.writerow(csvio.ACQUISITION)
            for trial in trials:
                chans = list(trial.side(side).values())
                n = len(chans[0].timestamps)
                cols = [(c.channel_id, c.timestamps.tolist(), c.codes.tolist(), c.gains.tolist())
                        for c in chans]
                bits = str(scenario.bit_depth)
                for i in range(n):
                    for cid, ts, codes, gains in cols:
                        w.writerow((repr(ts[i]), cid, codes[i], gains[i], bits))
    gt_rows, manifest = [], []
    for trial in trials:
        truth = trial.truth
        tid = trial_id(trial.trial_index)
        for i, (d, delay) in enumerate(zip(truth.directions, truth.expected_delays)):
            for side in SIDES:
                gt_rows.append((tid, i, side, truth.onsets[(i, side)], d.value, delay))
        manifest.append((tid, truth.stimulus_time, truth.direction.value))
    csvio.write_rows(out / "ground_truth.csv", csvio.GROUND_TRUTH, gt_rows)
    csvio.write_rows(out / "manifest.csv", csvio.MANIFEST, manifest)
    print(f"simulated {len(trials)} trial(s), {len(scenario.puffs)} puff(s) per trial, "
          f"{len(scenario.pairs)} pair(s), seed {scenario.seed}, rng {scenario.rng} -> {out}")
    return EXIT_OK


def cmd_process(args) -> int:
    cfg = _config(args)
    end = args.stage or Stage.EVENTS
    if args.output is None:
        process_stream(args.inputs, sys.stdout, cfg, end)
    else:
        with csvio.open_out(args.output) as fh:
            process_stream(args.inputs, fh, cfg, end)
    return EXIT_OK


def read_on_events(path: Path) -> dict:
    """``{trial_id or "": {pair: sorted ON times}}`` from an events CSV."""
    out: dict = defaultdict(lambda: defaultdict(list))
    for lineno, row in csvio.read_table(path, csvio.EVENTS):
        if row[3].strip().upper() not in ("ON", "OFF"):
            raise SchemaError(f"{path}: row {lineno}: column polarity: expected ON or OFF, got {row[3]!r}")
        if row[3].strip().upper() != Polarity.ON.value:
            continue
        t = csvio.parse_float(row[0], "timestamp_s", lineno)
        cid = row[1]
        trial = cid.rsplit("/", 1)[0] if "/" in cid else ""
        out[trial][sensor_label(cid)].append(t)
    for per_pair in out.values():
        for times in per_pair.values():
            times.sort()
    return out


def read_manifest(path: Path) -> list[tuple[str, float, Direction]]:
    rows = []
    for lineno, row in csvio.read_table(path, csvio.MANIFEST):
        try:
            direction = Direction.parse(row[2])
        except EnoseError as exc:
            raise SchemaError(f"{path}: row {lineno}: column true_direction: {exc}") from None
        rows.append((row[0], csvio.parse_float(row[1], "stimulus_time_s", lineno), direction))
    return rows


def cmd_stereo(args) -> int:
    cfg = _config(args)
    left = read_on_events(args.left)
    right = read_on_events(args.right)
    manifest = read_manifest(args.manifest)
    window = cfg["stereo.window_s"]
    trials = []
    for tid, stim, direction in manifest:
        # channels without a trial prefix belong to every trial
        trials.append(StereoTrial(tid, stim, window, left.get(tid, left.get("", {})),
                                  right.get(tid, right.get("", {})), direction))
    pairs = sorted({p for side in (left, right) for per in side.values() for p in per}) or list(SENSOR_PAIRS)
    summary = classify_trials(trials, cfg["stereo.outlier_cutoff_s"], pairs)
    rows = [(m.trial_id, m.sensor_pair, m.delay, m.outlier, m.inferred_direction.value)
            for m in summary.measurements]
    if args.output is None:
        sys.stdout.write(csvio.to_text(csvio.DELAYS, rows))
        report = sys.stderr
    else:
        csvio.write_rows(args.output, csvio.DELAYS, rows)
        report = sys.stdout
    print("delay = t_left - t_right; negative means left_to_right", file=report)
    print(f"trials {len(trials)}, accuracy among non-outliers {summary.accuracy:.4f}, "
          f"outliers {summary.outlier_count}", file=report)
    for pair, p in summary.pairs.items():
        print(f"  {pair}: n {p.n}, accuracy {p.accuracy:.4f}, outliers {p.outliers}, "
              f"mean delay {p.mean_delay:+.4f} s", file=report)
    if cfg["stereo.fuse"]:
        from .stereo import majority_direction
        by_trial = defaultdict(list)
        for m in summary.measurements:
            by_trial[m.trial_id].append(m)
        hits = sum(majority_direction(by_trial[t.trial_id]) is t.true_direction for t in trials)
        print(f"  fused (majority over pairs): {hits}/{len(trials)} correct", file=report)
    return EXIT_OK


def cmd_reproduce(args) -> int:
    if args.figure not in FIGURES:
        raise UsageError(f"unknown figure {args.figure!r}; valid ids: {', '.join(FIGURES)}")
    args.output_dir.mkdir(parents=True, exist_ok=True)
    result = reproduce(args.figure, args.output_dir, args.overrides, args.seed, args.config)
    for line in result.lines:
        print(line)
    for f in result.files:
        print(f"wrote {f}")
    print(result.status_line())
    return EXIT_OK if result.passed else EXIT_ACCEPTANCE


def cmd_select_tau(args) -> int:
    cfg = _config(args)
    samples = []
    channel = None
    for lineno, row in csvio.read_table(args.input, csvio.CONDUCTANCE):
        if channel is None:
            channel = row[1]
        elif row[1] != channel:
            raise SchemaError(f"row {lineno}: select-tau takes a single channel "
                              f"(saw {channel!r} and {row[1]!r})")
        samples.append(ConductanceSample(csvio.parse_float(row[0], "timestamp_s", lineno),
                                         csvio.parse_float(row[2], "g_rel", lineno),
                                         csvio.parse_float(row[3], "g", lineno), row[1]))
    if not samples:
        raise SchemaError(f"{args.input}: no data rows")
    threshold = args.threshold if args.threshold is not None else cfg.theta_for("o")
    sel = select_tau(samples, args.candidates, threshold, cfg.filter_config(channel))
    print("tau_s,onset_peak,secondary_peak")
    for tau in sorted(sel.onset_peaks):
        print(f"{tau!r},{sel.onset_peaks[tau]!r},{sel.secondary_peaks[tau]!r}")
    print(f"selected tau {sel.tau:g} s" + (" (warning: no candidate suppresses the secondary peak)"
                                           if sel.warning else ""), file=sys.stderr)
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "process": cmd_process, "stereo": cmd_stereo,
            "reproduce": cmd_reproduce, "select-tau": cmd_select_tau}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (EnoseError, UsageError) as exc:
        print(f"enose: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"enose: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
