"""Plot-ready data and pass/fail checks for the four figure datasets.

Each ``figure_*`` function runs a frozen scenario from ``enose/scenarios``,
optionally writes tidy CSVs into ``out_dir`` and returns a
:class:`FigureResult` whose ``passed`` flag reflects the acceptance
thresholds for that figure.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np

from . import csvio
from .acquisition import frames_to_conductance
from .config import Config, load_config
from .events import (
    Polarity,
    Source,
    burst_gaps,
    encode_series,
    event_rate,
    filter_on_events,
    find_bursts,
)
from .kalman import run_filter, secondary_peak, select_tau
from .pipeline import Stage, process_channel
from .simulator import SIDES, SimScenario, lsb_volts, quantize, quantize_codes, synthesize, trial_id
from .stereo import ClassificationSummary, Direction, StereoTrial, classify_trials

FIGURES = ("kalman", "spikes", "delays", "bitdepth")
TAU_CANDIDATES = (1.0, 3.0, 10.0, 30.0)
SECONDARY_FACTOR = 5.0
ONSET_RETENTION = 0.9
MIN_BURST_GAP = 1.0
MAX_OUTLIERS = 3
BIAS_INJECTION = 0.08
BIAS_TOLERANCE = 0.01


@dataclass
class FigureResult:
    name: str
    passed: bool
    lines: list = field(default_factory=list)
    files: list = field(default_factory=list)
    data: dict = field(default_factory=dict)

    def status_line(self) -> str:
        return f"{self.name}: {'PASS' if self.passed else 'FAIL'}"


def scenario_path(name: str) -> Path:
    return Path(str(resources.files("enose") / "scenarios" / f"{name}.toml"))


def load_scenario(name: str, overrides=(), seed: Optional[int] = None,
                  config_path=None) -> tuple[SimScenario, Config]:
    """Frozen scenario ``name``, optionally layered under a config file and overrides."""
    paths = [config_path] if config_path is not None else []
    cfg = load_config(paths + [scenario_path(name)], overrides, seed)
    return cfg.scenario(), cfg


def _write(out_dir: Optional[Path], name: str, header, rows, result: FigureResult) -> None:
    if out_dir is None:
        return
    path = Path(out_dir) / name
    csvio.write_rows(path, header, rows)
    result.files.append(path)


def figure_kalman(out_dir: Optional[Path] = None, overrides=(), seed: Optional[int] = None,
                  config_path=None) -> FigureResult:
    """Decay-term suppression of the late a_hat bump on a single puff."""
    scenario, cfg = load_scenario("single_puff", overrides, seed, config_path)
    theta = cfg.theta_for("o")
    t0 = time.perf_counter()
    trial = synthesize(scenario)[0]
    samples = frames_to_conductance(list(trial.left[scenario.pairs[0]].frames()),
                                    cfg["acquisition.baseline_s"])
    g = [s.g for s in samples]
    ts = [s.timestamp for s in samples]
    base = cfg.filter_config()
    sel = select_tau(samples, TAU_CANDIDATES, theta, base)
    cfg_inf = replace(base, tau=math.inf)
    cfg_sel = replace(base, tau=sel.tau)
    out_inf = run_filter(g, cfg_inf, ts)
    out_sel = run_filter(g, cfg_sel, ts)
    on_inf, sec_inf = secondary_peak(out_inf[:, 2])
    on_sel, sec_sel = secondary_peak(out_sel[:, 2])
    elapsed = time.perf_counter() - t0

    checks = {
        "secondary_inf_ge_5theta": sec_inf >= SECONDARY_FACTOR * theta,
        "secondary_sel_lt_theta": sec_sel < theta,
        "onset_retained": on_sel >= ONSET_RETENTION * on_inf,
    }
    res = FigureResult("kalman", all(checks.values()))
    res.data = dict(selection=sel, onset_inf=on_inf, secondary_inf=sec_inf, onset_sel=on_sel,
                    secondary_sel=sec_sel, elapsed=elapsed, checks=checks, theta=theta)
    res.lines += [
        f"selected tau = {sel.tau:g} s from {list(TAU_CANDIDATES)}",
        f"tau=inf: onset a_hat peak {on_inf:.6g}, secondary {sec_inf:.6g} (>= {SECONDARY_FACTOR * theta:g})",
        f"tau={sel.tau:g}: onset a_hat peak {on_sel:.6g} ({on_sel / on_inf:.1%} of tau=inf), "
        f"secondary {sec_sel:.6g} (< {theta:g})",
    ]
    _write(out_dir, "kalman.csv",
           ("time_s", "g", "a_hat_tau_inf", "a_hat_tau_selected", "o_tau_inf", "o_tau_selected"),
           zip(ts, g, out_inf[:, 2].tolist(), out_sel[:, 2].tolist(),
               out_inf[:, 3].tolist(), out_sel[:, 3].tolist()), res)
    _write(out_dir, "kalman_tau_scan.csv", ("tau_s", "onset_peak", "secondary_peak", "selected"),
           [(tau, sel.onset_peaks[tau], sel.secondary_peaks[tau], tau == sel.tau) for tau in TAU_CANDIDATES]
           + [(math.inf, on_inf, sec_inf, False)], res)
    return res


def figure_spikes(out_dir: Optional[Path] = None, overrides=(), seed: Optional[int] = None,
                  config_path=None) -> FigureResult:
    """Two puffs 5 s apart: o-events split into two bursts, g-events may merge."""
    scenario, cfg = load_scenario("two_puff", overrides, seed, config_path)
    trial = synthesize(scenario)[0]
    bin_s = cfg["events.histogram_bin_s"]
    span = (0.0, scenario.duration)
    trace_rows, event_rows, rate_rows = [], [], []
    ok = True
    per_channel = {}
    for side in SIDES:
        for pair, ch in trial.side(side).items():
            cid = f"{side}/{pair}"
            rows = process_channel(cid, ch.timestamps.tolist(), ch.codes.tolist(), ch.gains.tolist(),
                                   ch.bit_depth, cfg, Stage.FILTER)
            ts = [r[0] for r in rows]
            g_hat = [r[2] for r in rows]
            o = [r[5] for r in rows]
            trace_rows += [(t, cid, gh, oo) for t, gh, oo in zip(ts, g_hat, o)]
            info = {}
            for src, values in ((Source.BOUT_VELOCITY, o), (Source.CONDUCTANCE, g_hat)):
                evs = filter_on_events(encode_series(ts, values, cfg.theta_for(src.value), src, cid))
                bursts = find_bursts(evs, MIN_BURST_GAP)
                info[src] = (len(bursts), burst_gaps(bursts))
                event_rows += [(e.timestamp, cid, src.value, e.polarity.value, e.value_at_event) for e in evs]
                hist = event_rate(evs, bin_s, span)
                rate_rows += [(cid, src.value, start, count) for start, count in hist.bins]
            n_o, gaps_o = info[Source.BOUT_VELOCITY]
            channel_ok = n_o == 2 and all(gp >= MIN_BURST_GAP for gp in gaps_o)
            ok &= channel_ok
            n_g, gaps_g = info[Source.CONDUCTANCE]
            res_g = f"{n_g} burst(s)" + (f", gap {gaps_g[0]:.3f} s" if gaps_g else ", merged")
            res_o = f"{n_o} burst(s)" + (f", gap {gaps_o[0]:.3f} s" if gaps_o else "")
            per_channel[cid] = dict(o=info[Source.BOUT_VELOCITY], g=info[Source.CONDUCTANCE], ok=channel_ok)
            per_channel[cid]["line"] = f"{cid}: o -> {res_o}; g -> {res_g}"
    res = FigureResult("spikes", ok)
    res.data = per_channel
    res.lines += [v["line"] for v in per_channel.values()]
    _write(out_dir, "spikes_traces.csv", ("time_s", "channel_id", "g_hat", "o"), trace_rows, res)
    _write(out_dir, "spikes_events.csv", csvio.EVENTS, event_rows, res)
    _write(out_dir, "spikes_rate.csv", ("channel_id", "source", "bin_start_s", "count"), rate_rows, res)
    return res


def stereo_trials(scenario: SimScenario, cfg: Config) -> list[StereoTrial]:
    """Simulate, encode bout velocity and assemble one StereoTrial per simulated trial."""
    window = cfg["stereo.window_s"]
    out = []
    for trial in synthesize(scenario):
        streams = {}
        for side in SIDES:
            per_pair = {}
            for pair, ch in trial.side(side).items():
                rows = process_channel(ch.channel_id, ch.timestamps.tolist(), ch.codes.tolist(),
                                       ch.gains.tolist(), ch.bit_depth, cfg, Stage.EVENTS)
                per_pair[pair] = [r[0] for r in rows if r[3] == Polarity.ON.value]
            streams[side] = per_pair
        out.append(StereoTrial(trial_id(trial.trial_index), trial.truth.stimulus_time, window,
                               streams["left"], streams["right"], trial.truth.direction))
    return out


def figure_delays(out_dir: Optional[Path] = None, overrides=(), seed: Optional[int] = None,
                  config_path=None,
                  with_bias: bool = True) -> FigureResult:
    """Sign-of-delay direction classification over the 40-trial scenario."""
    scenario, cfg = load_scenario("stereo", overrides, seed, config_path)
    cutoff = cfg["stereo.outlier_cutoff_s"]
    t0 = time.perf_counter()
    trials = stereo_trials(scenario, cfg)
    summary = classify_trials(trials, cutoff)
    checks = {"accuracy": summary.accuracy == 1.0,
              "outliers": summary.outlier_count <= MAX_OUTLIERS}
    lines = [_summary_line(summary), f"outliers: {summary.outlier_count} (<= {MAX_OUTLIERS})"]
    shifts = {}
    if with_bias:
        biased = classify_trials(stereo_trials(replace(scenario, side_latency_bias=BIAS_INJECTION), cfg), cutoff)
        for pair, p in summary.pairs.items():
            shifts[pair] = biased.pairs[pair].mean_delay - p.mean_delay
        checks["bias_shift"] = all(abs(abs(s) - BIAS_INJECTION) <= BIAS_TOLERANCE for s in shifts.values())
        lines.append("right-side bias +%g s shifts mean delay by: " % BIAS_INJECTION
                     + ", ".join(f"{k} {v * 1e3:+.1f} ms" for k, v in shifts.items()))
    elapsed = time.perf_counter() - t0
    res = FigureResult("delays", all(checks.values()), lines)
    res.data = dict(summary=summary, shifts=shifts, checks=checks, elapsed=elapsed, trials=trials)
    truth = {t.trial_id: t.true_direction for t in trials}
    _write(out_dir, "delays.csv", csvio.DELAYS + ("true_direction",),
           [(m.trial_id, m.sensor_pair, m.delay, m.outlier, m.inferred_direction.value,
             truth[m.trial_id].value) for m in summary.measurements], res)
    return res


def _summary_line(summary: ClassificationSummary) -> str:
    parts = []
    for pair, p in summary.pairs.items():
        parts.append(f"{pair} acc {p.accuracy:.3f} mean {p.mean_delay * 1e3:+.1f} ms "
                     f"(l2r {p.mean_delay_for(Direction.LEFT_TO_RIGHT) * 1e3:+.1f}, "
                     f"r2l {p.mean_delay_for(Direction.RIGHT_TO_LEFT) * 1e3:+.1f})")
    return f"accuracy among non-outliers {summary.accuracy:.3f}; " + "; ".join(parts)


BITDEPTH_KEEP = 11
FULL_BITS = 23
FULL_SCALE_V = 3.3


def figure_bitdepth(out_dir: Optional[Path] = None, overrides=(), seed: Optional[int] = None,
                  config_path=None) -> FigureResult:
    """Full-resolution vs 11-bit copy of a low-amplitude stereo recording."""
    scenario, cfg = load_scenario("bitdepth", overrides, seed, config_path)
    trial = synthesize(scenario)[0]
    window = cfg["acquisition.baseline_s"]
    rows = []
    levels = {}
    identity = True
    for side in SIDES:
        ch = trial.side(side)[scenario.pairs[0]]
        frames = list(ch.frames())
        identity &= bool(np.array_equal(quantize_codes(ch.codes, FULL_BITS, ch.bit_depth), ch.codes))
        full = frames_to_conductance(frames, window)
        low = frames_to_conductance(quantize(frames, BITDEPTH_KEEP), window)
        rows += [(a.timestamp, side, a.g, b.g) for a, b in zip(full, low)]
        levels[side] = (len({a.g for a in full}), len({b.g for b in low}))
    lsb_low = lsb_volts(BITDEPTH_KEEP, FULL_SCALE_V)
    lsb_full = lsb_volts(FULL_BITS, FULL_SCALE_V)
    checks = {"lsb_11bit": abs(lsb_low * 1e3 - 1.6113) <= 0.01,
              "lsb_23bit": lsb_full < 0.4e-6,
              "identity_23bit": identity}
    res = FigureResult("bitdepth", all(checks.values()))
    res.lines += [f"LSB {BITDEPTH_KEEP}-bit = {lsb_low * 1e3:.4f} mV, {FULL_BITS}-bit = {lsb_full * 1e6:.4f} uV",
                  "distinct g levels (full / 11-bit): "
                  + ", ".join(f"{s} {a}/{b}" for s, (a, b) in levels.items())]
    res.data = dict(lsb_low=lsb_low, lsb_full=lsb_full, levels=levels, checks=checks)
    _write(out_dir, "bitdepth.csv", ("time_s", "side", "g_23bit", "g_11bit"), rows, res)
    _write(out_dir, "bitdepth_meta.csv", ("bits", "lsb_v", "full_scale_v"),
           [(FULL_BITS, lsb_full, FULL_SCALE_V), (BITDEPTH_KEEP, lsb_low, FULL_SCALE_V)], res)
    return res


def reproduce(figure: str, out_dir: Optional[Path] = None, overrides=(), seed: Optional[int] = None,
              config_path=None) -> FigureResult:
    funcs = {"kalman": figure_kalman, "spikes": figure_spikes,
             "delays": figure_delays, "bitdepth": figure_bitdepth}
    if figure not in funcs:
        raise KeyError(figure)
    return funcs[figure](out_dir, overrides, seed, config_path)
