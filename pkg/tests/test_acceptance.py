"""Acceptance gate: one test per criterion, each reported as a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v``; the summary section at the
end of the run lists every criterion.
"""

import math
import os
import time
import tracemalloc
from dataclasses import replace

import numpy as np
import pytest

from conftest import write_acquisition
from signals import piecewise_smooth

from enose.acquisition import frames_to_conductance
from enose.cli import main
from enose.config import Config
from enose.events import encode_series, reconstruct
from enose.kalman import FilterConfig, run_filter, transition_matrix
from enose.pipeline import Stage, process_stream
from enose.reproduce import figure_bitdepth, figure_delays, figure_kalman, figure_spikes, load_scenario, scenario_path
from enose.simulator import SimScenario, lsb_volts, quantize_codes, synthesize
from enose.stereo import Direction

THETA = 0.02


@pytest.mark.criterion(1, "decay-term suppression of the secondary a_hat peak")
def test_criterion_1_decay_suppression(record_property):
    t0 = time.perf_counter()
    res = figure_kalman()
    elapsed = time.perf_counter() - t0
    d = res.data
    record_property("detail", f"tau={d['selection'].tau:g}, secondary inf {d['secondary_inf']:.3g} "
                              f"-> {d['secondary_sel']:.3g}, onset kept {d['onset_sel'] / d['onset_inf']:.1%}, "
                              f"{elapsed:.2f} s")
    assert d["secondary_inf"] >= 5 * THETA
    assert d["secondary_sel"] < THETA
    assert d["onset_sel"] >= 0.9 * d["onset_inf"]
    assert elapsed < 1.0


@pytest.mark.criterion(2, "two puffs give two o-event bursts on every profile")
def test_criterion_2_bout_separation(record_property):
    res = figure_spikes()
    assert len(res.data) == 8
    slow = [cid for cid in res.data if cid.endswith("S1")]
    g_report = ", ".join(f"{cid} g: {res.data[cid]['g'][0]} burst(s)" for cid in slow)
    record_property("detail", g_report)
    for cid, info in res.data.items():
        n_bursts, gaps = info["o"]
        assert n_bursts == 2, cid
        assert len(gaps) == 1 and gaps[0] >= 1.0, cid


@pytest.mark.criterion(3, "stereo direction from the sign of the delay")
def test_criterion_3_stereo_direction(record_property):
    t0 = time.perf_counter()
    res = figure_delays()
    elapsed = time.perf_counter() - t0
    s = res.data["summary"]
    truth = [t.true_direction for t in res.data["trials"]]
    shifts = res.data["shifts"]
    record_property("detail", f"accuracy {s.accuracy:.3f}, outliers {s.outlier_count}, bias shifts "
                              + ", ".join(f"{k} {v * 1e3:+.1f} ms" for k, v in shifts.items())
                              + f", {elapsed:.1f} s")
    assert truth.count(Direction.LEFT_TO_RIGHT) == truth.count(Direction.RIGHT_TO_LEFT) == 20
    assert s.accuracy == 1.0
    assert s.outlier_count <= 3
    # delay = t_left - t_right, so a later right side lowers every delay by the bias
    for v in shifts.values():
        assert abs(-v - 0.080) <= 0.010
    assert elapsed < 10.0


@pytest.mark.criterion(4, "Kalman oracle on a noiseless quadratic")
def test_criterion_4_kalman_oracle(record_property):
    alpha, dt = 0.2, 0.005
    t = np.arange(0, 6, dt)
    out = run_filter(1 + 0.5 * alpha * t**2, FilterConfig(dt=dt, tau=math.inf), t.tolist())
    err = np.max(np.abs(out[t >= 2.0, 2] - alpha)) / alpha
    record_property("detail", f"max relative a_hat error after 2 s: {err:.2e}")
    assert err <= 0.01
    F = transition_matrix(dt, math.inf)
    assert np.array_equal(F, np.array([[1.0, dt, dt * dt / 2], [0.0, 1.0, dt], [0.0, 0.0, 1.0]]))


@pytest.mark.criterion(5, "send-on-delta encoder properties")
def test_criterion_5_encoder_properties(record_property):
    rng = np.random.default_rng(20240501)
    worst = 0.0
    n_events = 0
    for _ in range(10_000):
        t, z = piecewise_smooth(rng, n=200)
        ts, zs = t.tolist(), z.tolist()
        events = encode_series(ts, zs, THETA)
        n_events += len(events)
        ref = np.array(reconstruct(ts, zs, events))
        worst = max(worst, float(np.max(np.abs(z - ref))))
        neg = encode_series(ts, (-z).tolist(), THETA)
        assert len(neg) == len(events)
        for a, b in zip(events, neg):
            assert a.timestamp == b.timestamp and a.polarity != b.polarity
        c = zs[int(rng.integers(len(zs)))]
        assert encode_series(ts, [c] * len(ts), THETA) == []
    assert worst <= THETA
    assert n_events > 10_000
    rates = []
    t = np.arange(0, 20, 0.005)
    for k in (0.02, 0.05, 0.1, 0.2, 0.3):
        ev = encode_series(t.tolist(), (k * t).tolist(), THETA)
        rate = len(ev) / t[-1]
        rates.append(rate / (k / THETA))
        assert abs(rate - k / THETA) <= 0.1 * k / THETA
    record_property("detail", f"max reconstruction error {worst:.4f}, {n_events} events, "
                              f"ramp rate ratios {min(rates):.3f}-{max(rates):.3f}")


@pytest.mark.criterion(6, "constant offset moves only g_hat")
def test_criterion_6_offset_invariance(record_property):
    sc, cfg = load_scenario("two_puff")
    trial = synthesize(sc)[0]
    worst = 0.0
    for side in ("left", "right"):
        for pair, ch in trial.side(side).items():
            samples = frames_to_conductance(list(ch.frames()))
            ts = [s.timestamp for s in samples]
            g = np.array([s.g for s in samples])
            fc = cfg.filter_config(ch.channel_id)
            a = run_filter(g, fc, ts)
            b = run_filter(g + 0.3, fc, ts)
            worst = max(worst, float(np.max(np.abs(b[:, 0] - a[:, 0] - 0.3))),
                        float(np.max(np.abs(b[:, 1:] - a[:, 1:]))))
            ea = encode_series(ts, a[:, 3].tolist(), THETA)
            eb = encode_series(ts, b[:, 3].tolist(), THETA)
            assert [(e.timestamp, e.polarity) for e in ea] == [(e.timestamp, e.polarity) for e in eb]
            assert np.allclose([e.value_at_event for e in ea], [e.value_at_event for e in eb], rtol=0, atol=1e-9)
    record_property("detail", f"max deviation {worst:.2e}")
    assert worst <= 1e-9


@pytest.mark.criterion(7, "bit-depth reduction and LSB sizes")
def test_criterion_7_quantization(record_property):
    res = figure_bitdepth()
    lsb11, lsb23 = lsb_volts(11, 3.3), lsb_volts(23, 3.3)
    record_property("detail", f"LSB11 {lsb11 * 1e3:.4f} mV, LSB23 {lsb23 * 1e6:.4f} uV")
    assert abs(lsb11 * 1e3 - 1.6113) <= 0.01
    assert lsb23 < 0.4e-6
    codes = np.arange(1, 2**23, 997, dtype=np.int64)
    assert np.array_equal(quantize_codes(codes, 23), codes)
    assert res.passed


def _row_count(path):
    with open(path) as fh:
        return sum(1 for _ in fh) - 1


@pytest.mark.criterion(8, "96k-row end-to-end run under 1 s with bounded memory")
def test_criterion_8_performance(tmp_path, record_property):
    path = tmp_path / "acq.csv"
    write_acquisition(path, replace(SimScenario(), duration=60.0))
    assert _row_count(path) == 96_000
    cfg = Config.defaults()
    best = math.inf
    for _ in range(3):
        with open(os.devnull, "w", newline="") as sink:
            t0 = time.perf_counter()
            process_stream([str(path)], sink, cfg, Stage.EVENTS)
            best = min(best, time.perf_counter() - t0)

    # memory: peak allocation must not grow with input length
    peaks = {}
    for seconds in (20.0, 100.0):
        p = tmp_path / f"m{int(seconds)}.csv"
        write_acquisition(p, replace(SimScenario(), duration=seconds))
        with open(os.devnull, "w", newline="") as sink:
            tracemalloc.start()
            process_stream([str(p)], sink, cfg, Stage.FILTER)
            peaks[seconds] = tracemalloc.get_traced_memory()[1]
            tracemalloc.stop()
    record_property("detail", f"best of 3: {best:.3f} s; peak memory {peaks[20.0] / 1e3:.0f} kB for 32k rows, "
                              f"{peaks[100.0] / 1e3:.0f} kB for 160k rows")
    assert best < 1.0
    assert peaks[100.0] < 1.25 * peaks[20.0] + 64_000


@pytest.mark.criterion(9, "simulate and process reruns are byte-identical")
def test_criterion_9_determinism(tmp_path, record_property):
    scenario = str(scenario_path("two_puff"))
    outs = []
    for run in ("a", "b"):
        d = tmp_path / run
        assert main(["simulate", scenario, "--seed", "3", "-o", str(d)]) == 0
        for stage in ("--to-conductance", "--to-events"):
            for side in ("left", "right"):
                assert main(["process", str(d / f"{side}.csv"), stage,
                             "-o", str(d / f"{side}{stage}.csv")]) == 0
        outs.append({f.name: f.read_bytes() for f in sorted(d.iterdir())})
    assert outs[0].keys() == outs[1].keys() and len(outs[0]) == 8
    for name in outs[0]:
        assert outs[0][name] == outs[1][name], name
    record_property("detail", f"{len(outs[0])} files compared")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v"]))
