"""Seeded synthetic stereo recordings with known onsets.

Puffs travel along the left/right axis at a fixed speed.  Each sensor
responds with a product-of-exponentials kinetic (fast binding, slow
recovery) on top of a unit normalised baseline, plus white noise and an
optional random-walk drift.  The conductance is mapped back to the divider
ratio and digitised with automatic gain, so the output is in the same
form the hardware delivers.

Random streams are drawn from numpy's ``PCG64`` seeded through
``SeedSequence([seed, trial_index, side, purpose])``; a stream never
depends on how many other trials or channels were generated before it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Mapping, Sequence

import numpy as np

from .acquisition import (
    AdcFrame,
    Gain,
    GainControllerState,
    digitize,
)
from .errors import ConfigError, InvalidKinetics, OutOfRange
from .stereo import SENSOR_PAIRS, Direction

RNG_NAME = "numpy.PCG64+SeedSequence"
SIDES = ("left", "right")
_SIDE_CODE = {"left": 0, "right": 1, "trial": 2}
_PURPOSE = {"jitter": 0, "noise": 1, "drift": 2, "outlier": 3}

SENSOR_TYPES = {"S0": "TGS2600", "S1": "TGS2602", "S2": "TGS2610", "S3": "TGS2620"}


@dataclass(frozen=True)
class SensorProfile:
    rise_scale: float = 1.0
    amplitude_scale: float = 1.0


# S1 (TGS2602) is the slow one; S3 (TGS2620) the fastest.
DEFAULT_PROFILES = {
    "S0": SensorProfile(1.5, 1.0),
    "S1": SensorProfile(5.0, 0.8),
    "S2": SensorProfile(2.0, 0.6),
    "S3": SensorProfile(0.7, 1.2),
}


@dataclass(frozen=True)
class Puff:
    release_time: float
    direction: Direction = Direction.LEFT_TO_RIGHT
    amplitude: float = 2.0


@dataclass(frozen=True)
class SimScenario:
    seed: int = 0
    sample_rate: float = 200.0
    duration: float = 8.0
    n_trials: int = 1
    direction_schedule: str = "fixed"
    sensor_spacing: float = 0.125
    source_distance: float = 0.1
    puff_speed: float = 0.5
    puffs: tuple = (Puff(2.0),)
    jitter_sd: float = 0.04
    outlier_probability: float = 0.05
    outlier_delay: tuple = (2.5, 6.0)
    rise_tau: float = 0.5
    decay_tau: float = 40.0
    noise_sd: float = 5e-5
    drift_sd: float = 0.0
    side_latency_bias: float = 0.0
    pair_latency_bias: Mapping = field(default_factory=dict)
    bit_depth: int = 24
    baseline_g_rel: float = 1.0
    upshift_threshold: float = 0.45
    downshift_threshold: float = 0.95
    pairs: tuple = SENSOR_PAIRS
    profiles: Mapping = field(default_factory=lambda: dict(DEFAULT_PROFILES))
    rng: str = RNG_NAME

    def __post_init__(self):
        def bad(name, why):
            raise ConfigError(f"simulator.{name}: {why}")

        if not self.sample_rate > 0:
            bad("sample_rate", "must be positive")
        if not self.duration > 0:
            bad("duration", "must be positive")
        if self.n_trials < 1:
            bad("n_trials", "must be at least 1")
        if self.direction_schedule not in ("fixed", "alternate"):
            bad("direction_schedule", "must be 'fixed' or 'alternate'")
        if not self.puff_speed > 0:
            bad("puff_speed", "must be positive")
        if self.sensor_spacing < 0 or self.source_distance < 0:
            bad("sensor_spacing", "distances must be non-negative")
        if self.jitter_sd < 0:
            bad("jitter_sd", "must be non-negative")
        if not 0 <= self.outlier_probability <= 1:
            bad("outlier_probability", "must lie in [0, 1]")
        if len(self.outlier_delay) != 2 or not 0 <= self.outlier_delay[0] <= self.outlier_delay[1]:
            bad("outlier_delay", "must be [low, high] with 0 <= low <= high")
        if self.noise_sd < 0 or self.drift_sd < 0:
            bad("noise_sd", "noise magnitudes must be non-negative")
        if not 2 <= self.bit_depth <= 32:
            bad("bit_depth", "must lie in [2, 32]")
        if not self.baseline_g_rel > 0:
            bad("baseline_g_rel", "must be positive")
        if not 0 < self.upshift_threshold < self.downshift_threshold < 1:
            bad("upshift_threshold", "need 0 < upshift_threshold < downshift_threshold < 1")
        if self.rng != RNG_NAME:
            bad("rng", f"only {RNG_NAME!r} is supported")
        for p in self.puffs:
            if not p.amplitude > 0:
                bad("puffs", f"amplitude must be positive (got {p.amplitude})")
        for pair in self.pairs:
            prof = self.profile(pair)
            if not self.rise_tau * prof.rise_scale < self.decay_tau:
                raise InvalidKinetics(
                    f"simulator.rise_tau: rise time {self.rise_tau * prof.rise_scale} s of {pair} "
                    f"must be below simulator.decay_tau = {self.decay_tau} s")
            if not prof.amplitude_scale > 0:
                bad("profiles", f"{pair}.amplitude_scale must be positive")

    def profile(self, pair: str) -> SensorProfile:
        return self.profiles.get(pair, SensorProfile())

    @property
    def n_samples(self) -> int:
        return int(round(self.duration * self.sample_rate))

    @property
    def transit_time(self) -> float:
        return self.sensor_spacing / self.puff_speed

    def trial_puffs(self, trial_index: int) -> list[Puff]:
        if self.direction_schedule == "alternate" and trial_index % 2:
            return [Puff(p.release_time, p.direction.flipped(), p.amplitude) for p in self.puffs]
        return list(self.puffs)


def trial_id(trial_index: int) -> str:
    return f"T{trial_index:03d}"


def channel_name(trial_index: int, pair: str) -> str:
    return f"{trial_id(trial_index)}/{pair}"


def rng_for(seed: int, trial_index: int, side: str, purpose: str) -> np.random.Generator:
    ss = np.random.SeedSequence([int(seed), int(trial_index), _SIDE_CODE[side], _PURPOSE[purpose]])
    return np.random.Generator(np.random.PCG64(ss))


def _check_kinetics(rise_tau: float, decay_tau: float) -> None:
    if not 0 < rise_tau < decay_tau:
        raise InvalidKinetics(f"need 0 < rise_tau < decay_tau (got {rise_tau}, {decay_tau})")


def response_peak_time(rise_tau: float, decay_tau: float) -> float:
    _check_kinetics(rise_tau, decay_tau)
    return rise_tau * math.log1p(decay_tau / rise_tau)


def _amplitude_norm(rise_tau: float, decay_tau: float) -> float:
    tp = response_peak_time(rise_tau, decay_tau)
    return 1.0 / (-math.expm1(-tp / rise_tau) * math.exp(-tp / decay_tau))


def puff_response(t, onset: float, amplitude: float, rise_tau: float, decay_tau: float):
    """Conductance change caused by one puff; peaks at exactly ``amplitude``.

    Accepts a scalar or an array of times.
    """
    norm = amplitude * _amplitude_norm(rise_tau, decay_tau)
    tt = np.asarray(t, dtype=float) - onset
    after = tt >= 0
    s = np.where(after, tt, 0.0)
    out = np.where(after, norm * -np.expm1(-s / rise_tau) * np.exp(-s / decay_tau), 0.0)
    return float(out) if out.ndim == 0 else out


def tail_curvature_peak(rise_tau: float, decay_tau: float) -> float:
    """Largest positive second derivative of a unit-amplitude response.

    The recovery decelerates long after the onset; a filter without the decay
    term reports this late curvature as a second positive acceleration peak.
    """
    _check_kinetics(rise_tau, decay_tau)
    k = 1.0 / (1.0 / rise_tau + 1.0 / decay_tau)
    t_star = 3.0 * rise_tau * math.log(decay_tau / k)
    n = _amplitude_norm(rise_tau, decay_tau)
    return n * (math.exp(-t_star / decay_tau) / decay_tau**2 - math.exp(-t_star / k) / k**2)


@dataclass
class GroundTruth:
    trial_index: int
    directions: list
    expected_delays: list
    onsets: dict          # (puff_index, side) -> earliest onset on that board
    sensor_onsets: dict   # (puff_index, side, pair) -> onset of that sensor
    release_times: list

    @property
    def stimulus_time(self) -> float:
        return self.release_times[0]

    @property
    def direction(self) -> Direction:
        return self.directions[0]


@dataclass
class ChannelTrace:
    channel_id: str
    timestamps: np.ndarray
    codes: np.ndarray
    gains: np.ndarray
    bit_depth: int
    g_true: np.ndarray

    def frames(self) -> Iterator[AdcFrame]:
        for t, c, g in zip(self.timestamps.tolist(), self.codes.tolist(), self.gains.tolist()):
            yield AdcFrame(t, c, Gain(g), self.bit_depth, self.channel_id)


@dataclass
class TrialRecording:
    trial_index: int
    left: dict    # pair -> ChannelTrace
    right: dict
    truth: GroundTruth

    def side(self, side: str) -> dict:
        return self.left if side == "left" else self.right


def sensor_onsets(scenario: SimScenario, trial_index: int) -> GroundTruth:
    puffs = scenario.trial_puffs(trial_index)
    u = scenario.puff_speed
    near = scenario.source_distance / u
    far = (scenario.source_distance + scenario.sensor_spacing) / u
    outlier_hit = None
    orng = rng_for(scenario.seed, trial_index, "trial", "outlier")
    if orng.random() < scenario.outlier_probability:
        side = SIDES[int(orng.integers(2))]
        pair = scenario.pairs[int(orng.integers(len(scenario.pairs)))]
        lo, hi = scenario.outlier_delay
        outlier_hit = (side, pair, float(orng.uniform(lo, hi)))

    per_sensor = {}
    for side in SIDES:
        jit = rng_for(scenario.seed, trial_index, side, "jitter").standard_normal(
            (len(puffs), len(scenario.pairs)))
        for i, puff in enumerate(puffs):
            first = (side == "left") == (puff.direction is Direction.LEFT_TO_RIGHT)
            base = puff.release_time + (near if first else far)
            for j, pair in enumerate(scenario.pairs):
                t = base + scenario.jitter_sd * float(jit[i, j])
                if side == "right":
                    t += scenario.side_latency_bias + scenario.pair_latency_bias.get(pair, 0.0)
                if outlier_hit and outlier_hit[:2] == (side, pair):
                    t += outlier_hit[2]
                per_sensor[(i, side, pair)] = max(t, puff.release_time)

    onsets = {(i, side): min(per_sensor[(i, side, p)] for p in scenario.pairs)
              for i in range(len(puffs)) for side in SIDES}
    delays = [(-1.0 if p.direction is Direction.LEFT_TO_RIGHT else 1.0) * scenario.transit_time
              for p in puffs]
    return GroundTruth(trial_index, [p.direction for p in puffs], delays, onsets, per_sensor,
                       [p.release_time for p in puffs])


def conductance_trace(scenario: SimScenario, trial_index: int, side: str, pair: str,
                      truth: GroundTruth, t: np.ndarray, noise: np.ndarray,
                      drift: np.ndarray) -> np.ndarray:
    prof = scenario.profile(pair)
    rise = scenario.rise_tau * prof.rise_scale
    g = np.ones_like(t)
    for i, puff in enumerate(scenario.trial_puffs(trial_index)):
        g += puff_response(t, truth.sensor_onsets[(i, side, pair)],
                           puff.amplitude * prof.amplitude_scale, rise, scenario.decay_tau)
    return g + drift + noise


def synthesize_trial(scenario: SimScenario, trial_index: int = 0) -> TrialRecording:
    n = scenario.n_samples
    t = np.arange(n) / scenario.sample_rate
    truth = sensor_onsets(scenario, trial_index)
    npairs = len(scenario.pairs)
    sides = {}
    for side in SIDES:
        noise = scenario.noise_sd * rng_for(scenario.seed, trial_index, side, "noise").standard_normal((npairs, n))
        if scenario.drift_sd > 0:
            steps = rng_for(scenario.seed, trial_index, side, "drift").standard_normal((npairs, n))
            drift = np.cumsum(steps * scenario.drift_sd * math.sqrt(1.0 / scenario.sample_rate), axis=1)
        else:
            drift = np.zeros((npairs, n))
        traces = {}
        for j, pair in enumerate(scenario.pairs):
            g = conductance_trace(scenario, trial_index, side, pair, truth, t, noise[j], drift[j])
            g_rel = scenario.baseline_g_rel * g
            if np.any(g_rel <= 0):
                raise OutOfRange(f"simulated conductance of {side} {pair} went non-positive")
            x = 1.0 / (1.0 + g_rel)
            ctrl = GainControllerState(Gain.X1, scenario.upshift_threshold, scenario.downshift_threshold)
            coded = digitize(x.tolist(), scenario.bit_depth, ctrl)
            codes = np.fromiter((c for c, _ in coded), dtype=np.int64, count=n)
            gains = np.fromiter((int(gn) for _, gn in coded), dtype=np.int64, count=n)
            traces[pair] = ChannelTrace(channel_name(trial_index, pair), t, codes, gains,
                                        scenario.bit_depth, g)
        sides[side] = traces
    return TrialRecording(trial_index, sides["left"], sides["right"], truth)


def synthesize(scenario: SimScenario) -> list[TrialRecording]:
    return [synthesize_trial(scenario, k) for k in range(scenario.n_trials)]


def lsb_volts(keep_bits: int, full_scale_v: float = 3.3) -> float:
    """Voltage of one code step when ``keep_bits`` bits span positive full scale."""
    return full_scale_v / 2**keep_bits


def quantize_codes(codes, keep_bits: int, bit_depth: int = 24):
    """Zero the lowest ``bit_depth - 1 - keep_bits`` bits of positive codes."""
    if not 1 <= keep_bits <= bit_depth - 1:
        raise OutOfRange(f"keep_bits must lie in [1, {bit_depth - 1}] (got {keep_bits})")
    mask = ~((1 << (bit_depth - 1 - keep_bits)) - 1)
    arr = np.asarray(codes, dtype=np.int64)
    return np.where(arr > 0, arr & mask, arr)


def quantize(trace: Sequence[AdcFrame], keep_bits: int) -> list[AdcFrame]:
    """Reduce the effective resolution of a frame sequence."""
    out = []
    for f in trace:
        code = int(quantize_codes([f.raw_code], keep_bits, f.bit_depth)[0])
        out.append(AdcFrame(f.timestamp, code, f.gain, f.bit_depth, f.channel_id))
    return out


def calibrate_amplitude(target_peak: float, rise_tau: float, decay_tau: float) -> float:
    """Puff amplitude whose tail curvature bump reaches ``target_peak``."""
    return target_peak / tail_curvature_peak(rise_tau, decay_tau)

