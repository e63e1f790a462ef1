"""Ratiometric ADC codes to normalised sensor conductance.

Each MOX element sits in series with a fixed load resistor and the ADC
reports ``x = V_S / (V_S + V_L)`` scaled by the programmable input gain.
The relative conductance of the sensor with respect to the load is
``g_rel = 1/x - 1``; dividing by its value at the start of the recording
gives the normalised conductance ``g``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import Iterable, Optional, Sequence

from .errors import NonPositiveCode, OutOfRange, SaturatedCode, ZeroBaseline

DEFAULT_BIT_DEPTH = 24
DEFAULT_UPSHIFT = 0.45
DEFAULT_DOWNSHIFT = 0.95
DEFAULT_BASELINE_S = 1.0
LOAD_RESISTANCE_OHM = 68e3


class Gain(enum.IntEnum):
    X1 = 1
    X2 = 2
    X4 = 4

    @classmethod
    def parse(cls, value) -> "Gain":
        if isinstance(value, str):
            value = value.strip().lower().rstrip("x")
        try:
            return cls(int(value))
        except (TypeError, ValueError):
            raise OutOfRange(f"gain must be one of 1, 2, 4 (got {value!r})") from None


_GAIN_UP = {Gain.X1: Gain.X2, Gain.X2: Gain.X4}
_GAIN_DOWN = {Gain.X4: Gain.X2, Gain.X2: Gain.X1}


def positive_full_scale(bit_depth: int = DEFAULT_BIT_DEPTH) -> int:
    """Largest positive code of a signed ``bit_depth`` converter."""
    return (1 << (bit_depth - 1)) - 1


@dataclass(frozen=True)
class AdcFrame:
    timestamp: float
    raw_code: int
    gain: Gain = Gain.X1
    bit_depth: int = DEFAULT_BIT_DEPTH
    channel_id: str = ""

    def __post_init__(self):
        if self.bit_depth < 2:
            raise OutOfRange(f"bit_depth must be >= 2 (got {self.bit_depth})")
        lo = -(1 << (self.bit_depth - 1))
        if not lo <= self.raw_code <= positive_full_scale(self.bit_depth):
            raise OutOfRange(
                f"raw_code {self.raw_code} outside [{lo}, {positive_full_scale(self.bit_depth)}]"
            )
        if not isinstance(self.gain, Gain):
            object.__setattr__(self, "gain", Gain.parse(self.gain))


@dataclass(frozen=True)
class ConductanceSample:
    timestamp: float
    g_rel: float
    g: float
    channel_id: str = ""


def raw_to_ratio(raw_code: int, gain: int, bit_depth: int = DEFAULT_BIT_DEPTH) -> float:
    """Scalar core of :func:`code_to_ratio`, without building a frame."""
    fs = (1 << (bit_depth - 1)) - 1
    if raw_code <= 0:
        raise NonPositiveCode(f"raw_code {raw_code} is at or below ground")
    if raw_code >= fs:
        raise SaturatedCode(f"raw_code {raw_code} is clipped at full scale (gain {int(gain)}x)")
    return raw_code / (gain * fs)


def code_to_ratio(frame: AdcFrame) -> float:
    """Gain-independent divider ratio ``x`` for one frame."""
    return raw_to_ratio(frame.raw_code, int(frame.gain), frame.bit_depth)


def ratio_to_relative_conductance(x: float) -> float:
    if not 0.0 < x < 1.0:
        raise OutOfRange(f"ratio must lie strictly between 0 and 1 (got {x!r})")
    return 1.0 / x - 1.0


def relative_conductance_to_ratio(g_rel: float) -> float:
    """Inverse of :func:`ratio_to_relative_conductance`."""
    if not g_rel > 0.0:
        raise OutOfRange(f"relative conductance must be positive (got {g_rel!r})")
    return 1.0 / (1.0 + g_rel)


def ratio_to_code(x: float, gain: int, bit_depth: int = DEFAULT_BIT_DEPTH) -> int:
    """Quantise a physical ratio at the given gain, clipping at full scale."""
    fs = positive_full_scale(bit_depth)
    code = int(round(x * int(gain) * fs))
    return max(min(code, fs), -fs - 1)


def baseline_mean(timestamps: Sequence[float], g_rel: Sequence[float],
                  window: float = DEFAULT_BASELINE_S) -> float:
    """Mean ``g_rel`` over the first ``window`` seconds of a recording.

    The window is complete only once a sample at or past ``t0 + window``
    exists; shorter recordings raise :class:`ZeroBaseline`.
    """
    if len(timestamps) == 0:
        raise ZeroBaseline("empty recording")
    t0 = timestamps[0]
    vals = []
    for t, value in zip(timestamps, g_rel):
        if t - t0 >= window:
            break
        vals.append(value)
    else:
        raise ZeroBaseline(f"recording shorter than the {window} s baseline window")
    base = math.fsum(vals) / len(vals)
    if not base > 0.0:
        raise ZeroBaseline(f"baseline {base!r} is not positive")
    return base


def normalize(trace: Iterable[float], baseline: float) -> list[float]:
    if not (baseline > 0.0 and math.isfinite(baseline)):
        raise ZeroBaseline(f"baseline {baseline!r} is not positive")
    return [v / baseline for v in trace]


@dataclass(frozen=True)
class GainControllerState:
    current_gain: Gain = Gain.X1
    upshift_threshold: float = DEFAULT_UPSHIFT
    downshift_threshold: float = DEFAULT_DOWNSHIFT

    def __post_init__(self):
        if not 0.0 < self.upshift_threshold < self.downshift_threshold < 1.0:
            raise OutOfRange(
                "gain thresholds must satisfy 0 < upshift < downshift < 1 "
                f"(got {self.upshift_threshold}, {self.downshift_threshold})"
            )
        if not isinstance(self.current_gain, Gain):
            object.__setattr__(self, "current_gain", Gain.parse(self.current_gain))


def step_gain_controller(state: GainControllerState, measured_fraction: float
                         ) -> tuple[GainControllerState, Optional[str]]:
    """Hysteretic gain selection.

    ``measured_fraction`` is the in-gain reading over positive full scale.
    Returns the state to use for the *next* frame and ``"increase"``,
    ``"decrease"`` or ``None``.
    """
    gain = state.current_gain
    if measured_fraction < state.upshift_threshold and gain in _GAIN_UP:
        return replace(state, current_gain=_GAIN_UP[gain]), "increase"
    if measured_fraction > state.downshift_threshold and gain in _GAIN_DOWN:
        return replace(state, current_gain=_GAIN_DOWN[gain]), "decrease"
    return state, None


def digitize(ratios: Iterable[float], bit_depth: int = DEFAULT_BIT_DEPTH,
             state: Optional[GainControllerState] = None) -> list[tuple[int, Gain]]:
    """Emulate the converter with automatic gain over a ratio trajectory.

    The gain chosen after each frame applies to the following one.
    """
    state = state or GainControllerState()
    fs = positive_full_scale(bit_depth)
    out = []
    for x in ratios:
        gain = state.current_gain
        code = ratio_to_code(x, gain, bit_depth)
        out.append((code, gain))
        state, _ = step_gain_controller(state, code / fs)
    return out


class BaselineNormalizer:
    """Streaming form of :func:`baseline_mean` + :func:`normalize` for one channel.

    Samples are held until the baseline window closes, then released in
    order; afterwards each sample is normalised immediately.
    """

    def __init__(self, window: float = DEFAULT_BASELINE_S):
        self.window = window
        self.baseline: Optional[float] = None
        self._t0: Optional[float] = None
        self._pending: list[tuple[float, float]] = []
        self._sum_vals: list[float] = []

    def push(self, timestamp: float, g_rel: float) -> list[tuple[float, float, float]]:
        """Returns ``(timestamp, g_rel, g)`` tuples that became available."""
        if self.baseline is not None:
            return [(timestamp, g_rel, g_rel / self.baseline)]
        if self._t0 is None:
            self._t0 = timestamp
        if timestamp - self._t0 < self.window:
            self._pending.append((timestamp, g_rel))
            self._sum_vals.append(g_rel)
            return []
        base = math.fsum(self._sum_vals) / len(self._sum_vals)
        if not base > 0.0:
            raise ZeroBaseline(f"baseline {base!r} is not positive")
        self.baseline = base
        pending, self._pending, self._sum_vals = self._pending, [], []
        pending.append((timestamp, g_rel))
        return [(t, v, v / base) for t, v in pending]

    def finish(self) -> None:
        if self.baseline is None and self._pending:
            raise ZeroBaseline(f"recording shorter than the {self.window} s baseline window")


def frames_to_conductance(frames: Sequence[AdcFrame],
                          window: float = DEFAULT_BASELINE_S) -> list[ConductanceSample]:
    """Batch conversion of one channel's frames."""
    ts = [f.timestamp for f in frames]
    g_rel = [ratio_to_relative_conductance(code_to_ratio(f)) for f in frames]
    base = baseline_mean(ts, g_rel, window)
    cid = frames[0].channel_id if frames else ""
    return [ConductanceSample(t, v, v / base, cid) for t, v in zip(ts, g_rel)]
