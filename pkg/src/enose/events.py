"""Absolute-deadband (send-on-delta) event encoding.

An event fires whenever the tracked variable moves more than ``theta`` away
from its value at the previous event.  Polarity follows the sign of the
move; only ON events mark bout onsets.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import Iterable, Optional, Sequence

from .errors import EmptySpan, NonFiniteInput, OutOfRange

DEFAULT_THETA = 0.02
DEFAULT_BIN_S = 0.2


class Polarity(str, enum.Enum):
    ON = "ON"
    OFF = "OFF"


class Source(str, enum.Enum):
    CONDUCTANCE = "g"
    BOUT_VELOCITY = "o"

    @classmethod
    def parse(cls, value) -> "Source":
        if isinstance(value, cls):
            return value
        aliases = {"g": cls.CONDUCTANCE, "conductance": cls.CONDUCTANCE,
                   "o": cls.BOUT_VELOCITY, "bout_velocity": cls.BOUT_VELOCITY}
        try:
            return aliases[str(value).strip().lower()]
        except KeyError:
            raise OutOfRange(f"event source must be 'g' or 'o' (got {value!r})") from None


@dataclass(frozen=True)
class BoutEvent:
    timestamp: float
    channel_id: str
    polarity: Polarity
    value_at_event: float
    source: Source = Source.BOUT_VELOCITY


@dataclass(frozen=True)
class EncoderState:
    """``reference_value`` is ``None`` until the first sample arrives."""

    reference_value: Optional[float] = None
    reference_time: float = -math.inf
    threshold: float = DEFAULT_THETA
    source: Source = Source.BOUT_VELOCITY
    channel_id: str = ""

    def __post_init__(self):
        if not (self.threshold > 0 and math.isfinite(self.threshold)):
            raise OutOfRange(f"threshold must be positive (got {self.threshold!r})")


def encode_step(state: EncoderState, timestamp: float, z: float
                ) -> tuple[EncoderState, list[BoutEvent]]:
    if not math.isfinite(z):
        raise NonFiniteInput(f"value {z!r} is not finite")
    if timestamp < state.reference_time:
        raise OutOfRange(f"timestamp {timestamp} precedes reference {state.reference_time}")
    if state.reference_value is None:
        return replace(state, reference_value=z, reference_time=timestamp), []
    diff = z - state.reference_value
    if abs(diff) > state.threshold:
        pol = Polarity.ON if diff > 0 else Polarity.OFF
        ev = BoutEvent(timestamp, state.channel_id, pol, z, state.source)
        return replace(state, reference_value=z, reference_time=timestamp), [ev]
    return state, []


class DeadbandEncoder:
    """Mutable single-channel encoder, equivalent to folding :func:`encode_step`."""

    __slots__ = ("threshold", "source", "channel_id", "reference", "reference_time")

    def __init__(self, threshold: float = DEFAULT_THETA, source=Source.BOUT_VELOCITY,
                 channel_id: str = ""):
        EncoderState(threshold=threshold)
        self.threshold = threshold
        self.source = Source.parse(source)
        self.channel_id = channel_id
        self.reference: Optional[float] = None
        self.reference_time = -math.inf

    def push(self, timestamp: float, z: float) -> Optional[BoutEvent]:
        if not math.isfinite(z):
            raise NonFiniteInput(f"value {z!r} is not finite")
        ref = self.reference
        if ref is None:
            self.reference = z
            self.reference_time = timestamp
            return None
        diff = z - ref
        if diff > self.threshold or -diff > self.threshold:
            self.reference = z
            self.reference_time = timestamp
            pol = Polarity.ON if diff > 0 else Polarity.OFF
            return BoutEvent(timestamp, self.channel_id, pol, z, self.source)
        return None


def encode_series(timestamps: Sequence[float], values: Sequence[float],
                  threshold: float = DEFAULT_THETA, source=Source.BOUT_VELOCITY,
                  channel_id: str = "") -> list[BoutEvent]:
    enc = DeadbandEncoder(threshold, source, channel_id)
    out = []
    for t, z in zip(timestamps, values):
        ev = enc.push(t, float(z))
        if ev is not None:
            out.append(ev)
    return out


def filter_on_events(events: Iterable[BoutEvent]) -> list[BoutEvent]:
    return [e for e in events if e.polarity is Polarity.ON]


def reconstruct(timestamps: Sequence[float], values: Sequence[float],
                events: Sequence[BoutEvent]) -> list[float]:
    """Staircase of reference values seen by the encoder at each sample."""
    out = []
    ref = values[0] if len(values) else None
    k = 0
    for t in timestamps:
        while k < len(events) and events[k].timestamp <= t:
            ref = events[k].value_at_event
            k += 1
        out.append(ref)
    return out


@dataclass(frozen=True)
class EventRateHistogram:
    bin_width: float
    bins: tuple[tuple[float, int], ...]

    @property
    def counts(self) -> list[int]:
        return [c for _, c in self.bins]

    @property
    def total(self) -> int:
        return sum(self.counts)

    def rates(self) -> list[float]:
        """Counts per second."""
        return [c / self.bin_width for c in self.counts]


def event_rate(events: Iterable[BoutEvent], bin_width: float = DEFAULT_BIN_S,
               span: Optional[tuple[float, float]] = None) -> EventRateHistogram:
    """Time histogram over half-open bins ``[start, start + bin_width)``.

    The last bin is truncated at the end of ``span`` when the span is not a
    whole number of bins.  Events outside the span are not counted.
    """
    if not bin_width > 0:
        raise OutOfRange(f"bin_width must be positive (got {bin_width!r})")
    events = list(events)
    if span is None:
        if not events:
            raise EmptySpan("no events and no span given")
        span = (events[0].timestamp, events[-1].timestamp + bin_width)
    start, end = span
    if not end - start > 0:
        raise EmptySpan(f"span {span} has no duration")
    n = max(1, math.ceil((end - start) / bin_width - 1e-9))
    counts = [0] * n
    for e in events:
        if start <= e.timestamp < end:
            i = min(int((e.timestamp - start) // bin_width), n - 1)
            counts[i] += 1
    return EventRateHistogram(bin_width, tuple((start + i * bin_width, counts[i]) for i in range(n)))


def find_bursts(events: Sequence[BoutEvent], min_gap: float = 1.0) -> list[list[BoutEvent]]:
    """Split time-sorted events wherever consecutive events are ``min_gap`` or more apart."""
    bursts: list[list[BoutEvent]] = []
    for e in events:
        if bursts and e.timestamp - bursts[-1][-1].timestamp < min_gap:
            bursts[-1].append(e)
        else:
            bursts.append([e])
    return bursts


def burst_gaps(bursts: Sequence[Sequence[BoutEvent]]) -> list[float]:
    return [b[0].timestamp - a[-1].timestamp for a, b in zip(bursts, bursts[1:])]
