"""Direction of travel from left/right first-onset delays.

Delays are ``t_first_left - t_first_right``: a puff travelling left to
right reaches the left board first and gives a negative delay.
"""

from __future__ import annotations

import enum
import math
from bisect import bisect_left
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

from .errors import NoTrials, OutOfRange

DEFAULT_OUTLIER_CUTOFF = 2.0
DEFAULT_WINDOW = 10.0
SENSOR_PAIRS = ("S0", "S1", "S2", "S3")


class Direction(str, enum.Enum):
    LEFT_TO_RIGHT = "left_to_right"
    RIGHT_TO_LEFT = "right_to_left"
    UNDETERMINED = "undetermined"

    @classmethod
    def parse(cls, value) -> "Direction":
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise OutOfRange(f"unknown direction {value!r}") from None

    def flipped(self) -> "Direction":
        return {Direction.LEFT_TO_RIGHT: Direction.RIGHT_TO_LEFT,
                Direction.RIGHT_TO_LEFT: Direction.LEFT_TO_RIGHT}.get(self, self)


@dataclass
class StereoTrial:
    """``left_events`` / ``right_events`` map sensor pair to sorted ON-event times."""

    trial_id: str
    stimulus_time: float
    window: float = DEFAULT_WINDOW
    left_events: Mapping[str, Sequence[float]] = field(default_factory=dict)
    right_events: Mapping[str, Sequence[float]] = field(default_factory=dict)
    true_direction: Optional[Direction] = None

    def __post_init__(self):
        if not self.window > 0:
            raise OutOfRange(f"window must be positive (got {self.window!r})")


@dataclass(frozen=True)
class DelayMeasurement:
    trial_id: str
    sensor_pair: str
    delay: Optional[float]
    outlier: bool
    inferred_direction: Direction


def first_onset(events: Sequence[float], stimulus_time: float,
                window: float = DEFAULT_WINDOW) -> Optional[float]:
    """Earliest event time in ``[stimulus_time, stimulus_time + window)``."""
    i = bisect_left(events, stimulus_time)
    if i < len(events) and events[i] < stimulus_time + window:
        return events[i]
    return None


def direction_from_delay(delay: Optional[float], outlier: bool) -> Direction:
    if outlier or delay is None or delay == 0:
        return Direction.UNDETERMINED
    return Direction.LEFT_TO_RIGHT if delay < 0 else Direction.RIGHT_TO_LEFT


def stereo_delay(left_first: Optional[float], right_first: Optional[float],
                 outlier_cutoff: float = DEFAULT_OUTLIER_CUTOFF
                 ) -> tuple[Optional[float], bool, Direction]:
    """``(delay, outlier, inferred_direction)`` for one sensor pair."""
    if left_first is None or right_first is None:
        return None, True, Direction.UNDETERMINED
    delay = left_first - right_first
    outlier = abs(delay) > outlier_cutoff
    return delay, outlier, direction_from_delay(delay, outlier)


def measure_trial(trial: StereoTrial, outlier_cutoff: float = DEFAULT_OUTLIER_CUTOFF,
                  pairs: Optional[Iterable[str]] = None) -> list[DelayMeasurement]:
    if pairs is None:
        pairs = sorted(set(trial.left_events) | set(trial.right_events)) or SENSOR_PAIRS
    out = []
    for pair in pairs:
        lf = first_onset(trial.left_events.get(pair, ()), trial.stimulus_time, trial.window)
        rf = first_onset(trial.right_events.get(pair, ()), trial.stimulus_time, trial.window)
        delay, outlier, direction = stereo_delay(lf, rf, outlier_cutoff)
        out.append(DelayMeasurement(trial.trial_id, pair, delay, outlier, direction))
    return out


def reclassify(m: DelayMeasurement, outlier_cutoff: float) -> DelayMeasurement:
    """Re-apply the outlier rule with a different cutoff; the delay is kept."""
    if m.delay is None:
        return m
    outlier = abs(m.delay) > outlier_cutoff
    return DelayMeasurement(m.trial_id, m.sensor_pair, m.delay, outlier,
                            direction_from_delay(m.delay, outlier))


def majority_direction(measurements: Iterable[DelayMeasurement]) -> Direction:
    """Fuse per-pair verdicts of one trial by majority vote; ties are undetermined."""
    votes = Counter(m.inferred_direction for m in measurements
                    if m.inferred_direction is not Direction.UNDETERMINED)
    l2r = votes[Direction.LEFT_TO_RIGHT]
    r2l = votes[Direction.RIGHT_TO_LEFT]
    if l2r == r2l:
        return Direction.UNDETERMINED
    return Direction.LEFT_TO_RIGHT if l2r > r2l else Direction.RIGHT_TO_LEFT


@dataclass
class PairSummary:
    n: int = 0
    correct: int = 0
    outliers: int = 0
    delays: list = field(default_factory=list)
    delays_by_direction: dict = field(default_factory=lambda: defaultdict(list))

    @property
    def accuracy(self) -> float:
        return self.correct / self.n if self.n else math.nan

    @property
    def mean_delay(self) -> float:
        return math.fsum(self.delays) / len(self.delays) if self.delays else math.nan

    def mean_delay_for(self, direction: Direction) -> float:
        d = self.delays_by_direction.get(direction, [])
        return math.fsum(d) / len(d) if d else math.nan


@dataclass
class ClassificationSummary:
    pairs: dict
    measurements: list

    @property
    def outlier_count(self) -> int:
        return sum(p.outliers for p in self.pairs.values())

    @property
    def accuracy(self) -> float:
        n = sum(p.n for p in self.pairs.values())
        return sum(p.correct for p in self.pairs.values()) / n if n else math.nan

    @property
    def mean_delays(self) -> dict:
        return {k: p.mean_delay for k, p in self.pairs.items()}


def classify_trials(trials: Sequence[StereoTrial],
                    outlier_cutoff: float = DEFAULT_OUTLIER_CUTOFF,
                    pairs: Optional[Iterable[str]] = None) -> ClassificationSummary:
    """Per-pair accuracy among non-outliers, outlier counts and mean delays.

    Mean delays are taken over non-outlier measurements so that a systematic
    left/right offset is not swamped by the occasional large delay.
    """
    if not trials:
        raise NoTrials("no trials to classify")
    if pairs is None:
        seen = set()
        for t in trials:
            seen |= set(t.left_events) | set(t.right_events)
        pairs = sorted(seen) or list(SENSOR_PAIRS)
    pairs = list(pairs)
    summary = {p: PairSummary() for p in pairs}
    measurements = []
    for trial in trials:
        for m in measure_trial(trial, outlier_cutoff, pairs):
            measurements.append(m)
            s = summary[m.sensor_pair]
            if m.outlier:
                s.outliers += 1
                continue
            s.delays.append(m.delay)
            if trial.true_direction is not None:
                s.n += 1
                s.correct += m.inferred_direction is trial.true_direction
                s.delays_by_direction[trial.true_direction].append(m.delay)
    return ClassificationSummary(summary, measurements)
