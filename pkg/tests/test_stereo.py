import pytest
from hypothesis import given, settings, strategies as st

from enose.errors import NoTrials, OutOfRange
from enose.stereo import (
    DelayMeasurement,
    Direction,
    StereoTrial,
    classify_trials,
    first_onset,
    majority_direction,
    measure_trial,
    reclassify,
    stereo_delay,
)

L2R, R2L, UND = Direction.LEFT_TO_RIGHT, Direction.RIGHT_TO_LEFT, Direction.UNDETERMINED


def test_first_onset_earliest_in_window():
    assert first_onset([5.2, 5.4, 9.0], 5.0, 3.0) == 5.2


def test_first_onset_none_in_window():
    assert first_onset([1.0, 9.0], 5.0, 3.0) is None
    assert first_onset([], 5.0) is None


def test_first_onset_closed_lower_open_upper():
    assert first_onset([5.0, 5.1], 5.0, 3.0) == 5.0
    assert first_onset([8.0], 5.0, 3.0) is None


def test_delay_left_first():
    d, out, direction = stereo_delay(5.20, 5.45)
    assert d == pytest.approx(-0.25) and not out and direction is L2R


def test_delay_right_first():
    d, out, direction = stereo_delay(5.45, 5.20)
    assert d == pytest.approx(0.25) and not out and direction is R2L


def test_delay_outlier():
    d, out, direction = stereo_delay(5.0, 8.5, 2.0)
    assert d == -3.5 and out and direction is UND


def test_missing_first_event_is_outlier():
    assert stereo_delay(None, 5.0) == (None, True, UND)
    assert stereo_delay(5.0, None) == (None, True, UND)


def test_direction_parse_and_flip():
    assert Direction.parse(" Left_To_Right ") is L2R
    assert L2R.flipped() is R2L and UND.flipped() is UND
    with pytest.raises(OutOfRange):
        Direction.parse("up")


def noiseless_trials(n=40, transit=0.25, bias=0.0):
    trials = []
    for k in range(n):
        direction = L2R if k % 2 == 0 else R2L
        stim = 2.0
        first, second = stim + 0.2, stim + 0.2 + transit
        left, right = (first, second) if direction is L2R else (second, first)
        trials.append(StereoTrial(f"T{k:03d}", stim, 10.0,
                                  {p: [left] for p in "AB"}, {p: [right + bias] for p in "AB"}, direction))
    return trials


def test_zero_jitter_exact_transit():
    s = classify_trials(noiseless_trials())
    assert s.accuracy == 1.0 and s.outlier_count == 0
    for p in s.pairs.values():
        assert p.mean_delay_for(L2R) == pytest.approx(-0.25, abs=1e-12)
        assert p.mean_delay_for(R2L) == pytest.approx(0.25, abs=1e-12)


def test_right_side_bias_shifts_mean_delay():
    base = classify_trials(noiseless_trials()).mean_delays
    shifted = classify_trials(noiseless_trials(bias=0.08)).mean_delays
    for p in base:
        assert shifted[p] - base[p] == pytest.approx(-0.08, abs=1e-12)


def test_no_trials():
    with pytest.raises(NoTrials):
        classify_trials([])


def test_trial_without_events_counts_as_outlier():
    trials = noiseless_trials(4) + [StereoTrial("T999", 2.0, 10.0, {}, {}, L2R)]
    s = classify_trials(trials)
    assert s.outlier_count == 2   # one per pair
    assert s.accuracy == 1.0
    assert all(m.outlier for m in s.measurements if m.trial_id == "T999")


def test_majority_fusion():
    m = lambda d: DelayMeasurement("T", "S", 0.1, False, d)
    assert majority_direction([m(L2R), m(L2R), m(R2L)]) is L2R
    assert majority_direction([m(L2R), m(R2L), m(UND)]) is UND
    assert majority_direction([]) is UND


times = st.lists(st.floats(0, 20, allow_nan=False), max_size=6).map(sorted)


@st.composite
def trials(draw):
    pairs = ["S0", "S1", "S2"]
    stim = draw(st.floats(0, 5))
    return StereoTrial("T", stim, draw(st.floats(1, 15)),
                       {p: draw(times) for p in pairs}, {p: draw(times) for p in pairs},
                       draw(st.sampled_from([L2R, R2L])))


@settings(max_examples=200)
@given(trials(), st.floats(0.1, 5))
def test_antisymmetry(trial, cutoff):
    swapped = StereoTrial(trial.trial_id, trial.stimulus_time, trial.window,
                          trial.right_events, trial.left_events, trial.true_direction)
    for a, b in zip(measure_trial(trial, cutoff), measure_trial(swapped, cutoff)):
        assert a.outlier == b.outlier
        if a.delay is not None:
            assert b.delay == -a.delay
        assert b.inferred_direction is a.inferred_direction.flipped()


@settings(max_examples=200)
@given(trials(), st.floats(0.001, 3))
def test_delaying_right_events_lowers_delay_by_delta(trial, delta):
    # with delay = t_left - t_right, a later right onset makes the delay smaller
    stim = trial.stimulus_time
    trial.window = 1e3
    trial.right_events = {p: [t for t in v if t >= stim] for p, v in trial.right_events.items()}
    shifted = StereoTrial(trial.trial_id, stim, trial.window, trial.left_events,
                          {p: [t + delta for t in v] for p, v in trial.right_events.items()},
                          trial.true_direction)
    for a, b in zip(measure_trial(trial, 1e9), measure_trial(shifted, 1e9)):
        assert (a.delay is None) == (b.delay is None)
        if a.delay is not None:
            lf = first_onset(trial.left_events[a.sensor_pair], stim, trial.window)
            rf = first_onset(trial.right_events[a.sensor_pair], stim, trial.window)
            assert b.delay == lf - (rf + delta)
            assert b.delay == pytest.approx(a.delay - delta, abs=1e-12)


@settings(max_examples=200)
@given(trials(), st.floats(0.1, 5), st.floats(0.1, 5))
def test_cutoff_reclassifies_without_touching_delays(trial, c1, c2):
    for a, b in zip(measure_trial(trial, c1), measure_trial(trial, c2)):
        r = reclassify(a, c2)
        assert r == b
        assert r.delay == a.delay
