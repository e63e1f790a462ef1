"""Event-based electronic-nose signal chain.

ADC frames are converted to normalized conductance, tracked by a
constant-acceleration Kalman filter with a decay term, encoded into
send-on-delta events and compared across a left/right sensor pair to infer
the direction of travel of an odor puff.  A seeded simulator supplies
ground-truth recordings.
"""

from .acquisition import AdcFrame, ConductanceSample, Gain, GainControllerState
from .events import BoutEvent, DeadbandEncoder, Polarity, Source
from .kalman import FilterConfig, FilterState, KalmanFilter
from .simulator import SimScenario
from .stereo import Direction, StereoTrial, classify_trials

__version__ = "0.1.0"

__all__ = [
    "AdcFrame", "ConductanceSample", "Gain", "GainControllerState",
    "BoutEvent", "DeadbandEncoder", "Polarity", "Source",
    "FilterConfig", "FilterState", "KalmanFilter",
    "SimScenario", "Direction", "StereoTrial", "classify_trials",
]
