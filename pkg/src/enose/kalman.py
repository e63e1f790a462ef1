"""Constant-acceleration Kalman filter with a velocity decay term.

State is ``(g, v, a)``: conductance, its rate of change and the residual
second derivative.  The prediction assumes the velocity relaxes towards
zero with time constant ``tau``::

    g' = g + v dt + (a - v/tau) dt^2 / 2
    v' = v + (a - v/tau) dt
    a' = a

so the expected sensor recovery is absorbed by the dynamics and does not
show up in ``a``.  The running integral ``o`` of the posterior ``a``, called
bout velocity here, is kept alongside the state.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .acquisition import ConductanceSample
from .errors import InvalidStep, NoOnsetFound, NonFiniteInput, OutOfRange, TimestampMismatch

DEFAULT_DT = 0.005
DEFAULT_TAU = 3.0
DEFAULT_Q = 1e-2
DEFAULT_R = 1e-8
DEFAULT_P0 = 1.0


@dataclass(frozen=True)
class FilterConfig:
    dt: float = DEFAULT_DT
    tau: float = DEFAULT_TAU
    process_noise_intensity: float = DEFAULT_Q
    measurement_noise_variance: float = DEFAULT_R
    initial_covariance_scale: float = DEFAULT_P0

    def __post_init__(self):
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise InvalidStep(f"dt must be positive (got {self.dt!r})")
        if not self.tau > 0:
            raise OutOfRange(f"tau must be positive or inf (got {self.tau!r})")
        if math.isfinite(self.tau) and self.dt >= self.tau:
            raise InvalidStep(f"dt={self.dt} must be smaller than tau={self.tau}")
        for name in ("process_noise_intensity", "measurement_noise_variance",
                     "initial_covariance_scale"):
            value = getattr(self, name)
            if not (value > 0 and math.isfinite(value)):
                raise OutOfRange(f"{name} must be positive (got {value!r})")


@dataclass
class FilterState:
    g_hat: float
    v_hat: float
    a_hat: float
    covariance: np.ndarray
    o: float = 0.0
    timestamp: float = 0.0


def transition_matrix(dt: float, tau: float = math.inf) -> np.ndarray:
    if not dt > 0:
        raise InvalidStep(f"dt must be positive (got {dt!r})")
    if math.isfinite(tau) and dt >= tau:
        raise InvalidStep(f"dt={dt} must be smaller than tau={tau}")
    k = 0.0 if math.isinf(tau) else 1.0 / tau
    half = dt * dt / 2
    return np.array([
        [1.0, dt - half * k if k else dt, half],
        [0.0, 1.0 - dt * k, dt],
        [0.0, 0.0, 1.0],
    ])


def process_noise(dt: float, q: float) -> np.ndarray:
    """Discretised white-jerk covariance."""
    return q * np.array([
        [dt**5 / 20, dt**4 / 8, dt**3 / 6],
        [dt**4 / 8, dt**3 / 3, dt**2 / 2],
        [dt**3 / 6, dt**2 / 2, dt],
    ])


class KalmanFilter:
    """Scalar-unrolled filter for one channel.

    ``F`` is upper triangular and only ``g`` is observed, so the predict and
    update steps are written out over the six unique covariance entries.
    This keeps a step at a couple of microseconds in pure Python.
    """

    __slots__ = ("config", "_f01", "_f02", "_f11", "_f12", "_q", "_r",
                 "g", "v", "a", "o", "t",
                 "p00", "p01", "p02", "p11", "p12", "p22")

    def __init__(self, config: FilterConfig):
        self.config = config
        F = transition_matrix(config.dt, config.tau)
        self._f01 = float(F[0, 1])
        self._f02 = float(F[0, 2])
        self._f11 = float(F[1, 1])
        self._f12 = float(F[1, 2])
        Q = process_noise(config.dt, config.process_noise_intensity)
        self._q = tuple(float(Q[i, j]) for i, j in ((0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)))
        self._r = config.measurement_noise_variance
        self.t: Optional[float] = None

    @property
    def initialized(self) -> bool:
        return self.t is not None

    def initialize(self, timestamp: float, g: float) -> tuple[float, float, float, float]:
        if not math.isfinite(g):
            raise NonFiniteInput(f"measurement {g!r} is not finite")
        s = self.config.initial_covariance_scale
        self.g, self.v, self.a, self.o, self.t = float(g), 0.0, 0.0, 0.0, timestamp
        self.p00 = self.p11 = self.p22 = s
        self.p01 = self.p02 = self.p12 = 0.0
        return self.g, 0.0, 0.0, 0.0

    def step(self, timestamp: float, z: float) -> tuple[float, float, float, float]:
        """Predict to ``timestamp`` and fold in measurement ``z``.

        Returns the posterior ``(g_hat, v_hat, a_hat, o)``.
        """
        if not math.isfinite(z):
            raise NonFiniteInput(f"measurement {z!r} is not finite")
        dt = self.config.dt
        if abs(timestamp - self.t - dt) > 0.5 * dt:
            raise TimestampMismatch(
                f"sample at {timestamp!r} is not one step ({dt} s) after {self.t!r}")
        f01 = self._f01
        f02 = self._f02
        f11 = self._f11
        f12 = self._f12
        q00, q01, q02, q11, q12, q22 = self._q
        v = self.v
        a = self.a
        g = self.g + f01 * v + f02 * a
        v = f11 * v + f12 * a

        p01 = self.p01
        p02 = self.p02
        p11 = self.p11
        p12 = self.p12
        p22 = self.p22
        # first two rows of F P
        b00 = self.p00 + f01 * p01 + f02 * p02
        b01 = p01 + f01 * p11 + f02 * p12
        b02 = p02 + f01 * p12 + f02 * p22
        b11 = f11 * p11 + f12 * p12
        b12 = f11 * p12 + f12 * p22
        # (F P) F^T + Q, upper triangle
        n00 = b00 + f01 * b01 + f02 * b02 + q00
        n01 = f11 * b01 + f12 * b02 + q01
        n02 = b02 + q02
        n11 = f11 * b11 + f12 * b12 + q11
        n12 = b12 + q12
        n22 = p22 + q22

        s = n00 + self._r
        k0 = n00 / s
        k1 = n01 / s
        k2 = n02 / s
        y = z - g
        g += k0 * y
        v += k1 * y
        a += k2 * y
        self.p00 = n00 - k0 * n00
        self.p01 = n01 - k0 * n01
        self.p02 = n02 - k0 * n02
        self.p11 = n11 - k1 * n01
        self.p12 = n12 - k1 * n02
        self.p22 = n22 - k2 * n02
        self.g = g
        self.v = v
        self.a = a
        self.o += a * dt
        self.t = timestamp
        return g, v, a, self.o

    def innovation(self, z: float) -> tuple[float, float]:
        """Innovation and its variance for a prospective next measurement."""
        f01, f02 = self._f01, self._f02
        g = self.g + f01 * self.v + f02 * self.a
        b00 = self.p00 + f01 * self.p01 + f02 * self.p02
        b01 = self.p01 + f01 * self.p11 + f02 * self.p12
        b02 = self.p02 + f01 * self.p12 + f02 * self.p22
        n00 = b00 + f01 * b01 + f02 * b02 + self._q[0]
        return z - g, n00 + self._r

    @property
    def covariance(self) -> np.ndarray:
        return np.array([
            [self.p00, self.p01, self.p02],
            [self.p01, self.p11, self.p12],
            [self.p02, self.p12, self.p22],
        ])

    def state(self) -> FilterState:
        return FilterState(self.g, self.v, self.a, self.covariance, self.o, self.t)

    @classmethod
    def from_state(cls, state: FilterState, config: FilterConfig) -> "KalmanFilter":
        kf = cls(config)
        kf.g, kf.v, kf.a, kf.o, kf.t = state.g_hat, state.v_hat, state.a_hat, state.o, state.timestamp
        P = np.asarray(state.covariance, dtype=float)
        kf.p00, kf.p01, kf.p02 = float(P[0, 0]), float(P[0, 1]), float(P[0, 2])
        kf.p11, kf.p12, kf.p22 = float(P[1, 1]), float(P[1, 2]), float(P[2, 2])
        return kf


def initialize_filter(first_measurement: ConductanceSample, config: FilterConfig) -> FilterState:
    kf = KalmanFilter(config)
    kf.initialize(first_measurement.timestamp, first_measurement.g)
    return kf.state()


def filter_step(state: FilterState, config: FilterConfig,
                measurement: ConductanceSample) -> FilterState:
    kf = KalmanFilter.from_state(state, config)
    kf.step(measurement.timestamp, measurement.g)
    return kf.state()


def run_filter(g: Sequence[float], config: FilterConfig,
               timestamps: Optional[Sequence[float]] = None) -> np.ndarray:
    """Filter a whole trace; returns an ``(n, 4)`` array of ``g_hat, v_hat, a_hat, o``."""
    n = len(g)
    out = np.zeros((n, 4))
    if n == 0:
        return out
    if timestamps is None:
        timestamps = [i * config.dt for i in range(n)]
    kf = KalmanFilter(config)
    out[0] = kf.initialize(timestamps[0], float(g[0]))
    step = kf.step
    for i in range(1, n):
        out[i] = step(timestamps[i], float(g[i]))
    return out


def secondary_peak(a_hat: Sequence[float]) -> tuple[float, float]:
    """``(onset_peak, secondary_peak)`` of a single-bout ``a_hat`` trace.

    The onset peak is the global maximum.  The secondary peak is the largest
    value after ``a_hat`` first turns negative following the onset; it is
    ``inf`` when ``a_hat`` never goes negative (nothing was suppressed).
    """
    a = np.asarray(a_hat, dtype=float)
    if a.size == 0:
        return -math.inf, math.inf
    i_on = int(np.argmax(a))
    neg = np.flatnonzero(a[i_on:] < 0)
    if neg.size == 0:
        return float(a[i_on]), math.inf
    return float(a[i_on]), float(a[i_on + neg[0]:].max())


@dataclass
class TauSelection:
    tau: float
    warning: bool
    onset_peaks: dict = field(default_factory=dict)
    secondary_peaks: dict = field(default_factory=dict)


def select_tau(step_response: Sequence[ConductanceSample], candidate_taus: Sequence[float],
               suppression_threshold: float, config: Optional[FilterConfig] = None) -> TauSelection:
    """Largest candidate ``tau`` whose secondary ``a_hat`` peak stays below the threshold.

    Falls back to the smallest candidate (with ``warning`` set) when none
    qualifies.
    """
    if len(candidate_taus) == 0:
        raise OutOfRange("candidate_taus is empty")
    taus = sorted(float(t) for t in candidate_taus)
    base = config or FilterConfig()
    g = [s.g for s in step_response]
    ts = [s.timestamp for s in step_response]
    onsets, seconds = {}, {}
    for tau in taus:
        cfg = FilterConfig(base.dt, tau, base.process_noise_intensity,
                           base.measurement_noise_variance, base.initial_covariance_scale)
        onsets[tau], seconds[tau] = secondary_peak(run_filter(g, cfg, ts)[:, 2])
    if all(on <= suppression_threshold for on in onsets.values()):
        raise NoOnsetFound(f"no a_hat peak exceeds {suppression_threshold}")
    ok = [tau for tau in taus if seconds[tau] < suppression_threshold]
    if ok:
        return TauSelection(ok[-1], False, onsets, seconds)
    warnings.warn(f"no candidate tau suppresses the secondary peak; using {taus[0]}")
    return TauSelection(taus[0], True, onsets, seconds)
