"""Pipeline and scenario configuration.

Configuration lives in one TOML file whose tables mirror the module
namespaces (``[filter]``, ``[events]``, ...).  Every key has a default and
unknown keys are rejected.  Command-line overrides use ``--set key=value``
where ``value`` is a TOML literal (bare words fall back to strings).
"""

from __future__ import annotations

import math
import sys
from pathlib import Path
from typing import Any, Iterable, Mapping, Optional

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import acquisition, events, kalman, stereo
from .errors import ConfigError
from .simulator import DEFAULT_PROFILES, Puff, SensorProfile, SimScenario
from .stereo import Direction

_SIM = SimScenario()

# key -> (default, kind)
SCHEMA: dict[str, tuple[Any, str]] = {
    "acquisition.baseline_s": (acquisition.DEFAULT_BASELINE_S, "pos_float"),
    "acquisition.upshift_threshold": (acquisition.DEFAULT_UPSHIFT, "float"),
    "acquisition.downshift_threshold": (acquisition.DEFAULT_DOWNSHIFT, "float"),
    "filter.dt_s": (kalman.DEFAULT_DT, "pos_float"),
    "filter.tau_s": (kalman.DEFAULT_TAU, "per_sensor_float"),
    "filter.q": (kalman.DEFAULT_Q, "pos_float"),
    "filter.r": (kalman.DEFAULT_R, "pos_float"),
    "filter.p0": (kalman.DEFAULT_P0, "pos_float"),
    "events.theta": (events.DEFAULT_THETA, "per_source_float"),
    "events.source": ("o", "source"),
    "events.histogram_bin_s": (events.DEFAULT_BIN_S, "pos_float"),
    "events.discard_off": (True, "bool"),
    "stereo.outlier_cutoff_s": (stereo.DEFAULT_OUTLIER_CUTOFF, "pos_float"),
    "stereo.window_s": (stereo.DEFAULT_WINDOW, "pos_float"),
    "stereo.fuse": (False, "bool"),
    "simulator.seed": (_SIM.seed, "int"),
    "simulator.sample_rate": (_SIM.sample_rate, "float"),
    "simulator.duration": (_SIM.duration, "float"),
    "simulator.n_trials": (_SIM.n_trials, "int"),
    "simulator.direction_schedule": (_SIM.direction_schedule, "str"),
    "simulator.sensor_spacing": (_SIM.sensor_spacing, "float"),
    "simulator.source_distance": (_SIM.source_distance, "float"),
    "simulator.puff_speed": (_SIM.puff_speed, "float"),
    "simulator.puffs": ([{"release_time": 2.0, "direction": "left_to_right", "amplitude": 2.0}], "puffs"),
    "simulator.jitter_sd": (_SIM.jitter_sd, "float"),
    "simulator.outlier_probability": (_SIM.outlier_probability, "float"),
    "simulator.outlier_delay": (list(_SIM.outlier_delay), "float_pair"),
    "simulator.rise_tau": (_SIM.rise_tau, "float"),
    "simulator.decay_tau": (_SIM.decay_tau, "float"),
    "simulator.noise_sd": (_SIM.noise_sd, "float"),
    "simulator.drift_sd": (_SIM.drift_sd, "float"),
    "simulator.side_latency_bias": (_SIM.side_latency_bias, "float"),
    "simulator.pair_latency_bias": ({}, "float_table"),
    "simulator.bit_depth": (_SIM.bit_depth, "int"),
    "simulator.baseline_g_rel": (_SIM.baseline_g_rel, "float"),
    "simulator.upshift_threshold": (_SIM.upshift_threshold, "float"),
    "simulator.downshift_threshold": (_SIM.downshift_threshold, "float"),
    "simulator.pairs": (list(_SIM.pairs), "str_list"),
    "simulator.profiles": ({k: {"rise_scale": v.rise_scale, "amplitude_scale": v.amplitude_scale}
                            for k, v in DEFAULT_PROFILES.items()}, "profiles"),
    "simulator.rng": (_SIM.rng, "str"),
}


def _float(key: str, value) -> float:
    v = None
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        v = float(value)
    elif isinstance(value, str):
        try:
            v = float(value)
        except ValueError:
            pass
    if v is None or math.isnan(v):
        raise ConfigError(f"{key}: expected a number, got {value!r}")
    return v


def _coerce(key: str, value, kind: str):
    if kind == "float":
        return _float(key, value)
    if kind == "pos_float":
        v = _float(key, value)
        if not v > 0:
            raise ConfigError(f"{key}: must be positive, got {value!r}")
        return v
    if kind == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{key}: expected an integer, got {value!r}")
        return value
    if kind == "bool":
        if not isinstance(value, bool):
            raise ConfigError(f"{key}: expected true/false, got {value!r}")
        return value
    if kind == "str":
        if not isinstance(value, str):
            raise ConfigError(f"{key}: expected a string, got {value!r}")
        return value
    if kind == "source":
        try:
            return events.Source.parse(value).value
        except ValueError as exc:
            raise ConfigError(f"{key}: {exc}") from None
    if kind in ("per_sensor_float", "per_source_float"):
        if isinstance(value, Mapping):
            table = {str(k): _float(f"{key}.{k}", v) for k, v in value.items()}
            if kind == "per_source_float":
                for k in table:
                    if k not in ("g", "o", "default"):
                        raise ConfigError(f"{key}.{k}: unknown source (use g, o or default)")
            if any(not v > 0 for v in table.values()):
                raise ConfigError(f"{key}: values must be positive")
            return table
        v = _float(key, value)
        if not v > 0:
            raise ConfigError(f"{key}: must be positive, got {value!r}")
        return v
    if kind == "float_pair":
        if not isinstance(value, (list, tuple)) or len(value) != 2:
            raise ConfigError(f"{key}: expected [low, high], got {value!r}")
        return [_float(key, v) for v in value]
    if kind == "float_table":
        if not isinstance(value, Mapping):
            raise ConfigError(f"{key}: expected a table, got {value!r}")
        return {str(k): _float(f"{key}.{k}", v) for k, v in value.items()}
    if kind == "str_list":
        if not isinstance(value, (list, tuple)) or not all(isinstance(v, str) for v in value):
            raise ConfigError(f"{key}: expected a list of strings, got {value!r}")
        return list(value)
    if kind == "puffs":
        if not isinstance(value, (list, tuple)) or not value:
            raise ConfigError(f"{key}: expected a non-empty list of puff tables")
        out = []
        for i, p in enumerate(value):
            if not isinstance(p, Mapping):
                raise ConfigError(f"{key}[{i}]: expected a table")
            extra = set(p) - {"release_time", "direction", "amplitude"}
            if extra:
                raise ConfigError(f"{key}[{i}]: unknown field(s) {sorted(extra)}")
            if "release_time" not in p:
                raise ConfigError(f"{key}[{i}].release_time is required")
            try:
                direction = Direction.parse(p.get("direction", "left_to_right")).value
            except ValueError as exc:
                raise ConfigError(f"{key}[{i}].direction: {exc}") from None
            out.append({"release_time": _float(f"{key}[{i}].release_time", p["release_time"]),
                        "direction": direction,
                        "amplitude": _float(f"{key}[{i}].amplitude", p.get("amplitude", 2.0))})
        return out
    if kind == "profiles":
        if not isinstance(value, Mapping):
            raise ConfigError(f"{key}: expected a table of sensor profiles")
        out = {}
        for name, prof in value.items():
            if not isinstance(prof, Mapping):
                raise ConfigError(f"{key}.{name}: expected a table")
            extra = set(prof) - {"rise_scale", "amplitude_scale"}
            if extra:
                raise ConfigError(f"{key}.{name}: unknown field(s) {sorted(extra)}")
            out[str(name)] = {f: _float(f"{key}.{name}.{f}", prof.get(f, 1.0))
                              for f in ("rise_scale", "amplitude_scale")}
        return out
    raise AssertionError(kind)


def _flatten(table: Mapping, prefix: str = "") -> Iterable[tuple[str, Any]]:
    for k, v in table.items():
        key = f"{prefix}{k}"
        if key in SCHEMA:
            yield key, v
        elif isinstance(v, Mapping) and any(s.startswith(key + ".") for s in SCHEMA):
            yield from _flatten(v, key + ".")
        else:
            raise ConfigError(f"unknown config key {key!r}")


class Config(dict):
    """Flat mapping of dotted keys to validated values."""

    @classmethod
    def defaults(cls) -> "Config":
        import copy
        return cls({k: copy.deepcopy(v) for k, (v, _) in SCHEMA.items()})

    def set(self, key: str, value) -> None:
        if key not in SCHEMA:
            raise ConfigError(f"unknown config key {key!r}")
        self[key] = _coerce(key, value, SCHEMA[key][1])

    def update_from(self, table: Mapping) -> None:
        for key, value in _flatten(table):
            self.set(key, value)

    def section(self, name: str) -> dict:
        n = len(name) + 1
        return {k[n:]: v for k, v in self.items() if k.startswith(name + ".")}

    def tau_for(self, channel_id: str) -> float:
        return per_sensor(self["filter.tau_s"], channel_id)

    def theta_for(self, source: str) -> float:
        th = self["events.theta"]
        if isinstance(th, Mapping):
            return th.get(source, th.get("default", events.DEFAULT_THETA))
        return th

    def filter_config(self, channel_id: str = "") -> kalman.FilterConfig:
        try:
            return kalman.FilterConfig(self["filter.dt_s"], self.tau_for(channel_id),
                                       self["filter.q"], self["filter.r"], self["filter.p0"])
        except ValueError as exc:
            raise ConfigError(f"filter: {exc}") from None

    def scenario(self) -> SimScenario:
        s = self.section("simulator")
        puffs = tuple(Puff(p["release_time"], Direction.parse(p["direction"]), p["amplitude"])
                      for p in s.pop("puffs"))
        profiles = {k: SensorProfile(**v) for k, v in s.pop("profiles").items()}
        return SimScenario(puffs=puffs, profiles=profiles,
                           outlier_delay=tuple(s.pop("outlier_delay")),
                           pairs=tuple(s.pop("pairs")), **s)


def sensor_label(channel_id: str) -> str:
    return channel_id.rsplit("/", 1)[-1]


def per_sensor(value, channel_id: str) -> float:
    """Resolve a scalar-or-table setting for a channel (label, sensor type, then ``default``)."""
    if not isinstance(value, Mapping):
        return value
    from .simulator import SENSOR_TYPES
    label = sensor_label(channel_id)
    for key in (label, SENSOR_TYPES.get(label), "default"):
        if key is not None and key in value:
            return value[key]
    return kalman.DEFAULT_TAU


def parse_override(text: str) -> tuple[str, Any]:
    if "=" not in text:
        raise ConfigError(f"--set expects KEY=VALUE, got {text!r}")
    key, raw = text.split("=", 1)
    key, raw = key.strip(), raw.strip()
    try:
        value = tomllib.loads(f"v = {raw}")["v"]
    except tomllib.TOMLDecodeError:
        value = raw
    return key, value


def load_config(path=None, overrides: Iterable[str] = (),
                seed: Optional[int] = None) -> Config:
    """Defaults, then each file in ``path`` (one path or a list), then ``--set`` overrides."""
    cfg = Config.defaults()
    paths = [] if path is None else [path] if isinstance(path, (str, Path)) else list(path)
    for p in paths:
        text = Path(p).read_text(encoding="utf-8")
        try:
            table = tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{p}: {exc}") from None
        try:
            cfg.update_from(table)
        except ConfigError as exc:
            raise ConfigError(f"{p}: {exc}") from None
    for item in overrides:
        cfg.set(*parse_override(item))
    if seed is not None:
        cfg.set("simulator.seed", seed)
    if not 0 < cfg["acquisition.upshift_threshold"] < cfg["acquisition.downshift_threshold"] < 1:
        raise ConfigError("acquisition.upshift_threshold: need 0 < upshift < downshift < 1")
    tau = cfg["filter.tau_s"]
    for v in (tau.values() if isinstance(tau, Mapping) else [tau]):
        if math.isfinite(v) and cfg["filter.dt_s"] >= v:
            raise ConfigError(f"filter.tau_s: {v} must exceed filter.dt_s")
    return cfg
