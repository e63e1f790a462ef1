import math

import pytest

from enose.config import SCHEMA, Config, load_config, parse_override, per_sensor
from enose.errors import ConfigError
from enose.events import Source
from enose.reproduce import FIGURES, load_scenario, scenario_path
from enose.simulator import SimScenario


def write(tmp_path, text):
    p = tmp_path / "c.toml"
    p.write_text(text)
    return p


def test_every_key_has_default():
    cfg = Config.defaults()
    assert set(cfg) == set(SCHEMA)
    assert cfg.filter_config().tau == 3.0
    assert cfg.theta_for("o") == 0.02 == cfg.theta_for("g")
    assert cfg.scenario() == SimScenario()


def test_unknown_key_rejected(tmp_path):
    with pytest.raises(ConfigError, match="filter.tua_s"):
        load_config(write(tmp_path, "[filter]\ntua_s = 3\n"))
    with pytest.raises(ConfigError, match="unknown config key"):
        load_config(None, ["events.thetaa=0.1"])


def test_type_errors_name_key(tmp_path):
    with pytest.raises(ConfigError, match="filter.q"):
        load_config(write(tmp_path, "[filter]\nq = 'big'\n"))
    with pytest.raises(ConfigError, match="simulator.n_trials"):
        load_config(None, ["simulator.n_trials=2.5"])
    with pytest.raises(ConfigError, match="filter.tau_s"):
        load_config(None, ["filter.tau_s=0.001"])
    with pytest.raises(ConfigError, match="filter.r"):
        load_config(None, ["filter.r=nan"])


def test_toml_syntax_error_reports_location(tmp_path):
    with pytest.raises(ConfigError, match="line 1"):
        load_config(write(tmp_path, "[filter\n"))


def test_per_sensor_tau(tmp_path):
    cfg = load_config(write(tmp_path, '[filter]\ntau_s = { TGS2602 = 5.0, S3 = "inf", default = 2.0 }\n'))
    assert cfg.tau_for("T000/S1") == 5.0
    assert math.isinf(cfg.tau_for("left/S3"))
    assert cfg.tau_for("S0") == 2.0
    assert per_sensor({"S0": 1.0}, "X") == 3.0


def test_per_source_theta():
    cfg = load_config(None, ["events.theta={ g = 0.05 }"])
    assert cfg.theta_for("g") == 0.05 and cfg.theta_for("o") == 0.02
    with pytest.raises(ConfigError):
        load_config(None, ["events.theta={ x = 0.05 }"])


def test_override_parsing():
    assert parse_override("events.source=g") == ("events.source", "g")
    assert parse_override("filter.tau_s = inf") == ("filter.tau_s", math.inf)
    assert parse_override("simulator.pairs=['S0','S1']") == ("simulator.pairs", ["S0", "S1"])
    with pytest.raises(ConfigError):
        parse_override("nokey")
    assert load_config(None, ["events.source=bout_velocity"])["events.source"] == Source.BOUT_VELOCITY.value


def test_layering_and_seed(tmp_path):
    a = write(tmp_path, "[simulator]\nseed = 4\nn_trials = 3\n")
    b = tmp_path / "b.toml"
    b.write_text("[simulator]\nn_trials = 5\n")
    cfg = load_config([a, b], ["simulator.duration=4.0"], seed=9)
    assert (cfg["simulator.seed"], cfg["simulator.n_trials"], cfg["simulator.duration"]) == (9, 5, 4.0)


def test_gain_thresholds_checked():
    with pytest.raises(ConfigError, match="upshift"):
        load_config(None, ["acquisition.upshift_threshold=0.99"])


def test_puff_table_validation():
    with pytest.raises(ConfigError, match=r"simulator.puffs\[0\]"):
        load_config(None, ["simulator.puffs=[{when = 1.0}]"])
    cfg = load_config(None, ["simulator.puffs=[{release_time = 1.0, direction = 'right_to_left'}]"])
    assert cfg.scenario().puffs[0].amplitude == 2.0


@pytest.mark.parametrize("name", ["stereo", "single_puff", "two_puff", "bitdepth"])
def test_bundled_scenarios_load(name):
    sc, cfg = load_scenario(name)
    assert scenario_path(name).exists()
    assert sc.rng == "numpy.PCG64+SeedSequence"


def test_stereo_scenario_is_forty_balanced_trials():
    sc, _ = load_scenario("stereo")
    assert sc.n_trials == 40 and sc.direction_schedule == "alternate"
    assert FIGURES == ("kalman", "spikes", "delays", "bitdepth")
