import json

import numpy as np
import pytest

from tethersim.config import ScenarioConfig, config_from_dict, dump_config, load_config
from tethersim.errors import ConfigParseError, ConfigValidationError


def test_empty_object_gives_defaults():
    cfg = config_from_dict({})
    assert cfg == ScenarioConfig()
    assert cfg.tether.n == 3 and cfg.tether.l_R == 2.0
    assert cfg.sim.baumgarte_alpha == 5.0 and cfg.sim.baumgarte_beta == 5.0


def test_negative_tether_length_names_field():
    with pytest.raises(ConfigValidationError) as info:
        config_from_dict({"tether": {"l_R": -1.0}})
    assert info.value.field == "tether.l_R"


def test_unknown_key_rejected():
    with pytest.raises(ConfigValidationError) as info:
        config_from_dict({"tether": {"length": 2.0}})
    assert "tether" in info.value.field


def test_non_object_rejected():
    with pytest.raises(ConfigValidationError):
        config_from_dict([1, 2])


def test_parse_error_reports_position(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{\n  "tether": {"l_R": 2.0,}\n}\n')
    with pytest.raises(ConfigParseError) as info:
        load_config(p)
    assert info.value.line == 2 and info.value.column is not None


def test_missing_file_is_parse_error_without_position(tmp_path):
    with pytest.raises(ConfigParseError) as info:
        load_config(tmp_path / "nope.json")
    assert info.value.line is None


@pytest.mark.parametrize("data, field", [
    ({"balloon": {"gas_density": 2.0}}, "balloon.gas_density"),
    ({"mpc": {"a_u": -0.1}}, "mpc"),
    ({"references": [{"t": 5, "position": [0, 0, 0]}, {"t": 5, "position": [0, 0, 0]}]}, "references"),
    ({"initial": {"swing": [2.0, 0.0]}}, "initial.swing"),
])
def test_cross_field_checks(data, field):
    with pytest.raises(ConfigValidationError) as info:
        config_from_dict(data)
    assert info.value.field.startswith(field)


def test_bundled_scenario():
    cfg = load_config("scenario_fig4.json")
    assert cfg.tether.n == 3
    assert cfg.mpc.sample_time == 1.0 and cfg.mpc.horizon == 15 and cfg.mpc.a_u == 0.1
    assert cfg.sim.duration == 40.0
    np.testing.assert_allclose(cfg.references[-1].position, [1.0, -1.0, 0.1])


@pytest.mark.parametrize("name", ["scenario_fig4.json", "equilibrium.json"])
def test_round_trip(tmp_path, name):
    cfg = load_config(name)
    p = tmp_path / "rt.json"
    p.write_text(json.dumps(dump_config(cfg)))
    assert load_config(p) == cfg
