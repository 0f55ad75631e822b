import pytest

from cvad.config import RunConfig, env_layer, resolve_config
from cvad.errors import ConfigError
from cvad.keyframes import KeyFrameStrategy


def test_defaults():
    c = resolve_config(environ={})
    assert c.segment_length == 24
    assert c.weights.as_tuple() == (1.0, 1.0, 1.0)
    assert c.scales == (48, 80, 120)
    assert c.strategy is KeyFrameStrategy.CLIP_THEN_GROUP
    assert c.sigma == 10.0


def test_precedence(tmp_path):
    cfg = tmp_path / "run.yaml"
    cfg.write_text("segment_length: 8\nsigma: 2.0\nmax_in_flight: 5\nretries: 1\n")
    env = {"CVAD_SIGMA": "3.5", "CVAD_MAX_IN_FLIGHT": "4", "HOME": "/x"}
    c = resolve_config({"max_in_flight": 2, "seed": None}, cfg, env)
    assert c.segment_length == 8  # file
    assert c.sigma == 3.5  # env beats file
    assert c.max_in_flight == 2  # flag beats env
    assert c.retries == 1


def test_profile_fills_unset_fields():
    c = resolve_config({"profile": "ave"}, environ={})
    assert c.weights.as_tuple() == (0.6, 0.3, 0.1)
    assert c.scales == (48, 80, 240)
    c = resolve_config({"profile": "sht", "weights": "1,0,0"}, environ={})
    assert c.weights.as_tuple() == (1.0, 0.0, 0.0)
    assert resolve_config({"profile": "ub"}, environ={}).weights.as_tuple() == (0.6, 0.1, 0.3)


def test_env_booleans_and_lists():
    layer = env_layer({"CVAD_USE_TEMPORAL": "false", "CVAD_SCALES": "48,120", "CVAD_UNRELATED_THING": "1"})
    assert layer == {"use_temporal": False, "scales": (48, 120)}


@pytest.mark.parametrize(
    "overrides",
    [
        {"segment_length": 6},
        {"scales": "50"},
        {"sigma": 0},
        {"profile": "nope"},
        {"weights": "1,1"},
        {"max_in_flight": 0},
        {"strategy": "magic"},
    ],
)
def test_invalid(overrides):
    with pytest.raises(ConfigError):
        resolve_config(overrides, environ={})


def test_unknown_file_key(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text('{"segment_lenght": 8}')
    with pytest.raises(ConfigError, match="unknown config key"):
        resolve_config(config_file=cfg, environ={})


def test_to_dict_hides_key():
    d = RunConfig(api_key="secret").to_dict()
    assert "api_key" not in d and d["strategy"] == "clip-group"
