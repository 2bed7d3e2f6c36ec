import json

import pytest

from segflow.config import ENV_VAR, SCHEMA, RunConfig, parse_override
from segflow.errors import InvalidConfig


def test_defaults():
    cfg = RunConfig()
    assert cfg["gmm.k_min"] == 2 and cfg["gmm.k_max"] == 8
    assert cfg["gmm.reg_eps"] == 1e-6
    assert cfg["kalman.normalizer"] == "p"
    assert cfg["detector.threshold"] == 5.0
    assert cfg["fusion.proximity_s"] == 0.5
    assert cfg["dmp.alpha"] == 25 and cfg["dmp.n_basis"] == 20 and cfg["dmp.k_c"] == 100
    assert cfg["dmp.goal_offset_m"] == 0.005 and cfg["dmp.goal_tol"] == 1e-3
    assert cfg["sim.rate_hz"] == 250 and cfg["sim.walls"] == ()
    assert cfg["seed"] is None


def test_unknown_key_rejected():
    with pytest.raises(InvalidConfig) as err:
        RunConfig({"gmm.kmax": 5})
    assert err.value.details["key"] == "gmm.kmax"


@pytest.mark.parametrize(
    "key,value",
    [
        ("gmm.k_max", 2.5),
        ("gmm.k_max", "8"),
        ("gmm.k_min", 0),
        ("gmm.reg_eps", -1.0),
        ("gmm.tol", float("nan")),
        ("kalman.normalizer", "q"),
        ("detector.false_alarm", 1.0),
        ("dmp.n_basis", 1),
        ("dmp.k_c", -1),
        ("sim.walls", {"normal": [0, 0, 1]}),
        ("sim.walls", [{"normal": [0, 0, 1]}]),
        ("sim.walls", [{"normal": [0, 0, 1], "offset": 0, "friction": 1}]),
        ("seed", True),
    ],
)
def test_bad_values(key, value):
    with pytest.raises(InvalidConfig):
        RunConfig({key: value})


def test_k_order():
    with pytest.raises(InvalidConfig):
        RunConfig({"gmm.k_min": 5, "gmm.k_max": 3})


def test_int_accepted_for_float():
    assert RunConfig({"dmp.alpha": 30})["dmp.alpha"] == 30.0


def test_nested_file_and_overrides(tmp_path, monkeypatch):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"gmm": {"k_max": 6}, "dmp.alpha": 30}))
    cfg = RunConfig.resolve(path, {"gmm.k_max": 7})
    assert cfg["gmm.k_max"] == 7 and cfg["dmp.alpha"] == 30

    monkeypatch.setenv(ENV_VAR, str(path))
    assert RunConfig.resolve()["gmm.k_max"] == 6
    monkeypatch.delenv(ENV_VAR)
    assert RunConfig.resolve()["gmm.k_max"] == 8


def test_bad_file(tmp_path):
    path = tmp_path / "c.json"
    path.write_text("{not json")
    with pytest.raises(InvalidConfig):
        RunConfig.load(path)
    path.write_text("[1, 2]")
    with pytest.raises(InvalidConfig):
        RunConfig.load(path)
    with pytest.raises(InvalidConfig):
        RunConfig.load(tmp_path / "missing.json")


def test_round_trip():
    cfg = RunConfig({"sim.walls": [{"normal": [0, 0, 1], "offset": 0.2}], "seed": 3})
    back = RunConfig(json.loads(json.dumps(cfg.to_dict())))
    assert back == cfg


@pytest.mark.parametrize(
    "text,expected",
    [
        ("gmm.k_max=5", ("gmm.k_max", 5)),
        ("kalman.normalizer=p_plus_r2", ("kalman.normalizer", "p_plus_r2")),
        ("sim.walls=[]", ("sim.walls", [])),
        (" dmp.alpha = 30.5", ("dmp.alpha", 30.5)),
    ],
)
def test_parse_override(text, expected):
    assert parse_override(text) == expected


def test_parse_override_needs_equals():
    with pytest.raises(InvalidConfig):
        parse_override("gmm.k_max")


def test_every_key_has_help():
    assert all(entry.help for entry in SCHEMA.values())
