"""Config schema, strict parsing, and hash stability tests."""

import json

import pytest

from compound_uq.config import (
    CONFIG_SCHEMA_VERSION,
    ExperimentConfig,
    config_from_dict,
    load_config,
)
from compound_uq.errors import InputError, SpecError


def test_defaults():
    cfg = config_from_dict({})
    assert cfg.env_id == "DriftBot"
    assert cfg.onset_t == 50
    assert cfg.horizon == 1000
    assert cfg.m_members == 5
    assert cfg.t_pre == 300
    assert cfg.grid.po_levels == (0.0, 0.25, 0.5)
    assert cfg.grid.delay_levels == (0, 1)
    assert cfg.grid.shift_levels == (None, ("gain_left", 0.5))
    assert cfg.grid.seeds == tuple(range(10))
    assert cfg.adaptive.enabled and cfg.adaptive.every == 10
    assert cfg.thresholds.tau_low is None and cfg.thresholds.tau_high is None


@pytest.mark.parametrize(
    "raw",
    [
        {"not_a_key": 1},
        {"grid": {"po_levels": [0.0], "bogus": []}},
        {"ensemble": {"members": 5}},
        {"policy": {"alpha": 1.0}},
        {"adaptive": {"every": 10, "rate": 0.1}},
        {"thresholds": {"tau_mid": 0.3}},
    ],
)
def test_unknown_keys_rejected_at_every_level(raw):
    with pytest.raises(InputError):
        config_from_dict(raw)


def test_schema_version_mismatch():
    with pytest.raises(InputError):
        config_from_dict({"schema_version": CONFIG_SCHEMA_VERSION + 1})
    assert config_from_dict({"schema_version": CONFIG_SCHEMA_VERSION}).env_id == "DriftBot"


def test_non_object_document():
    with pytest.raises(InputError):
        config_from_dict([1, 2, 3])


def test_shift_level_shapes():
    cfg = config_from_dict({"grid": {"shift_levels": [None, ["gain_left", 0.5]]}})
    assert cfg.grid.shift_levels == (None, ("gain_left", 0.5))
    with pytest.raises(InputError):
        config_from_dict({"grid": {"shift_levels": [["gain_left"]]}})
    with pytest.raises(InputError):
        config_from_dict({"grid": {"shift_levels": ["gain_left=0.5"]}})


def test_shift_levels_validated_against_env():
    # stiffness is a MassSpring1D parameter, not a DriftBot one.
    with pytest.raises(SpecError):
        config_from_dict({"env_id": "DriftBot", "grid": {"shift_levels": [["stiffness", 3.0]]}})
    cfg = config_from_dict({"env_id": "MassSpring1D", "grid": {"shift_levels": [None, ["stiffness", 3.0]]}})
    assert cfg.grid.shift_levels[1] == ("stiffness", 3.0)


def test_threshold_overrides_must_come_in_pairs():
    with pytest.raises(InputError):
        config_from_dict({"thresholds": {"tau_low": 0.2}})
    cfg = config_from_dict({"thresholds": {"tau_low": 0.2, "tau_high": 0.5}})
    assert cfg.thresholds.tau_low == 0.2 and cfg.thresholds.tau_high == 0.5


@pytest.mark.parametrize(
    "raw",
    [
        {"env_id": "HoverDrone"},
        {"horizon": 300, "onset_t": 300},
        {"ensemble": {"m_members": 1}},
        {"ensemble": {"t_pre": 0}},
        {"probe_episodes": 0},
        {"sweep_workers": 0},
    ],
)
def test_semantic_validation(raw):
    with pytest.raises(InputError):
        config_from_dict(raw)


def test_hash_ignores_operational_fields():
    base = config_from_dict({})
    moved = config_from_dict({"output_dir": "elsewhere", "sweep_workers": 4})
    assert base.config_hash() == moved.config_hash()
    assert len(base.config_hash()) == 16


def test_hash_tracks_substantive_fields():
    base = config_from_dict({})
    assert base.config_hash() != config_from_dict({"horizon": 999}).config_hash()
    assert base.config_hash() != config_from_dict({"policy": {"alpha_max": 7.0}}).config_hash()


def test_roundtrip_through_dict():
    cfg = config_from_dict(
        {
            "env_id": "MassSpring1D",
            "horizon": 400,
            "onset_t": 150,
            "grid": {
                "po_levels": [0.0, 0.5],
                "delay_levels": [0, 1],
                "shift_levels": [None, ["stiffness", 3.0]],
                "seeds": [0, 1, 2],
            },
            "ensemble": {"m_members": 3, "t_pre": 120, "epochs": 40},
            "thresholds": {"tau_low": 0.2, "tau_high": 0.5},
        }
    )
    again = config_from_dict(cfg.to_dict())
    assert again == cfg
    assert again.config_hash() == cfg.config_hash()


def test_with_output_dir_only_changes_output_dir():
    cfg = config_from_dict({})
    moved = cfg.with_output_dir("/tmp/elsewhere")
    assert moved.output_dir == "/tmp/elsewhere"
    assert moved.config_hash() == cfg.config_hash()
    assert moved.grid == cfg.grid


def test_load_config_errors(tmp_path):
    with pytest.raises(InputError):
        load_config(str(tmp_path / "missing.json"))
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(InputError):
        load_config(str(bad))


def test_load_config_roundtrip(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"env_id": "DriftBot", "horizon": 500, "onset_t": 200}))
    cfg = load_config(str(path))
    assert cfg.horizon == 500 and cfg.onset_t == 200
    assert isinstance(cfg, ExperimentConfig)
