"""Dotted-key schema: parsing, precedence, round-trip printing."""

import numpy as np
import pytest

from bitrec.config import (
    KNOWN_KEYS,
    ConfigError,
    RunConfig,
    format_value,
    parse_value,
    read_config_file,
    resolve_config,
)


def test_every_key_has_parseable_default():
    cfg = RunConfig({})
    for key, (kind, default) in KNOWN_KEYS.items():
        assert cfg[key] == default
        assert parse_value(key, format_value(default)) == default


def test_parse_value_kinds():
    assert parse_value("model.d", "32") == 32
    assert parse_value("train.learning_rate", "5e-4") == 5e-4
    assert parse_value("model.enable_hba", "false") is False
    assert parse_value("model.enable_hba", "True") is True
    assert parse_value("model.enable_hba", "0") is False
    assert parse_value("model.intensity_mode", " none ") == "none"
    assert parse_value("eval.cutoffs", "5,10,20") == (5, 10, 20)
    assert parse_value("ablation.variants", "full, no_hba") == ("full", "no_hba")
    assert parse_value("eval.cutoffs", "") == ()


def test_parse_value_rejects_garbage():
    with pytest.raises(ConfigError, match="expected int"):
        parse_value("model.d", "big")
    with pytest.raises(ConfigError, match="expected bool"):
        parse_value("model.enable_hba", "maybe")
    with pytest.raises(ConfigError, match="unknown config key"):
        parse_value("model.width", "3")
    with pytest.raises(ConfigError, match="expected int_list"):
        parse_value("eval.cutoffs", "10,x")


def test_config_file_parsing(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("# comment\n\nmodel.d = 24\ntrain.epochs=3\n  seed =  9 \n")
    raw = read_config_file(path)
    assert raw == {"model.d": "24", "train.epochs": "3", "seed": "9"}


def test_config_file_unknown_key_names_line(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("model.d = 24\nmodel.dd = 1\n")
    with pytest.raises(ConfigError, match=r":2: unknown config key 'model.dd'"):
        read_config_file(path)


def test_config_file_requires_assignment(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("model.d 24\n")
    with pytest.raises(ConfigError, match="expected 'key = value'"):
        read_config_file(path)


def test_precedence_cli_over_file_over_default(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("model.d = 24\nmodel.heads = 4\n")
    cfg = resolve_config(path, {"model.d": "16"})
    assert cfg["model.d"] == 16          # command line wins
    assert cfg["model.heads"] == 4       # file beats default
    assert cfg["model.layers"] == 2      # untouched default


def test_resolved_text_reproduces_config(tmp_path):
    cfg = resolve_config(None, {"model.d": "16", "eval.cutoffs": "5,25", "seed": "3"})
    path = tmp_path / "resolved.cfg"
    path.write_text(cfg.format())
    assert resolve_config(path, {}) == cfg


def test_unknown_override_rejected():
    with pytest.raises(ConfigError, match="unknown config key"):
        resolve_config(None, {"model.nope": "1"})
    with pytest.raises(ConfigError):
        RunConfig({"model.nope": 1})


def test_structured_views():
    cfg = resolve_config(None, {
        "model.d": "16", "model.L": "8", "model.enable_tre": "false",
        "train.epochs": "4", "seed": "11", "split.min_length": "5",
        "synth.users": "77",
    })
    mc = cfg.model_config(item_count=30, behavior_count=4, category_count=6)
    assert (mc.d, mc.L, mc.enable_tre, mc.item_count) == (16, 8, False, 30)
    tc = cfg.train_config()
    assert tc.epochs == 4
    assert tc.rng_seed == 11
    assert cfg.split_spec().min_length == 5
    assert cfg.synthetic_config().user_count == 77
    assert cfg.synthetic_config().rng_seed == 11


def test_float_formatting_round_trips():
    for value in (0.1, 2e-4, 1.0 / 3.0, 12.0):
        text = format_value(value)
        assert float(text) == value
    assert format_value(True) == "true"
    assert format_value((10, 50)) == "10,50"
    assert np.isclose(float(format_value(0.30000000000000004)), 0.30000000000000004)
