#!/usr/bin/env python3
"""
Tests for config.json loading, validation, hashing and .env overrides
"""

import json

import pytest

from backbone import ConvBlockSpec
from errors import ConfigError
from pipeline_config import (
    DEFAULT_CONFIG_PATH,
    PipelineConfig,
    config_hash,
    default_margin_grid,
    load_pipeline_config,
    parse_pipeline_config,
    read_env_overrides,
)


def test_bundled_config_loads():
    config = load_pipeline_config(DEFAULT_CONFIG_PATH)
    assert config.backbone.feature_width == 256
    assert config.backbone.conv_blocks[0] == ConvBlockSpec(8)
    assert config.generator.spec_for(3, 256).stages == 2
    assert config.training.margin.m == 0.5
    assert config.training.augmentation.rotation_choices == [0, 90, 180, 270]
    assert config.svm.C == 1.0 and config.svm.tolerance == 0.1
    assert config.split.train_ratio == 0.8
    assert config.margin_search.margins == default_margin_grid()
    assert config.synthetic.image_side == config.backbone.input_side
    assert not config.ledger.enabled


def test_defaults_without_a_file():
    config = load_pipeline_config(None)
    assert isinstance(config, PipelineConfig)
    assert config.training.lr_backbone == 1e-6
    assert config.experiment.runs == 10


@pytest.mark.parametrize('raw', [
    {'training': {'epochs': 5, 'learning_rate': 0.1}},
    {'optimizer': {}},
    {'training': {'epochs': 0}},
    {'svm': {'C': -1}},
    {'split': {'train_ratio': 1.0}},
    {'experiment': {'svm_input': 'pixels'}},
    {'training': {'augmentation': {'rotation_choices': [30]}}},
    {'backbone': {'fc_widths': 'wide'}},
    {'margin_search': {'margins': [0.1, 0.25]}},
    {'logging': {'level': 'LOUD'}},
])
def test_invalid_sections_raise_config_error(raw):
    with pytest.raises(ConfigError):
        parse_pipeline_config(raw)


def test_missing_or_malformed_file(tmp_path):
    with pytest.raises(ConfigError):
        load_pipeline_config(tmp_path / 'absent.json')
    broken = tmp_path / 'broken.json'
    broken.write_text('{"training": ', encoding='utf-8')
    with pytest.raises(ConfigError):
        load_pipeline_config(broken)


def test_config_hash_is_stable_and_sensitive(tmp_path):
    raw = json.loads(DEFAULT_CONFIG_PATH.read_text(encoding='utf-8'))
    first = config_hash(parse_pipeline_config(raw))
    assert first == config_hash(parse_pipeline_config(json.loads(json.dumps(raw))))
    assert len(first) == 64
    raw['training']['margin'] = 0.6
    assert config_hash(parse_pipeline_config(raw)) != first


def test_env_overrides(tmp_path, monkeypatch):
    for name in ('DDIP_CONFIG', 'DDIP_LOG_LEVEL', 'DDIP_OUT_DIR'):
        monkeypatch.delenv(name, raising=False)
    env_file = tmp_path / '.env'
    env_file.write_text('DDIP_LOG_LEVEL=DEBUG\nDDIP_OUT_DIR=/tmp/ddip\n', encoding='utf-8')
    monkeypatch.setenv('DDIP_CONFIG', 'custom.json')
    overrides = read_env_overrides(env_file)
    assert overrides.config_path == 'custom.json'
    assert overrides.log_level == 'DEBUG'
    assert overrides.out_dir == '/tmp/ddip'
