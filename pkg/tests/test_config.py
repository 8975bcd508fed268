import json

import pytest

from config import (SCHEMA_VERSION, apply_overrides, config_from_dict, config_hash, default_config, get_profile,
                    load_config, parse_override, save_config)
from errors import ConfigError
from qoe import QoeWeights
from rl_agent import TrainConfig


def write_json(path, payload):
    path.write_text(json.dumps(payload))
    return str(path)


def test_defaults():
    config = load_config()
    assert config.schema_version == SCHEMA_VERSION
    assert config.quality.ladder_mbps == [2.0, 2.5, 3.0, 3.5, 4.0]
    assert (config.simulation.db_cap, config.simulation.pb_cap) == (5, 5)
    assert (config.simulation.k1, config.simulation.k2) == (8, 8)
    assert config.qoe_weights() == QoeWeights(1, 1, 30)
    train = config.train_config()
    assert (train.gamma, train.eta, train.actor_lr, train.critic_lr) == (0.9, 0.01, 0.5, 1e-4)
    assert train.hidden == (128, 128)
    assert train == TrainConfig()
    assert [p.name for p in config.training_profiles()] == ['ultra_high', 'high', 'medium', 'low']


def test_partial_file_keeps_other_defaults(tmp_path):
    path = write_json(tmp_path / 'config.json', {'training': {'episodes': 10}, 'qoe': {'weights': 'strict'}})
    config = load_config(path)
    assert config.training.episodes == 10
    assert config.training.gamma == 0.9
    assert config.qoe_weights() == QoeWeights(1, 1, 90)


@pytest.mark.parametrize("payload", [
    {'networking': {}},
    {'training': {'epochs': 3}},
    {'training': 5},
    {'schema_version': 2},
    {'evaluation': {'split': 'validation'}},
    {'training': {'gamma': 1.5}},
    {'evaluation': {'profile': 'quantum'}},
    {'corpus': {'min_chunks': 10, 'max_chunks': 5}},
])
def test_invalid_files(tmp_path, payload):
    with pytest.raises(ConfigError):
        load_config(write_json(tmp_path / 'config.json', payload))


def test_missing_and_malformed_files(tmp_path):
    with pytest.raises(ConfigError):
        load_config(str(tmp_path / 'absent.json'))
    bad = tmp_path / 'bad.json'
    bad.write_text('{not json')
    with pytest.raises(ConfigError):
        load_config(str(bad))
    with pytest.raises(ConfigError):
        load_config(write_json(tmp_path / 'list.json', [1, 2]))


@pytest.mark.parametrize("text, expected", [
    ('training.episodes=50', ('training', 'episodes', 50)),
    ('qoe.weights=[1, 1, 60]', ('qoe', 'weights', [1, 1, 60])),
    ('evaluation.split=train', ('evaluation', 'split', 'train')),
    ('training.asynchronous=true', ('training', 'asynchronous', True)),
])
def test_parse_override(text, expected):
    assert parse_override(text) == expected


@pytest.mark.parametrize("text", ['episodes=50', 'training.episodes', '.x=1', 'training.=1'])
def test_malformed_override(text):
    with pytest.raises(ConfigError):
        parse_override(text)


def test_overrides_apply_after_the_file(tmp_path):
    path = write_json(tmp_path / 'config.json', {'training': {'episodes': 10}})
    config = load_config(path, overrides=['training.episodes=20', 'qoe.weights=moderate'])
    assert config.training.episodes == 20
    assert config.qoe_weights() == QoeWeights(1, 1, 60)
    with pytest.raises(ConfigError):
        apply_overrides(default_config(), ['nowhere.key=1'])


def test_hash_is_stable_and_sensitive(tmp_path):
    a = default_config()
    b = config_from_dict({})
    assert config_hash(a) == config_hash(b)
    b.training.seed = 1
    assert config_hash(a) != config_hash(b)


def test_saved_config_loads_back(tmp_path):
    config = default_config()
    config.corpus.num_videos = 12
    path = tmp_path / 'saved.json'
    save_config(config, str(path))
    loaded = load_config(str(path))
    assert config_hash(loaded) == config_hash(config)


def test_get_profile():
    assert get_profile('medium').name == 'medium'
    with pytest.raises(ConfigError):
        get_profile('turbo')
