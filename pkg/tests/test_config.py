import json
import math

import pytest

from robustfl.config import (
    ConfigError,
    config_to_dict,
    load_config,
    parse_config,
    serialize_config,
)

MINIMAL = json.dumps({
    "dataset": {"name": "synthetic"},
    "aggregator": {"kind": "mean"},
    "attack": {"kind": "none"},
})


def test_minimal_config_gets_documented_defaults():
    cfg = parse_config(MINIMAL)
    assert cfg.algorithm == "fedavg"
    assert cfg.num_clients == 20
    assert cfg.num_byzantine == 5
    assert cfg.rounds == 100
    assert cfg.batch_size == 128
    assert cfg.local_steps == 50
    assert cfg.seed == 0
    assert cfg.eval_interval == 1
    assert cfg.schedule.breakpoints == ((200, 0.1), (500, 0.05), (math.inf, 0.025))
    assert cfg.partition.kind == "iid"
    assert cfg.model.kind == "logistic"
    assert cfg.attack.kind == "none"


def test_fedsgd_defaults_differ():
    cfg = parse_config(json.dumps({
        "algorithm": "fedsgd",
        "dataset": {"name": "synthetic"},
        "aggregator": {"kind": "mean"},
    }))
    assert cfg.eval_interval == 10
    assert cfg.schedule.breakpoints[0] == (2000, 0.1)


def test_byzantine_majority_rejected():
    with pytest.raises(ConfigError, match="majority of the clients"):
        parse_config(json.dumps({
            "dataset": {"name": "synthetic"},
            "aggregator": {"kind": "mean"},
            "num_clients": 20,
            "num_byzantine": 10,
        }))


def test_aggregator_with_wrong_parameter_rejected():
    with pytest.raises(ConfigError, match="does not take parameter 'num_byzantine'"):
        parse_config(json.dumps({
            "dataset": {"name": "synthetic"},
            "aggregator": {"kind": "median", "num_byzantine": 3},
        }))


def test_unknown_top_level_key_rejected():
    with pytest.raises(ConfigError, match="unknown key 'lerning_rate'"):
        parse_config(json.dumps({
            "dataset": {"name": "synthetic"},
            "aggregator": {"kind": "mean"},
            "lerning_rate": 0.1,
        }))


def test_unknown_nested_key_rejected():
    with pytest.raises(ConfigError, match="unknown key 'alpa' in partition"):
        parse_config(json.dumps({
            "dataset": {"name": "synthetic"},
            "aggregator": {"kind": "mean"},
            "partition": {"kind": "dirichlet", "alpa": 0.1},
        }))


def test_missing_required_key_rejected():
    with pytest.raises(ConfigError, match="missing required key 'aggregator'"):
        parse_config(json.dumps({"dataset": {"name": "synthetic"}}))
    with pytest.raises(ConfigError, match="missing required key 'alpha'"):
        parse_config(json.dumps({
            "dataset": {"name": "synthetic"},
            "aggregator": {"kind": "mean"},
            "partition": {"kind": "dirichlet"},
        }))


def test_invalid_enum_rejected():
    with pytest.raises(ConfigError, match="invalid 'algorithm'"):
        parse_config(json.dumps({
            "algorithm": "gossip",
            "dataset": {"name": "synthetic"},
            "aggregator": {"kind": "mean"},
        }))
    with pytest.raises(ConfigError, match="unknown dataset name"):
        parse_config(json.dumps({
            "dataset": {"name": "cifar10"},
            "aggregator": {"kind": "mean"},
        }))


def test_ipm_requires_epsilon():
    with pytest.raises(ConfigError, match="'epsilon'"):
        parse_config(json.dumps({
            "dataset": {"name": "synthetic"},
            "aggregator": {"kind": "mean"},
            "attack": {"kind": "ipm"},
        }))


def test_invalid_json_reported():
    with pytest.raises(ConfigError, match="not valid JSON"):
        parse_config("{nope")


def test_mnist_requires_existing_dir(tmp_path):
    with pytest.raises(ConfigError, match="does not exist"):
        parse_config(json.dumps({
            "dataset": {"name": "mnist", "dir": str(tmp_path / "void")},
            "aggregator": {"kind": "mean"},
        }))


def test_mnist_config_parses(mnist_dir):
    cfg = parse_config(json.dumps({
        "dataset": {"name": "mnist", "dir": str(mnist_dir)},
        "aggregator": {"kind": "clipped_clustering"},
        "attack": {"kind": "sign_flip"},
    }))
    assert cfg.dataset.dir == str(mnist_dir)
    assert cfg.aggregator.linkage == "average"


def test_synthetic_rejects_mnist_parameter():
    with pytest.raises(ConfigError, match="does not take parameter 'dir'"):
        parse_config(json.dumps({
            "dataset": {"name": "synthetic", "dir": "somewhere"},
            "aggregator": {"kind": "mean"},
        }))


def test_roundtrip_equality():
    text = json.dumps({
        "algorithm": "fedsgd",
        "dataset": {"name": "synthetic", "classes": 3, "per_class": 50,
                    "dim": 4, "separation": 5.0},
        "partition": {"kind": "dirichlet", "alpha": 0.1},
        "model": {"kind": "mlp", "hidden": 64},
        "aggregator": {"kind": "krum", "num_byzantine": 2},
        "attack": {"kind": "ipm", "epsilon": 0.5},
        "num_clients": 10,
        "num_byzantine": 2,
        "rounds": 7,
        "batch_size": 32,
        "local_steps": 3,
        "schedule": [[100, 0.2], [None, 0.02]],
        "seed": 11,
        "eval_interval": 2,
        "capture_rounds": [0, 6],
        "output_path": "cell",
    })
    cfg = parse_config(text)
    assert cfg.schedule.breakpoints == ((100, 0.2), (math.inf, 0.02))
    again = parse_config(serialize_config(cfg))
    assert again == cfg
    assert config_to_dict(again) == config_to_dict(cfg)


def test_roundtrip_of_defaults():
    cfg = parse_config(MINIMAL)
    assert parse_config(serialize_config(cfg)) == cfg


def test_schedule_validation_message():
    with pytest.raises(ConfigError, match="schedule"):
        parse_config(json.dumps({
            "dataset": {"name": "synthetic"},
            "aggregator": {"kind": "mean"},
            "schedule": [[100, 0.1], [50, 0.2]],
        }))


def test_capture_rounds_must_be_list():
    with pytest.raises(ConfigError, match="capture_rounds"):
        parse_config(json.dumps({
            "dataset": {"name": "synthetic"},
            "aggregator": {"kind": "mean"},
            "capture_rounds": 3,
        }))


def test_load_config(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(MINIMAL, encoding="utf-8")
    assert load_config(path) == parse_config(MINIMAL)


def test_krum_assumption_checked_against_num_clients():
    with pytest.raises(ConfigError, match="krum needs"):
        parse_config(json.dumps({
            "dataset": {"name": "synthetic"},
            "aggregator": {"kind": "krum", "num_byzantine": 3},
            "num_clients": 5,
            "num_byzantine": 2,
        }))


def test_label_includes_attack_parameters():
    cfg = parse_config(json.dumps({
        "dataset": {"name": "synthetic"},
        "aggregator": {"kind": "krum", "num_byzantine": 5},
        "attack": {"kind": "ipm", "epsilon": 100.0},
    }))
    assert cfg.label() == "krum__ipm_eps100"
