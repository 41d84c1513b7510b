import json

import pytest

from sketchmatch.config import RunConfig, load_config
from sketchmatch.exceptions import ConfigurationError


def test_round_trip_and_hash(tmp_path):
    cfg = RunConfig()
    path = tmp_path / "c.json"
    path.write_text(cfg.dumps())
    loaded = load_config(path)
    assert loaded == cfg and loaded.hash() == cfg.hash()
    assert cfg.with_seed(3).hash() != cfg.hash()
    assert cfg.with_seed(3).train.seed == 3


def test_partial_document(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"train": {"epochs": 2, "weights": {"lambda1": 0.0}},
                                "protocol": {"ranks": [1, 10]}}))
    cfg = load_config(path)
    assert cfg.train.epochs == 2 and cfg.train.weights.lambda1 == 0.0
    assert cfg.train.weights.lambda2 == 1.0 and cfg.protocol.ranks == (1, 10)


@pytest.mark.parametrize("doc", [
    {"bogus": 1},
    {"train": {"learning_rat": 0.1}},
    {"train": {"augment": {"flip": 1}}},
    {"train": {"learning_rate": -1}},
    {"train": 3},
])
def test_rejects_bad_documents(doc):
    with pytest.raises(ConfigurationError):
        RunConfig.from_dict(doc)


def test_invalid_json(tmp_path):
    path = tmp_path / "c.json"
    path.write_text("{nope")
    with pytest.raises(ConfigurationError):
        load_config(path)


def test_augment_can_be_disabled():
    assert RunConfig.from_dict({"train": {"augment": None}}).train.augment is None
