import json
from pathlib import Path

import pytest

from mfawb.config import ConfigError, WorkbenchConfig, load_config, parse_config

EXAMPLE = Path(__file__).resolve().parent.parent / "configs" / "example.json"


def test_defaults():
    cfg = parse_config({})
    assert cfg == WorkbenchConfig()


def test_example_file_loads():
    cfg = load_config(EXAMPLE)
    assert cfg.trials >= 1
    assert cfg.suite.fuzzy_bits % 8 == 0


def test_full_document():
    cfg = parse_config({"seed": "exp-1", "trials": 3, "format": "markdown", "jobs": 2,
                        "suite": {"hash_name": "sha256", "fuzzy_t": 4},
                        "adversary": {"channel": "full-mitm", "stores": ["G.db"]}})
    assert cfg.seed == "exp-1" and cfg.jobs == 2
    assert cfg.suite.hash_name == "sha256" and cfg.suite.fuzzy_t == 4
    assert cfg.adversary.channel == "full-mitm" and cfg.adversary.stores == ("G.db",)


@pytest.mark.parametrize("doc, message", [
    ({"sede": 1}, "unknown top-level key"),
    ({"suite": {"hash": "x"}}, "unknown suite key"),
    ({"adversary": {"chanel": "none"}}, "unknown adversary key"),
    ({"trials": 0}, "positive integer"),
    ({"trials": True}, "positive integer"),
    ({"seed": 1.5}, "seed"),
    ({"format": "xml"}, "format"),
    ({"suite": {"key_len": 20}}, "suite:"),
    ({"adversary": {"channel": "radio"}}, "channel"),
    ({"adversary": {"historical_fraction": 2}}, "adversary:"),
    ([], "JSON object"),
])
def test_invalid_documents(doc, message):
    with pytest.raises(ConfigError, match=message):
        parse_config(doc)


def test_load_errors(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text('{"seed": 1,\n  "trials": }')
    with pytest.raises(ConfigError, match=r"bad.json:2:"):
        load_config(bad)


def test_round_trip_through_file(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"seed": 4, "trials": 2}))
    assert load_config(path).seed == 4
