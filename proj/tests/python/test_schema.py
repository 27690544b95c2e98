import json
import pathlib

import pytest

import rpclink

jsonschema = pytest.importorskip("jsonschema")
tomllib = pytest.importorskip("tomli")

ROOT = pathlib.Path(__file__).resolve().parents[2]
SCHEMA = json.loads((ROOT / "docs" / "scenario.schema.json").read_text())


def validate(text):
    jsonschema.validate(tomllib.loads(text), SCHEMA)


@pytest.mark.parametrize("name", ["ethereum_alpha.toml", "ethereum_detector.toml"])
def test_shipped_configs_match_schema(name):
    text = (ROOT / "configs" / name).read_text()
    validate(text)
    rpclink.scenario(text)


def test_written_config_matches_schema(tmp_path):
    text = (
        'name = "schema"\nseed = 2\ntrials = 2\nalpha = 0.9\nanalytic_samples = 2000\n'
        "[ledger]\nnum_users = 1500\nrate = 1.0\nduration = 14400.0\nseed = 3\n"
        "[victim]\nclass = \"active\"\n"
    )
    rpclink.run_experiment_to_directory(text, str(tmp_path))
    validate((tmp_path / "config.toml").read_text())


@pytest.mark.parametrize(
    "text",
    [
        "trials = 3\nunknown_key = 1\n",
        "trials = 0\n",
        "q = 1.0\n",
        "[victim]\nclass = \"idle\"\n",
        "[detector]\nholdout = 1.0\n",
    ],
)
def test_schema_and_loader_reject_the_same_documents(text):
    with pytest.raises(jsonschema.ValidationError):
        validate(text)
    with pytest.raises(rpclink.RpclinkError):
        rpclink.scenario(text + "[ledger]\nnum_users = 5\n")
