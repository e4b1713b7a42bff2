from __future__ import annotations

import json

import pytest

from config.settings import Settings
from models.errors import InvalidParameterError
from models.schemas import ExperimentConfig
from tools.measure import MeasureKind
from utils.config_loader import apply_overrides, config_schema, load_config, parse_levels, validate_document


def test_defaults_without_a_file():
    config = load_config()
    assert config == ExperimentConfig()
    assert config.measure.kind is MeasureKind.LEBESGUE
    assert config.shrink_profile.exponents == (1.0, 2.0)


def test_schema_is_closed():
    schema = config_schema()
    assert schema.get("additionalProperties") is False
    assert "measure" in schema["properties"]


def test_document_round_trips_through_validation():
    document = ExperimentConfig(seed=5, profile=[1.0, 1.5]).model_dump(mode="json")
    assert validate_document(document).seed == 5


@pytest.mark.parametrize(
    "document",
    [
        {"schema_version": 2},
        {"seed": -1},
        {"profile": [1.0]},
        {"profile": [0.5, 1.0]},
        {"measure": {"kind": "bernoulli", "d": 1, "weights": [0.5, 0.6]}},
        {"boxcount": {"levels": [9, 3]}},
        {"unknown": True},
    ],
)
def test_invalid_documents(document):
    with pytest.raises(InvalidParameterError):
        validate_document(document)


def test_load_config_file(tmp_path):
    path = tmp_path / "exp.json"
    path.write_text(json.dumps({"seed": 9, "cantor": {"depth": 3}}), encoding="utf-8")
    config = load_config(path)
    assert config.seed == 9 and config.cantor.depth == 3
    path.write_text("[1, 2]", encoding="utf-8")
    with pytest.raises(InvalidParameterError):
        load_config(path)
    path.write_text("{not json", encoding="utf-8")
    with pytest.raises(InvalidParameterError):
        load_config(path)


def test_override_precedence():
    env = Settings(CELL_BUDGET=1234, THREADS=3, OUTPUT_DIR="env-runs")
    from_file = ExperimentConfig(cell_budget=99)
    merged = apply_overrides(from_file, env)
    assert merged.cell_budget == 99
    assert merged.threads == 3
    assert merged.output_dir == "env-runs"
    flagged = apply_overrides(from_file, env, seed=8, cell_budget=7, levels=(4, 6), depth=5, output_dir="x")
    assert (flagged.seed, flagged.cell_budget, flagged.output_dir) == (8, 7, "x")
    assert flagged.boxcount.levels == (4, 6)
    assert flagged.cantor.depth == 5


def test_override_still_validates():
    with pytest.raises(InvalidParameterError):
        apply_overrides(ExperimentConfig(), Settings(), depth=0)


def test_parse_levels():
    assert parse_levels("6..12") == (6, 12)
    assert parse_levels("7") == (7, 7)
    for bad in ("a..b", "9..3", "-1..2"):
        with pytest.raises(InvalidParameterError):
            parse_levels(bad)
