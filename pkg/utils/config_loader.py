"""Experiment config loading: .env, JSON file, schema validation and overrides."""
from __future__ import annotations

import json
import logging
import os
from pathlib import Path
from typing import Any, Dict, Optional

import jsonschema
from dotenv import load_dotenv
from pydantic import ValidationError

from config.settings import Settings
from models.errors import InvalidParameterError
from models.schemas import ExperimentConfig

load_dotenv()

logger = logging.getLogger(__name__)


def config_schema() -> Dict[str, Any]:
    """JSON schema of the experiment config, generated from the pydantic model."""
    return ExperimentConfig.model_json_schema()


def validate_document(document: Dict[str, Any]) -> ExperimentConfig:
    """Schema check first, then the pydantic model's cross-field checks."""
    try:
        jsonschema.validate(document, config_schema())
    except jsonschema.ValidationError as exc:
        location = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise InvalidParameterError(f"config does not match the schema at {location}: {exc.message}") from exc
    try:
        return ExperimentConfig.model_validate(document)
    except ValidationError as exc:
        raise InvalidParameterError(f"invalid config: {exc}") from exc


def load_config(path: Optional[str | os.PathLike] = None) -> ExperimentConfig:
    """Read a JSON config, or the built-in defaults when no path is given."""
    if path is None:
        return ExperimentConfig()
    file = Path(path)
    try:
        document = json.loads(file.read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise InvalidParameterError(f"config file not found: {file}") from exc
    except json.JSONDecodeError as exc:
        raise InvalidParameterError(f"config file {file} is not valid JSON: {exc}") from exc
    if not isinstance(document, dict):
        raise InvalidParameterError("the config document must be a JSON object")
    logger.debug("loaded config %s", file)
    return validate_document(document)


def apply_overrides(config: ExperimentConfig, settings: Settings, **overrides: Any) -> ExperimentConfig:
    """CLI flag > config file > environment/.env > built-in default."""
    document = config.model_dump(mode="json")
    if document.get("cell_budget") is None:
        document["cell_budget"] = settings.CELL_BUDGET
    if document.get("threads") is None:
        document["threads"] = settings.THREADS or os.cpu_count() or 1
    if document.get("output_dir") is None:
        document["output_dir"] = settings.OUTPUT_DIR

    for key in ("seed", "threads", "cell_budget", "output_dir"):
        if overrides.get(key) is not None:
            document[key] = overrides[key]
    if overrides.get("levels") is not None:
        document["boxcount"]["levels"] = list(overrides["levels"])
    if overrides.get("depth") is not None:
        document["cantor"]["depth"] = overrides["depth"]
    return validate_document(document)


def parse_levels(text: str) -> tuple[int, int]:
    """'A..B' into (A, B)."""
    head, sep, tail = text.partition("..")
    try:
        levels = (int(head), int(tail)) if sep else (int(head), int(head))
    except ValueError as exc:
        raise InvalidParameterError(f"levels must look like A..B, got {text!r}") from exc
    if not (0 <= levels[0] <= levels[1]):
        raise InvalidParameterError(f"levels must satisfy 0 <= A <= B, got {text!r}")
    return levels
