"""Utilities for building run manifest records."""
from __future__ import annotations

import hashlib
import platform
from datetime import datetime, timezone
from importlib import metadata
from typing import Any, Dict, Iterable, Optional

from models.schemas import ExperimentConfig
from utils.export import canonical_json

_TRACKED_PACKAGES = ("numpy", "scipy", "pandas", "matplotlib", "pydantic", "jsonschema")

# where artifacts land does not change what a run computes
_UNHASHED_FIELDS = {"output_dir"}


def config_document(config: ExperimentConfig) -> Dict[str, Any]:
    return config.model_dump(mode="json", exclude=_UNHASHED_FIELDS)


def config_hash(config: ExperimentConfig) -> str:
    """sha256 of the canonical JSON form of the config."""
    return hashlib.sha256(canonical_json(config_document(config)).encode("utf-8")).hexdigest()


def package_versions(packages: Iterable[str] = _TRACKED_PACKAGES) -> Dict[str, Optional[str]]:
    versions: Dict[str, Optional[str]] = {"python": platform.python_version()}
    for name in packages:
        try:
            versions[name] = metadata.version(name)
        except metadata.PackageNotFoundError:
            versions[name] = None
    return versions


def build_manifest(
    *,
    command: str,
    config: ExperimentConfig,
    measured: Optional[Dict[str, Any]] = None,
    summary: Optional[Dict[str, Any]] = None,
    artifacts: Optional[Dict[str, str]] = None,
) -> dict:
    """Return the manifest record; only the timestamp differs between identical reruns."""
    return {
        "command": command,
        "config_hash": config_hash(config),
        "config": config_document(config),
        "seed": config.seed,
        "versions": package_versions(),
        "measured": measured or {},
        "summary": summary or {},
        "artifacts": artifacts or {},
        "timestamp": datetime.now(timezone.utc).isoformat(),
    }
