"""Logging setup shared by the CLI and the workflows."""
from __future__ import annotations

import logging
from typing import Optional

from config.settings import settings

_FORMAT = "%(asctime)s %(levelname)-7s %(name)s: %(message)s"
_configured = False


def setup_logging(level: Optional[str] = None) -> None:
    """Configure the root logger once; later calls only adjust the level."""
    global _configured
    resolved = (level or settings.LOG_LEVEL).upper()
    if not _configured:
        logging.basicConfig(level=resolved, format=_FORMAT)
        _configured = True
    logging.getLogger().setLevel(resolved)
