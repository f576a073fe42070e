# core/logging_setup.py
"""
Logging configuration for entry points (CLI, report server).
Library modules only create loggers; they never configure handlers.
"""

import logging
import sys
from typing import Union

LOG_FORMAT = "[%(levelname)s] %(name)s: %(message)s"


def configure_logging(level: Union[int, str] = "INFO") -> None:
    """Install a single stderr handler using the bracketed status-tag format"""
    if isinstance(level, str):
        level = logging.getLevelName(level.upper())
        if not isinstance(level, int):
            level = logging.INFO

    root = logging.getLogger()
    for handler in list(root.handlers):
        if getattr(handler, "_roadinspect", False):
            root.removeHandler(handler)

    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    handler._roadinspect = True  # type: ignore[attr-defined]
    root.addHandler(handler)
    root.setLevel(level)

    # third-party chatter
    logging.getLogger("PIL").setLevel(logging.WARNING)
    logging.getLogger("matplotlib").setLevel(logging.WARNING)
