"""Logging setup shared by the simulators.

Every component logs through ``logging.getLogger(__name__)`` and passes
structured context with ``extra={...}``. This module installs one stream
handler whose formatter tags each record with the component name and a run id
and renders the extra fields as ``key=value`` pairs.
"""

import logging
import os
import sys
import uuid
from typing import Optional

DEFAULT_FORMAT = (
    "%(asctime)s - %(name)s - %(levelname)s - "
    "[%(component)s:%(run_id)s] %(message)s"
)

# Attributes present on every LogRecord; anything else came in through `extra`.
_RESERVED = set(
    vars(logging.LogRecord("", logging.INFO, "", 0, "", None, None)).keys()
) | {"message", "asctime", "component", "run_id"}


class RunContextFilter(logging.Filter):
    """Stamps the component name and run id onto every record."""

    def __init__(self, component: str, run_id: str):
        super().__init__()
        self.component = component
        self.run_id = run_id

    def filter(self, record: logging.LogRecord) -> bool:
        record.component = self.component
        record.run_id = self.run_id
        return True


class KeyValueFormatter(logging.Formatter):
    """Formatter that appends the `extra` fields of a record as key=value."""

    def format(self, record: logging.LogRecord) -> str:
        base = super().format(record)
        extras = {
            key: value
            for key, value in vars(record).items()
            if key not in _RESERVED and not key.startswith("_")
        }
        if not extras:
            return base
        rendered = " ".join(f"{key}={extras[key]}" for key in sorted(extras))
        return f"{base} {rendered}"


def configure_logging(
    component: str, run_id: Optional[str] = None, level: Optional[str] = None
) -> str:
    """Configure root logging for a component run.

    Args:
        component: Name shown in every log line (e.g. "algas4")
        run_id: Optional run ID for correlation. If None, generates a new UUID.
        level: Log level name; falls back to ALGAS4_LOG_LEVEL, then INFO

    Returns:
        str: The run id in use
    """
    run_id = run_id or uuid.uuid4().hex[:12]
    level_name = (level or os.getenv("ALGAS4_LOG_LEVEL") or "INFO").upper()

    # stdout carries JSON reports, so logs go to stderr
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(KeyValueFormatter(DEFAULT_FORMAT))
    handler.addFilter(RunContextFilter(component, run_id))

    root = logging.getLogger()
    for existing in list(root.handlers):
        root.removeHandler(existing)
    root.addHandler(handler)
    root.setLevel(getattr(logging, level_name, logging.INFO))
    return run_id
