from __future__ import annotations

import os
import sys
from datetime import datetime, timezone
from enum import Enum


class LogLevel(Enum):
    """Log level enumeration for structured logging."""
    TRACE = "TRACE"
    INFO = "INFO"
    WARN = "WARN"
    ERROR = "ERROR"


_ORDER = {LogLevel.TRACE: 0, LogLevel.INFO: 1, LogLevel.WARN: 2, LogLevel.ERROR: 3}
_ALIASES = {"DEBUG": "TRACE", "WARNING": "WARN"}


def threshold() -> LogLevel:
    """Level read from GDKM_LOG (default INFO). Unknown values fall back to INFO."""
    raw = (os.environ.get("GDKM_LOG") or "INFO").strip().upper()
    raw = _ALIASES.get(raw, raw)
    try:
        return LogLevel(raw)
    except ValueError:
        return LogLevel.INFO


def is_enabled(level: LogLevel) -> bool:
    return _ORDER[level] >= _ORDER[threshold()]


def log_message(message: str, level: LogLevel = LogLevel.INFO, **fields: object) -> None:
    """Print a log line to stderr when ``level`` passes the GDKM_LOG threshold.

    Args:
        message: The log message
        level: The log level (LogLevel enum value)
        **fields: Extra key=value context appended to the line

    Lines look like ``[WARN] 2026-01-01T00:00:00+00:00 jitter raised dim=12 jitter=1e-08``.
    """
    if not isinstance(level, LogLevel):
        level = LogLevel(str(level).upper())
    if not is_enabled(level):
        return

    if not isinstance(message, str):
        message = str(message)

    timestamp = datetime.now(timezone.utc).isoformat(timespec="seconds")
    extra = " ".join(f"{key}={value}" for key, value in fields.items())
    line = f"[{level.value}] {timestamp} {message}"
    if extra:
        line = f"{line} {extra}"
    print(line, file=sys.stderr)
