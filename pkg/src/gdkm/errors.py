from __future__ import annotations

from typing import List


class ConfigError(ValueError):
    """Run configuration is invalid. Carries every violation found."""

    def __init__(self, errors: List[str]):
        super().__init__("Run configuration validation failed")
        self.errors = list(errors)

    def __str__(self) -> str:
        lines = ["Run configuration validation failed:"]
        lines.extend(f"- {e}" for e in self.errors)
        return "\n".join(lines)


class DataError(ValueError):
    pass


class NumericError(RuntimeError):
    pass


class DimensionMismatch(DataError):
    pass


EXIT_CODES = {ConfigError: 2, DataError: 3, NumericError: 4}


def exit_code_for(exc: BaseException) -> int | None:
    for cls, code in EXIT_CODES.items():
        if isinstance(exc, cls):
            return code
    return None
