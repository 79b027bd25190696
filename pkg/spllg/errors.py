"""Exception types shared by the library, the CLI and the experiment modules."""

from __future__ import annotations

from typing import Optional


class SpllgError(Exception):
    """Base class for every error raised by spllg."""


class InvalidArgument(SpllgError, ValueError):
    """A precondition on an argument was violated."""


class ConfigError(InvalidArgument):
    """Configuration rejected. ``key`` names the offending entry."""

    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(f"{key}: {message}")


class NumericalFailure(SpllgError, RuntimeError):
    """Non-finite state or singular solve during time stepping."""

    def __init__(self, message: str, time: Optional[float] = None):
        self.time = time
        self.detail = message
        super().__init__(message if time is None else f"{message} (t={time:.6g})")

    def at(self, time: float) -> "NumericalFailure":
        return NumericalFailure(self.detail, time=time)
