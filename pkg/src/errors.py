"""
Exception hierarchy shared by every microloc module.

ValidationError covers bad inputs and violated preconditions; GuardError covers
numerical guards that abort a computation. The CLI maps them to exit codes 2
and 3 respectively.
"""

from typing import Any, Optional


class MicrolocError(Exception):
    """Root of all microloc errors."""


class ValidationError(MicrolocError, ValueError):
    """An input or precondition was rejected."""


class ConfigError(ValidationError):
    """A configuration document is malformed."""

    def __init__(self, key: str, message: str):
        super().__init__(f"config key '{key}': {message}")
        self.key = key


class GuardError(MicrolocError, RuntimeError):
    """A numerical guard aborted the computation."""


class FlowAborted(GuardError):
    """Bicharacteristic integration stopped early; the partial path is kept."""

    def __init__(self, reason: str, message: str, trajectory: Optional[Any] = None):
        super().__init__(message)
        self.reason = reason
        self.trajectory = trajectory
