"""Exception types shared across the package."""

from __future__ import annotations

__all__ = [
    "WorkloadError",
    "SchemaMismatchError",
    "ModelFormatError",
    "ModelVersionError",
    "InfeasibleSelectionError",
]


class WorkloadError(ValueError):
    """A workload file failed validation.

    Carries the 1-based line number of the offending record when known.
    """

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class SchemaMismatchError(ValueError):
    """A feature vector does not conform to the expected schema."""


class ModelFormatError(ValueError):
    """A model file is malformed or truncated."""


class ModelVersionError(ModelFormatError):
    """A model file was written by an incompatible format version."""


class InfeasibleSelectionError(ValueError):
    """No cores-per-executor choice satisfies the packing constraints."""

    def __init__(self, message: str, violations: dict[int, str] | None = None):
        self.violations = violations or {}
        super().__init__(message)
