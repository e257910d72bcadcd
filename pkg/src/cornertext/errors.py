"""Exception types shared across the package."""

from __future__ import annotations


class InvalidBox(ValueError):
    """A box has non-positive or non-finite dimensions."""


class DegenerateGeometry(ValueError):
    """An operation received collinear or zero-area geometric input."""


class ConfigError(ValueError):
    """A configuration value or file is inconsistent or unknown."""


class SynthError(RuntimeError):
    """Scene synthesis could not satisfy its placement constraints."""


class FormatError(ValueError):
    """A file does not conform to one of the on-disk formats.

    Carries the byte offset (binary tensors) or 1-based line number
    (JSON-lines files) at which the problem was detected.
    """

    def __init__(self, message: str, *, offset: int | None = None, line: int | None = None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        if line is not None:
            message = f"{message} (line {line})"
        super().__init__(message)
        self.offset = offset
        self.line = line
