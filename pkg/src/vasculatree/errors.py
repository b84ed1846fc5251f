"""Exception hierarchy shared by the library and the CLI."""

from __future__ import annotations


class VasculatreeError(Exception):
    """Base class for every error raised by this package."""


class ParseError(VasculatreeError):
    """Input could not be decoded; carries the 1-based line number when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class SchemaError(VasculatreeError):
    """Input decoded but violates a structural rule (duplicate or dangling ids)."""


class GraphError(VasculatreeError):
    pass


class PruneError(VasculatreeError):
    pass


class ProjectionError(VasculatreeError):
    pass


class ConfigError(VasculatreeError):
    pass


class EmptyResultError(VasculatreeError):
    """A pipeline step left nothing usable; ``step`` is its 0-based index."""

    def __init__(self, message: str, step: int | None = None):
        self.step = step
        if step is not None:
            message = f"step {step}: {message}"
        super().__init__(message)
