"""Exception hierarchy shared by all embstat modules."""

from __future__ import annotations


class EmbstatError(Exception):
    """Base class for every error raised by this package."""


class EmbeddingFormatError(EmbstatError, ValueError):
    """An embedding file could not be parsed.

    ``line`` is the 1-based line number for text files and ``offset`` the
    byte offset for binary files; whichever does not apply is ``None``.
    """

    def __init__(self, message, *, line=None, offset=None, source=None):
        self.line = line
        self.offset = offset
        self.source = source
        where = []
        if source:
            where.append(str(source))
        if line is not None:
            where.append(f"line {line}")
        if offset is not None:
            where.append(f"byte offset {offset}")
        if where:
            message = f"{', '.join(where)}: {message}"
        super().__init__(message)


class TaskFormatError(EmbstatError, ValueError):
    """A benchmark file could not be parsed."""

    def __init__(self, message, *, line=None, source=None):
        self.line = line
        self.source = source
        where = [str(s) for s in (source,) if s]
        if line is not None:
            where.append(f"line {line}")
        if where:
            message = f"{', '.join(where)}: {message}"
        super().__init__(message)


class UndefinedCorrelationError(EmbstatError, ValueError):
    """A correlation was requested on a sample with no variation."""


class DegenerateStatisticError(EmbstatError):
    """A bootstrap statistic was undefined on too many resamples."""

    def __init__(self, message, *, failures, resamples):
        self.failures = failures
        self.resamples = resamples
        super().__init__(f"{message} ({failures} of {resamples} resamples failed)")


class EvaluationError(EmbstatError):
    """An evaluation could not produce a score."""
