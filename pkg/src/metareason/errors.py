"""Exception hierarchy shared across the package."""

from __future__ import annotations


class MetaReasonError(Exception):
    """Base class for every error raised by this package."""


# -- reasoning pool ---------------------------------------------------------

class PoolError(MetaReasonError):
    pass


class DuplicateId(PoolError):
    pass


class InvalidDescriptor(PoolError):
    pass


class MissingPromptFile(PoolError):
    pass


class EmptySegment(PoolError):
    pass


# -- selection --------------------------------------------------------------

class SelectionError(MetaReasonError):
    pass


class ScoreUnparseable(SelectionError):
    pass


class ScoreOutOfRange(SelectionError):
    pass


class EmptyScoreList(SelectionError):
    pass


class KOutOfRange(SelectionError):
    pass


class EmptyInput(SelectionError):
    pass


# -- backends ---------------------------------------------------------------

class BackendError(MetaReasonError):
    pass


class TransportError(BackendError):
    pass


class ApiError(BackendError):
    def __init__(self, status: int, body: str):
        super().__init__(f"HTTP {status}: {body[:500]}")
        self.status = status
        self.body = body


class ScriptExhausted(BackendError):
    pass


class ReplayMiss(BackendError):
    pass


class CacheIoError(BackendError):
    pass


# -- tasks ------------------------------------------------------------------

class DatasetError(MetaReasonError):
    pass


class MalformedLine(DatasetError):
    def __init__(self, line_no: int, reason: str):
        super().__init__(f"line {line_no}: {reason}")
        self.line_no = line_no
        self.reason = reason


class GoldShapeMismatch(DatasetError):
    pass


class EmptyAnswerSets(MetaReasonError):
    pass


class NoChoice(MetaReasonError):
    pass


class JudgeUnparseable(MetaReasonError):
    pass


# -- harness ----------------------------------------------------------------

class EmptyList(MetaReasonError):
    pass


class ColumnMismatch(MetaReasonError):
    pass


class ConfigError(MetaReasonError):
    pass
