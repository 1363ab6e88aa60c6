"""Exception hierarchy shared by every layer of the engine."""

from __future__ import annotations


class ObliqError(Exception):
    """Base class for all engine errors."""


class IntegrityError(ObliqError):
    """Untrusted memory or a sealed file was tampered with."""


class MacFailure(IntegrityError):
    pass


class MisplacedBlock(IntegrityError):
    """A block authenticated fine but claims a different home or row."""


class StaleBlock(IntegrityError):
    """A block carries an older revision than the enclave recorded (replay)."""


class NeverWritten(IntegrityError):
    pass


class RollbackDetected(IntegrityError):
    pass


class BudgetExceeded(ObliqError):
    pass


class TableFull(ObliqError):
    pass


class QueryError(ObliqError):
    """Problems with a query: syntax, unknown names, type mismatches."""


class SqlSyntaxError(QueryError):
    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at position {position})")
        self.position = position


class CsvError(QueryError):
    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class ContinuityViolated(ObliqError):
    pass


class HashOverflow(ObliqError):
    pass


class FkViolation(ObliqError):
    pass


class JoinFanoutExceeded(ObliqError):
    pass


class ResultExceedsPad(ObliqError):
    pass


class InvalidWorkload(ObliqError):
    """A paired workload broke its own generator invariants; the test is void."""
