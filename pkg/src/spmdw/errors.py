"""Shared exception taxonomy with stable machine-readable codes.

Every error that can cross the service boundary carries a frozen ``code``
string; the HTTP layer maps codes to statuses in one table.
"""

from __future__ import annotations


class WarehouseError(Exception):
    """Base class for all domain errors."""

    code = "INTERNAL"

    def __init__(self, message: str = "", **details):
        super().__init__(message or self.__class__.__name__)
        self.message = message or self.__class__.__name__
        self.details = details


# -- metadata / org tree -----------------------------------------------------

class DuplicateId(WarehouseError):
    code = "DUPLICATE_ID"


class CycleDetected(WarehouseError):
    code = "CYCLE_DETECTED"


class MultipleRoots(WarehouseError):
    code = "MULTIPLE_ROOTS"


class LevelSkip(WarehouseError):
    code = "LEVEL_SKIP"


class DanglingParent(WarehouseError):
    code = "DANGLING_PARENT"


class UnknownUnit(WarehouseError):
    code = "UNKNOWN_UNIT"


class UnknownElement(WarehouseError):
    code = "UNKNOWN_ELEMENT"


class UnknownDataset(WarehouseError):
    code = "UNKNOWN_DATASET"


class UnknownIndicator(WarehouseError):
    code = "UNKNOWN_INDICATOR"


class UnknownProgram(WarehouseError):
    code = "UNKNOWN_PROGRAM"


class UnknownUser(WarehouseError):
    code = "UNKNOWN_USER"


class MalformedMetadata(WarehouseError):
    code = "MALFORMED_METADATA"


# -- periods -----------------------------------------------------------------

class MalformedPeriodKey(WarehouseError):
    code = "MALFORMED_PERIOD"


class PeriodTypeMismatch(WarehouseError):
    code = "PERIOD_TYPE_MISMATCH"


# -- quality -----------------------------------------------------------------

class ForeignElement(WarehouseError):
    code = "FOREIGN_ELEMENT"


# -- workflow ----------------------------------------------------------------

class ScopeDenied(WarehouseError):
    code = "SCOPE_DENIED"


class WrongLevel(WarehouseError):
    code = "WRONG_LEVEL"


class BlockedByQuality(WarehouseError):
    code = "BLOCKED_BY_QUALITY"

    def __init__(self, message: str = "", findings=None, **details):
        super().__init__(message, **details)
        self.findings = list(findings or [])


class IllegalTransition(WarehouseError):
    code = "ILLEGAL_TRANSITION"


class RoleDenied(WarehouseError):
    code = "ROLE_DENIED"


class MissingReason(WarehouseError):
    code = "MISSING_REASON"


class UnjustifiedDeviation(WarehouseError):
    code = "UNJUSTIFIED_DEVIATION"


# -- analytics ---------------------------------------------------------------

class InvalidQuery(WarehouseError):
    code = "INVALID_QUERY"


class ZeroDenominator(WarehouseError):
    code = "ZERO_DENOMINATOR"


class MissingNumerator(WarehouseError):
    code = "MISSING_NUMERATOR"


class MissingDenominator(WarehouseError):
    code = "MISSING_DENOMINATOR"


# -- sync --------------------------------------------------------------------

class LocalQualityBlock(WarehouseError):
    code = "LOCAL_QUALITY_BLOCK"

    def __init__(self, message: str = "", findings=None, **details):
        super().__init__(message, **details)
        self.findings = list(findings or [])


class MalformedRecord(WarehouseError):
    code = "MALFORMED_RECORD"


class CursorAhead(WarehouseError):
    code = "CURSOR_AHEAD"


class AlreadyResolved(WarehouseError):
    code = "ALREADY_RESOLVED"


class UnknownTicket(WarehouseError):
    code = "UNKNOWN_TICKET"


class MalformedSchedule(WarehouseError):
    code = "MALFORMED_SCHEDULE"


# -- store / bulk io ---------------------------------------------------------

class MalformedFile(WarehouseError):
    code = "MALFORMED_FILE"


class ImportAborted(WarehouseError):
    code = "IMPORT_ABORTED"

    def __init__(self, message: str = "", line_no: int | None = None, **details):
        super().__init__(message, **details)
        self.line_no = line_no


class StaleVersion(WarehouseError):
    code = "STALE_VERSION"


# -- service -----------------------------------------------------------------

class MalformedRequest(WarehouseError):
    code = "MALFORMED_REQUEST"


class BadCredentials(WarehouseError):
    code = "BAD_CREDENTIALS"


class TokenMissing(WarehouseError):
    code = "TOKEN_MISSING"


class TokenExpired(WarehouseError):
    code = "TOKEN_EXPIRED"
