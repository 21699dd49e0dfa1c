"""Exception hierarchy shared across the package.

Every error class carries a process exit code so the CLI can map failures
to distinct, documented codes (see ``glarisk.cli``).  Parse-time errors
additionally carry (file, line, field) so diagnostics point at the
offending input location.
"""

from __future__ import annotations


class GlaRiskError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ParseError(GlaRiskError):
    """Base for input-text errors; knows where in the input it happened."""

    exit_code = 3

    def __init__(self, message: str, *, file: str | None = None,
                 line: int | None = None, field: str | None = None):
        self.file = file
        self.line = line
        self.field = field
        where = []
        if file is not None:
            where.append(str(file))
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        prefix = f"[{', '.join(where)}] " if where else ""
        super().__init__(prefix + message)


# --- record_model -----------------------------------------------------------

class MalformedRecord(ParseError):
    pass


class OutOfRange(ParseError):
    pass


class UnknownField(ParseError):
    pass


class MalformedTable(ParseError):
    pass


class UnknownBiomarker(ParseError):
    pass


class InconsistentIE(ParseError):
    pass


class MissingBounds(GlaRiskError):
    exit_code = 3


class UnmappedCategory(GlaRiskError):
    exit_code = 3


# --- feature_pipeline -------------------------------------------------------

class EmptyDataset(GlaRiskError):
    exit_code = 4


class DegenerateContinuous(GlaRiskError):
    exit_code = 4


class SchemaMismatch(GlaRiskError):
    exit_code = 4


class DuplicateModality(GlaRiskError):
    exit_code = 4


class EmptyFusion(GlaRiskError):
    exit_code = 4


# --- embedding_io -----------------------------------------------------------

class BadHeader(ParseError):
    exit_code = 5


class DimensionMismatch(GlaRiskError):
    exit_code = 5


class DuplicateId(ParseError):
    exit_code = 5


class NonFiniteValue(GlaRiskError):
    exit_code = 5


class EmptySequence(GlaRiskError):
    exit_code = 5


class RaggedInput(GlaRiskError):
    exit_code = 5


class EmptyImage(GlaRiskError):
    exit_code = 5


# --- boosting_engine --------------------------------------------------------

class LabelOutOfRange(GlaRiskError):
    exit_code = 6


class SingleClassDataset(GlaRiskError):
    # Training proceeds with a warning; raised only if callers opt in.
    exit_code = 6


class VersionMismatch(GlaRiskError):
    exit_code = 7


class CorruptModel(GlaRiskError):
    exit_code = 7


class FingerprintMismatch(GlaRiskError):
    exit_code = 7


# --- evaluation -------------------------------------------------------------

class TooFewRecords(GlaRiskError):
    exit_code = 8


class LengthMismatch(GlaRiskError):
    exit_code = 8


class EmptyInput(GlaRiskError):
    exit_code = 8
