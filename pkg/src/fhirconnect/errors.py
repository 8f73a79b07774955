"""Exception hierarchy shared by every layer of the mapping toolkit."""

from __future__ import annotations

from typing import Optional


class FhirConnectError(Exception):
    """Base class for all errors raised by this package."""

    kind = "Error"

    def __init__(self, message: str, *, file: Optional[str] = None,
                 line: int = 0, column: int = 0):
        super().__init__(message)
        self.message = message
        self.file = file
        self.line = line
        self.column = column

    def location(self) -> str:
        if not self.file:
            return ""
        return f"{self.file}:{self.line}:{self.column}"

    def __str__(self) -> str:
        loc = self.location()
        return f"{loc} {self.kind} {self.message}" if loc else f"{self.kind}: {self.message}"


class ParseError(FhirConnectError):
    """Malformed mapping file. ``kind`` is one of Syntax, UnknownKey,
    MissingKey, BadGrammarVersion, BadKind, TypeMismatch."""

    KINDS = ("Syntax", "UnknownKey", "MissingKey", "BadGrammarVersion", "BadKind", "TypeMismatch")

    def __init__(self, kind: str, message: str, *, file: str = "<string>",
                 line: int = 1, column: int = 1):
        if kind not in self.KINDS:
            raise ValueError(f"unknown parse error kind {kind!r}")
        super().__init__(message, file=file, line=line, column=column)
        self.kind = kind


class ValidationError(FhirConnectError):
    """A parsed document violates a mapping-model invariant."""

    def __init__(self, report, *, file: Optional[str] = None):
        first = report.violations[0]
        super().__init__(first.message, file=file, line=first.line, column=first.column)
        self.kind = first.kind
        self.report = report


# repository / resolution

class RepositoryError(FhirConnectError):
    pass


class DuplicateMapping(RepositoryError):
    kind = "DuplicateMapping"


class UnknownBase(RepositoryError):
    kind = "UnknownBase"


class OverrideTargetMissing(RepositoryError):
    kind = "OverrideTargetMissing"


class AppendCollision(RepositoryError):
    kind = "AppendCollision"


class UnknownContext(RepositoryError):
    kind = "UnknownContext"


class UnknownImport(RepositoryError):
    kind = "UnknownImport"


class UnresolvedSlot(RepositoryError):
    kind = "UnresolvedSlot"

    def __init__(self, archetype_id: str, message: Optional[str] = None, **kw):
        super().__init__(message or f"no mapping resolves slot archetype {archetype_id}", **kw)
        self.archetype_id = archetype_id


class ExtensionOrderConflict(RepositoryError):
    kind = "ExtensionOrderConflict"


# documents and paths

class PathSyntaxError(FhirConnectError):
    kind = "PathSyntaxError"

    def __init__(self, message: str, text: str, offset: int):
        super().__init__(f"{message} at offset {offset} in {text!r}")
        self.text = text
        self.offset = offset


class PathAmbiguous(FhirConnectError):
    kind = "PathAmbiguous"


class TypeClash(FhirConnectError):
    kind = "TypeClash"


class OccurrenceError(FhirConnectError):
    """Requested occurrence cannot be addressed or created."""

    kind = "OccurrenceError"


class DocumentError(FhirConnectError):
    """Input JSON does not describe a composition or resource."""

    kind = "DocumentError"


# data-type bridge

class ConversionError(FhirConnectError):
    kind = "ConversionError"


class UnsupportedPair(ConversionError):
    kind = "UnsupportedPair"


class TerminologyUnmapped(ConversionError):
    kind = "TerminologyUnmapped"


class LossyWithoutConsent(ConversionError):
    kind = "LossyWithoutConsent"


# engine

class TransformError(FhirConnectError):
    pass


class UnresolvedContext(TransformError):
    kind = "UnresolvedContext"


class MissingTemplate(TransformError):
    kind = "MissingTemplate"


class AmbiguousDispatch(TransformError):
    kind = "AmbiguousDispatch"
