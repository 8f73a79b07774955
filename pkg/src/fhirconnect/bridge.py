"""Conversion table between openEHR data values and FHIR data types.

Each supported (openEHR type, FHIR type) pair has one entry. The first
eight pairs are lossless; the two workaround pairs are marked lossy and say
why in their notes.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Dict, List, Mapping, Optional, Tuple

import yaml

from .errors import ConversionError, LossyWithoutConsent, TerminologyUnmapped, UnsupportedPair
from .fhir import (
    CodeableConcept,
    Coding,
    FhirBoolean,
    FhirDateTime,
    FhirIdentifier,
    FhirInteger,
    FhirQuantity,
    FhirString,
    FhirValue,
    Reference,
)
from .openehr import (
    DataValue,
    DvBoolean,
    DvCodedText,
    DvCount,
    DvDateTime,
    DvIdentifier,
    DvQuantity,
    DvText,
)

UCUM_URI = "http://unitsofmeasure.org"

DEFAULT_TERMINOLOGIES: Dict[str, str] = {
    "SNOMED-CT": "http://snomed.info/sct",
    "LOINC": "http://loinc.org",
    "UCUM": UCUM_URI,
    "ICD-10-GM": "http://fhir.de/CodeSystem/bfarm/icd-10-gm",
}


@dataclass(frozen=True)
class BridgeEntry:
    openehr_type: type
    fhir_type: type
    lossless: bool
    notes: str = ""


TABLE: Tuple[BridgeEntry, ...] = (
    BridgeEntry(DvCodedText, CodeableConcept, True, "one coding; display and text carry the value"),
    BridgeEntry(DvCodedText, Coding, True, "display carries the value"),
    BridgeEntry(DvText, FhirString, True),
    BridgeEntry(DvDateTime, FhirDateTime, True, "lexical identity; must also be a valid FHIR dateTime"),
    BridgeEntry(DvQuantity, FhirQuantity, True, "UCUM system; unit is also the code; magnitude kept digit for digit"),
    BridgeEntry(DvBoolean, FhirBoolean, True),
    BridgeEntry(DvIdentifier, FhirIdentifier, True, "issuer <-> system, type <-> type.text"),
    BridgeEntry(DvCount, FhirInteger, True),
    BridgeEntry(DvCodedText, CodeableConcept, False,
                "workaround: several codings collapse to the first; the rest are reported"),
    BridgeEntry(DvText, Reference, False,
                "workaround: a reference is carried as plain text, its target is not resolved"),
)

LOSSLESS_PAIRS = tuple((e.openehr_type, e.fhir_type) for e in TABLE if e.lossless)
SUPPORTED_PAIRS = frozenset((e.openehr_type, e.fhir_type) for e in TABLE)

DEFAULT_FHIR_FOR = {
    DvCodedText: CodeableConcept,
    DvText: FhirString,
    DvDateTime: FhirDateTime,
    DvQuantity: FhirQuantity,
    DvBoolean: FhirBoolean,
    DvIdentifier: FhirIdentifier,
    DvCount: FhirInteger,
}
DEFAULT_OPENEHR_FOR = {
    CodeableConcept: DvCodedText,
    Coding: DvCodedText,
    FhirString: DvText,
    FhirDateTime: DvDateTime,
    FhirQuantity: DvQuantity,
    FhirBoolean: DvBoolean,
    FhirIdentifier: DvIdentifier,
    Reference: DvText,
    FhirInteger: DvCount,
}


def load_terminology_table(path) -> Dict[str, str]:
    """Read ``[{openehr_terminology_id, fhir_system_uri}, ...]`` from YAML."""
    with open(path, "rb") as fh:
        rows = yaml.safe_load(fh) or []
    if not isinstance(rows, list):
        raise ValueError(f"{path}: terminology table must be a list")
    table = {}
    for i, row in enumerate(rows):
        if not isinstance(row, dict) or set(row) != {"openehr_terminology_id", "fhir_system_uri"}:
            raise ValueError(f"{path}: entry {i} needs exactly openehr_terminology_id and fhir_system_uri")
        table[str(row["openehr_terminology_id"])] = str(row["fhir_system_uri"])
    return table


class Bridge:
    """Conversion functions bound to a terminology table and a strictness setting.

    ``passthrough`` lets terminology ids without a URI travel verbatim as the
    coding system (and back). ``strict`` turns lossy conversions into
    :class:`LossyWithoutConsent` errors instead of warnings.
    """

    def __init__(self, terminologies: Optional[Mapping[str, str]] = None, *,
                 passthrough: bool = True, strict: bool = False):
        self.terminologies = dict(DEFAULT_TERMINOLOGIES)
        if terminologies:
            self.terminologies.update(terminologies)
        self.systems = {uri: tid for tid, uri in self.terminologies.items()}
        self.passthrough = passthrough
        self.strict = strict

    def system_for(self, terminology: str) -> str:
        uri = self.terminologies.get(terminology)
        if uri is not None:
            return uri
        if self.passthrough:
            return terminology
        raise TerminologyUnmapped(f"no FHIR system URI for openEHR terminology {terminology!r}")

    def terminology_for(self, system: Optional[str]) -> str:
        if system is None:
            raise TerminologyUnmapped("coding has no system")
        tid = self.systems.get(system)
        if tid is not None:
            return tid
        if self.passthrough:
            return system
        raise TerminologyUnmapped(f"no openEHR terminology id for FHIR system {system!r}")

    # openEHR -> FHIR

    def to_fhir(self, v: DataValue, target: Optional[type] = None) -> FhirValue:
        target = target or DEFAULT_FHIR_FOR.get(type(v))
        if (type(v), target) not in SUPPORTED_PAIRS:
            raise UnsupportedPair(f"{type(v).__name__} -> {getattr(target, '__name__', target)}")
        try:
            return _TO_FHIR[(type(v), target)](self, v)
        except ValueError as exc:
            raise ConversionError(f"{type(v).__name__} -> {target.__name__}: {exc}") from None

    # FHIR -> openEHR

    def to_openehr(self, v: FhirValue, target: Optional[type] = None,
                   warnings: Optional[List[str]] = None) -> DataValue:
        """Convert a FHIR value; lossy steps append a note to ``warnings``.

        In strict mode a lossy step raises :class:`LossyWithoutConsent` instead.
        """
        target = target or DEFAULT_OPENEHR_FOR.get(type(v))
        if (target, type(v)) not in SUPPORTED_PAIRS:
            raise UnsupportedPair(f"{type(v).__name__} -> {getattr(target, '__name__', target)}")
        try:
            return _TO_OPENEHR[(target, type(v))](self, v, warnings)
        except ValueError as exc:
            raise ConversionError(f"{type(v).__name__} -> {target.__name__}: {exc}") from None

    def _lossy(self, message: str, warnings: Optional[List[str]]) -> None:
        if self.strict:
            raise LossyWithoutConsent(message)
        if warnings is not None:
            warnings.append(message)


def _coded_to_cc(b: Bridge, v: DvCodedText) -> CodeableConcept:
    return CodeableConcept((Coding(b.system_for(v.terminology), v.code, v.value),), v.value)


def _coded_to_coding(b: Bridge, v: DvCodedText) -> Coding:
    return Coding(b.system_for(v.terminology), v.code, v.value)


_TO_FHIR: Dict[Tuple[type, type], Callable] = {
    (DvCodedText, CodeableConcept): _coded_to_cc,
    (DvCodedText, Coding): _coded_to_coding,
    (DvText, FhirString): lambda b, v: FhirString(v.value),
    (DvDateTime, FhirDateTime): lambda b, v: FhirDateTime(v.value),
    (DvQuantity, FhirQuantity): lambda b, v: FhirQuantity(v.magnitude, v.unit, UCUM_URI, v.unit),
    (DvBoolean, FhirBoolean): lambda b, v: FhirBoolean(v.value),
    (DvIdentifier, FhirIdentifier): lambda b, v: FhirIdentifier(v.id, v.issuer, v.type),
    (DvCount, FhirInteger): lambda b, v: FhirInteger(v.value),
    (DvText, Reference): lambda b, v: Reference(v.value),
}


def _cc_to_coded(b: Bridge, v: CodeableConcept, warnings) -> DvCodedText:
    if not v.codings:
        raise UnsupportedPair("CodeableConcept without a coding cannot become DV_CODED_TEXT")
    first = v.codings[0]
    if len(v.codings) > 1:
        dropped = ", ".join(f"{c.system}|{c.code}" for c in v.codings[1:])
        b._lossy(f"kept the first of {len(v.codings)} codings; dropped {dropped}", warnings)
    value = v.text if v.text is not None else first.display
    if value is None or first.code is None:
        raise UnsupportedPair("coding needs a code and a display or text")
    return DvCodedText(value, first.code, b.terminology_for(first.system))


def _coding_to_coded(b: Bridge, v: Coding, warnings) -> DvCodedText:
    if v.code is None or v.display is None:
        raise UnsupportedPair("Coding needs code and display to become DV_CODED_TEXT")
    return DvCodedText(v.display, v.code, b.terminology_for(v.system))


def _quantity_to_dv(b: Bridge, v: FhirQuantity, warnings) -> DvQuantity:
    unit = v.code if (v.system == UCUM_URI and v.code) else v.unit
    if not unit:
        raise UnsupportedPair("Quantity without unit cannot become DV_QUANTITY")
    if v.unit is not None and v.code is not None and v.unit != v.code:
        b._lossy(f"quantity unit {v.unit!r} dropped in favour of UCUM code {v.code!r}", warnings)
    return DvQuantity(v.value, unit)


def _identifier_to_dv(b: Bridge, v: FhirIdentifier, warnings) -> DvIdentifier:
    if v.value is None:
        raise UnsupportedPair("Identifier without value cannot become DV_IDENTIFIER")
    return DvIdentifier(v.value, v.system, v.type)


_TO_OPENEHR: Dict[Tuple[type, type], Callable] = {
    (DvCodedText, CodeableConcept): _cc_to_coded,
    (DvCodedText, Coding): _coding_to_coded,
    (DvText, FhirString): lambda b, v, w: DvText(v.value),
    (DvDateTime, FhirDateTime): lambda b, v, w: DvDateTime(v.value),
    (DvQuantity, FhirQuantity): _quantity_to_dv,
    (DvBoolean, FhirBoolean): lambda b, v, w: DvBoolean(v.value),
    (DvIdentifier, FhirIdentifier): _identifier_to_dv,
    (DvCount, FhirInteger): lambda b, v, w: DvCount(v.value),
    (DvText, Reference): lambda b, v, w: DvText(v.reference),
}

_default = Bridge()


def to_fhir(v: DataValue, target: Optional[type] = None) -> FhirValue:
    return _default.to_fhir(v, target)


def to_openehr(v: FhirValue, target: Optional[type] = None,
               warnings: Optional[List[str]] = None) -> DataValue:
    return _default.to_openehr(v, target, warnings)
