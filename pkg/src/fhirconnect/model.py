"""In-memory representation of FHIRconnect mapping files.

Documents are frozen dataclasses holding tuples, so a parsed library can be
shared freely between threads. Source positions are carried on the side
(``compare=False``) and never take part in equality.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field
from typing import Iterator, Mapping, Optional, Sequence, Tuple, Union

LANGUAGE_TAG = "FHIRConnect"
SUPPORTED_FHIR_SYSTEMS = ("FHIR",)
SUPPORTED_FHIR_VERSIONS = ("R4",)

ARCHETYPE_ID_RE = re.compile(
    r"^openEHR-EHR-(?P<rm_class>[A-Z][A-Z_]*)\.(?P<concept>[A-Za-z0-9_]+(?:-[A-Za-z0-9_]+)*)\.v(?P<major>\d+)$"
)
_SEMVER_RE = re.compile(r"^(\d+)\.(\d+)\.(\d+)$")
_ABSOLUTE_URI_RE = re.compile(r"^[A-Za-z][A-Za-z0-9+.-]*:\S+$")

Position = Tuple[int, int]


@dataclass(frozen=True)
class GrammarVersion:
    language_tag: str
    semver: str

    def __post_init__(self):
        if self.language_tag != LANGUAGE_TAG:
            raise ValueError(f"grammar language must be {LANGUAGE_TAG!r}, got {self.language_tag!r}")
        if not _SEMVER_RE.match(self.semver):
            raise ValueError(f"grammar version {self.semver!r} is not MAJOR.MINOR.PATCH")

    @property
    def major(self) -> int:
        return int(self.semver.split(".")[0])

    def __str__(self) -> str:
        return f"{self.language_tag}/v{self.semver}"


class MappingKind(enum.Enum):
    MODEL = "model"
    EXTENSION = "extension"
    CONTEXT = "context"


class Cardinality(enum.Enum):
    ONE = "one"
    MANY = "many"


class ConditionSide(enum.Enum):
    FHIR = "$resource"
    OPENEHR = "$archetype"


class Operator(enum.Enum):
    EQUALS = "equals"
    NOT_EQUALS = "notEquals"
    EXISTS = "exists"
    NOT_EXISTS = "notExists"
    ONE_OF = "oneOf"

    @property
    def takes_operands(self) -> bool:
        return self not in (Operator.EXISTS, Operator.NOT_EXISTS)


class Provenance(enum.Enum):
    FROM_MODEL = "FromModel"
    FROM_EXTENSION_ADDED = "FromExtensionAdded"
    FROM_EXTENSION_OVERRIDDEN = "FromExtensionOverridden"


# FHIR type codes usable as a rule's ``with.type``; each names one bridge pair.
TYPE_HINTS = (
    "CodeableConcept", "Coding", "string", "dateTime", "Quantity",
    "boolean", "Identifier", "Reference", "integer",
)


@dataclass(frozen=True)
class MappingHeader:
    grammar: GrammarVersion
    kind: MappingKind
    name: str
    version: str
    fhir_system: str = "FHIR"
    fhir_version: str = "R4"
    archetype_id: Optional[str] = None
    archetype_revision: Optional[str] = None
    structure_definition_url: Optional[str] = None
    template_id: Optional[str] = None


@dataclass(frozen=True)
class ConditionClause:
    side: ConditionSide
    target_path: str
    operator: Operator
    operands: Tuple[str, ...] = ()
    line: int = field(default=0, compare=False, repr=False)
    column: int = field(default=0, compare=False, repr=False)


@dataclass(frozen=True)
class MappingRule:
    name: str
    fhir_path: str = ""
    openehr_path: str = ""
    type_hint: Optional[str] = None
    condition: Optional[ConditionClause] = None
    children: Tuple["MappingRule", ...] = ()
    slot_archetype: Optional[str] = None
    cardinality: Cardinality = Cardinality.MANY
    line: int = field(default=0, compare=False, repr=False)
    column: int = field(default=0, compare=False, repr=False)

    def walk(self) -> Iterator["MappingRule"]:
        """Yield this rule and all descendants, depth first."""
        yield self
        for child in self.children:
            yield from child.walk()


@dataclass(frozen=True)
class MappingDocument:
    """A model-mapping: one archetype against one resource."""

    header: MappingHeader
    rules: Tuple[MappingRule, ...] = ()
    filename: str = field(default="<memory>", compare=False, repr=False)
    positions: Mapping[str, Position] = field(default_factory=dict, compare=False, repr=False)

    @property
    def kind(self) -> MappingKind:
        return self.header.kind

    @property
    def name(self) -> str:
        return self.header.name

    def walk_rules(self) -> Iterator[MappingRule]:
        for rule in self.rules:
            yield from rule.walk()


@dataclass(frozen=True)
class ExtensionDocument:
    """Adds rules to, or overrides rules of, the model-mapping named by ``extends``."""

    header: MappingHeader
    extends: str
    appended_rules: Tuple[MappingRule, ...] = ()
    overridden_rules: Tuple[MappingRule, ...] = ()
    # file order of all rules, as (is_override, rule); used for serialization
    order: Tuple[Tuple[bool, MappingRule], ...] = field(default=(), compare=False, repr=False)
    filename: str = field(default="<memory>", compare=False, repr=False)
    positions: Mapping[str, Position] = field(default_factory=dict, compare=False, repr=False)

    @property
    def kind(self) -> MappingKind:
        return self.header.kind

    @property
    def name(self) -> str:
        return self.header.name

    @property
    def rules(self) -> Tuple[MappingRule, ...]:
        if self.order:
            return tuple(rule for _, rule in self.order)
        return self.overridden_rules + self.appended_rules

    def walk_rules(self) -> Iterator[MappingRule]:
        for rule in self.rules:
            yield from rule.walk()


@dataclass(frozen=True)
class ContextDocument:
    """Selects a template plus the model/extension mappings used with it.

    Holds no rules of its own.
    """

    header: MappingHeader
    template_id: str
    start_archetype: str
    profile_urls: Tuple[str, ...] = ()
    imported_model_mappings: Tuple[str, ...] = ()
    imported_extension_mappings: Tuple[str, ...] = ()
    filename: str = field(default="<memory>", compare=False, repr=False)
    positions: Mapping[str, Position] = field(default_factory=dict, compare=False, repr=False)

    @property
    def kind(self) -> MappingKind:
        return self.header.kind

    @property
    def name(self) -> str:
        return self.header.name

    @property
    def rules(self) -> Tuple[MappingRule, ...]:
        return ()

    def walk_rules(self) -> Iterator[MappingRule]:
        return iter(())


AnyDocument = Union[MappingDocument, ExtensionDocument, ContextDocument]


@dataclass(frozen=True)
class Violation:
    kind: str
    message: str
    rule_name: Optional[str] = None
    line: int = 0
    column: int = 0


@dataclass(frozen=True)
class ValidationReport:
    violations: Tuple[Violation, ...] = ()

    def is_ok(self) -> bool:
        return not self.violations

    def kinds(self) -> list:
        return [v.kind for v in self.violations]


def archetype_rm_class(archetype_id: str) -> Optional[str]:
    """``openEHR-EHR-EVALUATION.problem_diagnosis.v1`` -> ``EVALUATION``."""
    m = ARCHETYPE_ID_RE.match(archetype_id)
    return m.group("rm_class") if m else None


def resource_type_from_url(url: str) -> str:
    """Last path segment of a StructureDefinition canonical URL."""
    return url.rstrip("/").rsplit("/", 1)[-1]


def _pos(doc: AnyDocument, key: str) -> Position:
    return doc.positions.get(key, (0, 0))


def validate_document(doc: AnyDocument) -> ValidationReport:
    """Check the invariants a parsed document must satisfy.

    Violations are returned as data; nothing is raised.
    """
    out = []

    def add(kind, message, rule=None, key=None):
        if rule is not None:
            line, col = rule.line, rule.column
        else:
            line, col = _pos(doc, key) if key else (0, 0)
        out.append(Violation(kind, message, rule.name if rule is not None else None, line, col))

    header = doc.header
    if not header.name:
        add("EmptyName", "metadata.name must not be empty", key="metadata.name")
    if header.fhir_system not in SUPPORTED_FHIR_SYSTEMS:
        add("UnsupportedFhirSystem", f"spec.system {header.fhir_system!r} is not supported (FHIR only)",
            key="spec.system")
    if header.fhir_version not in SUPPORTED_FHIR_VERSIONS:
        add("UnsupportedFhirVersion",
            f"spec.version {header.fhir_version!r} is not supported; accepted: {', '.join(SUPPORTED_FHIR_VERSIONS)}",
            key="spec.version")

    if header.kind in (MappingKind.MODEL, MappingKind.EXTENSION):
        if not ARCHETYPE_ID_RE.match(header.archetype_id or ""):
            add("BadArchetypeId", f"archetype {header.archetype_id!r} does not match openEHR-EHR-<CLASS>.<concept>.v<N>",
                key="spec.openEhrConfig.archetype")
        if not _ABSOLUTE_URI_RE.match(header.structure_definition_url or ""):
            add("BadStructureDefinition",
                f"structureDefinition {header.structure_definition_url!r} is not an absolute URI",
                key="spec.fhirConfig.structureDefinition")
    if isinstance(doc, ExtensionDocument) and not doc.extends:
        add("EmptyExtends", "extension mapping must name the model it extends", key="spec.extends")
    if isinstance(doc, ContextDocument):
        if not doc.template_id:
            add("MissingTemplate", "context mapping requires a template id", key="context.template.id")
        if not doc.start_archetype:
            add("MissingStart", "context mapping requires a start archetype", key="context.start")

    seen = set()
    for rule in doc.walk_rules():
        if rule.name in seen:
            add("DuplicateRuleName", f"rule name {rule.name!r} is used more than once", rule)
        seen.add(rule.name)
        if not rule.name:
            add("EmptyName", "rule name must not be empty", rule)
        has_paths = bool(rule.fhir_path) and bool(rule.openehr_path)
        if not (has_paths or rule.slot_archetype or rule.children):
            add("EmptyPath", f"rule {rule.name!r} needs both paths, a slotArchetype, or child mappings", rule)
        if rule.slot_archetype and not ARCHETYPE_ID_RE.match(rule.slot_archetype):
            add("BadArchetypeId", f"slotArchetype {rule.slot_archetype!r} is not an archetype id", rule)
        if rule.type_hint is not None and rule.type_hint not in TYPE_HINTS:
            add("BadTypeHint", f"type {rule.type_hint!r} is not one of {', '.join(TYPE_HINTS)}", rule)
        cond = rule.condition
        if cond is not None:
            if cond.operator.takes_operands and not cond.operands:
                add("ConditionArity", f"operator {cond.operator.value} needs at least one criterion", rule)
            elif not cond.operator.takes_operands and cond.operands:
                add("ConditionArity", f"operator {cond.operator.value} takes no criteria", rule)
            if not cond.target_path:
                add("EmptyPath", "condition targetAttribute must not be empty", rule)
    return ValidationReport(tuple(out))


def rule_lookup(doc: AnyDocument, name: str) -> Optional[MappingRule]:
    for rule in doc.rules:
        if rule.name == name:
            return rule
    return None


def rule_names(rules: Sequence[MappingRule]) -> set:
    """All names in a rule forest, nested children included."""
    return {r.name for top in rules for r in top.walk()}
