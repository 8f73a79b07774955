"""FHIR R4 resources as JSON trees and the FHIRPath subset used by mappings.

Supported path syntax: dotted field navigation, ``[n]`` indexers,
``where(field='literal')`` filters and the ``extension('<url>')``
shorthand, optionally rooted at ``$resource``. Function calls beyond those
two are rejected with a :class:`PathSyntaxError` naming the function.
"""

from __future__ import annotations

import copy
import re
from dataclasses import dataclass, field
from decimal import Decimal
from typing import Any, ClassVar, Dict, List, Optional, Tuple, Union

from . import jsonio
from .errors import DocumentError, OccurrenceError, PathSyntaxError, TypeClash

# R4 lexical form of dateTime
FHIR_DATETIME_RE = re.compile(
    r"^([0-9]([0-9]([0-9][1-9]|[1-9]0)|[1-9]00)|[1-9]000)(-(0[1-9]|1[0-2])(-(0[1-9]|[1-2][0-9]|3[0-1])"
    r"(T([01][0-9]|2[0-3]):[0-5][0-9]:([0-5][0-9]|60)(\.[0-9]+)?(Z|(\+|-)((0[0-9]|1[0-3]):[0-5][0-9]|14:00)))?)?)?$"
)
_URI_RE = re.compile(r"^[A-Za-z][A-Za-z0-9+.-]*:\S+$")

# Elements declared with a [x] choice type; writes through the bare name get a type suffix.
CHOICE_ELEMENTS = frozenset({
    "value", "onset", "abatement", "effective", "deceased", "multipleBirth", "performed",
    "occurrence", "medication", "timing", "asNeeded", "born", "serviced", "reported",
    "product", "item", "answer", "defaultValue", "fixed", "pattern", "collected",
    "allowed", "used", "dose", "rate", "entity",
})

# Elements with max cardinality * in the R4 resources this library targets.
# Ambiguous names (``name``, ``type``, ``location``) are left out; use an explicit index.
REPEATING_ELEMENTS = frozenset({
    "extension", "modifierExtension", "identifier", "coding", "category", "note", "bodySite",
    "component", "given", "prefix", "suffix", "line", "telecom", "address", "contact",
    "performer", "reasonCode", "reasonReference", "basedOn", "partOf", "complication",
    "complicationDetail", "followUp", "focalDevice", "usedReference", "usedCode", "evidence",
    "stage", "referenceRange", "interpretation", "hasMember", "derivedFrom", "dosage",
    "dosageInstruction", "instantiatesCanonical", "instantiatesUri", "profile", "entry",
    "link", "result", "contained", "report", "security", "tag", "participant", "diagnosis",
    "reaction", "ingredient",
})

RESERVED_KEYS = frozenset({"resourceType"})


# ---------------------------------------------------------------------------
# values


@dataclass(frozen=True)
class Coding:
    system: Optional[str] = None
    code: Optional[str] = None
    display: Optional[str] = None

    fhir_type: ClassVar[str] = "Coding"
    suffix: ClassVar[str] = "Coding"

    def canonical(self) -> str:
        return self.code or ""


@dataclass(frozen=True)
class CodeableConcept:
    codings: Tuple[Coding, ...] = ()
    text: Optional[str] = None

    fhir_type: ClassVar[str] = "CodeableConcept"
    suffix: ClassVar[str] = "CodeableConcept"

    def canonical(self) -> str:
        for c in self.codings:
            if c.code:
                return c.code
        return self.text or ""


@dataclass(frozen=True)
class FhirString:
    value: str

    fhir_type: ClassVar[str] = "string"
    suffix: ClassVar[str] = "String"

    def canonical(self) -> str:
        return self.value


@dataclass(frozen=True)
class FhirDateTime:
    value: str

    fhir_type: ClassVar[str] = "dateTime"
    suffix: ClassVar[str] = "DateTime"

    def __post_init__(self):
        if not isinstance(self.value, str) or not FHIR_DATETIME_RE.match(self.value):
            raise ValueError(f"{self.value!r} is not a FHIR dateTime")

    def canonical(self) -> str:
        return self.value


@dataclass(frozen=True)
class FhirQuantity:
    value: Decimal
    unit: Optional[str] = None
    system: Optional[str] = None
    code: Optional[str] = None

    fhir_type: ClassVar[str] = "Quantity"
    suffix: ClassVar[str] = "Quantity"

    def __post_init__(self):
        if isinstance(self.value, bool) or not isinstance(self.value, (Decimal, int, str)):
            raise ValueError(f"quantity value must be a decimal, got {self.value!r}")
        if not isinstance(self.value, Decimal):
            object.__setattr__(self, "value", Decimal(self.value))
        if not self.value.is_finite():
            raise ValueError("quantity value must be finite")
        if self.system is not None and not _URI_RE.match(self.system):
            raise ValueError(f"quantity system {self.system!r} is not a URI")

    def canonical(self) -> str:
        return str(self.value)


@dataclass(frozen=True)
class FhirBoolean:
    value: bool

    fhir_type: ClassVar[str] = "boolean"
    suffix: ClassVar[str] = "Boolean"

    def __post_init__(self):
        if not isinstance(self.value, bool):
            raise ValueError(f"boolean expected, got {self.value!r}")

    def canonical(self) -> str:
        return "true" if self.value else "false"


@dataclass(frozen=True)
class FhirIdentifier:
    value: Optional[str] = None
    system: Optional[str] = None
    type: Optional[str] = None

    fhir_type: ClassVar[str] = "Identifier"
    suffix: ClassVar[str] = "Identifier"

    def canonical(self) -> str:
        return self.value or ""


@dataclass(frozen=True)
class Reference:
    reference: str

    fhir_type: ClassVar[str] = "Reference"
    suffix: ClassVar[str] = "Reference"

    def canonical(self) -> str:
        return self.reference


@dataclass(frozen=True)
class FhirInteger:
    value: int

    fhir_type: ClassVar[str] = "integer"
    suffix: ClassVar[str] = "Integer"

    def __post_init__(self):
        if isinstance(self.value, bool) or not isinstance(self.value, int):
            raise ValueError(f"integer expected, got {self.value!r}")

    def canonical(self) -> str:
        return str(self.value)


FhirValue = Union[CodeableConcept, Coding, FhirString, FhirDateTime, FhirQuantity,
                  FhirBoolean, FhirIdentifier, Reference, FhirInteger]
FHIR_VALUE_TYPES = (CodeableConcept, Coding, FhirString, FhirDateTime, FhirQuantity,
                    FhirBoolean, FhirIdentifier, Reference, FhirInteger)
TYPE_BY_NAME = {cls.fhir_type: cls for cls in FHIR_VALUE_TYPES}
TYPE_BY_SUFFIX = {cls.suffix: cls for cls in FHIR_VALUE_TYPES}


def _drop_none(d: dict) -> dict:
    return {k: v for k, v in d.items() if v is not None}


def _coding_json(c: Coding) -> dict:
    return _drop_none({"system": c.system, "code": c.code, "display": c.display})


def value_to_json(v: FhirValue) -> Any:
    if isinstance(v, CodeableConcept):
        out: Dict[str, Any] = {}
        if v.codings:
            out["coding"] = [_coding_json(c) for c in v.codings]
        if v.text is not None:
            out["text"] = v.text
        return out
    if isinstance(v, Coding):
        return _coding_json(v)
    if isinstance(v, (FhirString, FhirDateTime, FhirBoolean, FhirInteger)):
        return v.value
    if isinstance(v, FhirQuantity):
        return _drop_none({"value": v.value, "unit": v.unit, "system": v.system, "code": v.code})
    if isinstance(v, FhirIdentifier):
        return _drop_none({"system": v.system, "value": v.value,
                           "type": {"text": v.type} if v.type is not None else None})
    if isinstance(v, Reference):
        return {"reference": v.reference}
    raise TypeError(f"not a FHIR value: {v!r}")


def infer_type(obj: Any) -> Optional[type]:
    """Guess the value type of an untyped JSON element from its shape."""
    if isinstance(obj, bool):
        return FhirBoolean
    if isinstance(obj, int):
        return FhirInteger
    if isinstance(obj, str):
        return FhirString
    if not isinstance(obj, dict):
        return None
    if "coding" in obj or (set(obj) <= {"text", "extension", "id"} and "text" in obj):
        return CodeableConcept
    if "reference" in obj:
        return Reference
    if isinstance(obj.get("value"), (Decimal, int)) and not isinstance(obj.get("value"), bool):
        return FhirQuantity
    if isinstance(obj.get("value"), str):
        return FhirIdentifier
    if "code" in obj or "system" in obj:
        return Coding
    return None


def value_from_json(obj: Any, value_type: Optional[type] = None) -> FhirValue:
    """Decode a JSON element as ``value_type`` (inferred from shape when omitted)."""
    cls = value_type or infer_type(obj)
    if cls is None:
        raise DocumentError(f"cannot determine the FHIR type of {obj!r}")
    try:
        if cls is CodeableConcept:
            _need(obj, dict)
            codings = tuple(Coding(c.get("system"), c.get("code"), c.get("display")) for c in obj.get("coding", []))
            return CodeableConcept(codings, obj.get("text"))
        if cls is Coding:
            _need(obj, dict)
            return Coding(obj.get("system"), obj.get("code"), obj.get("display"))
        if cls in (FhirString, FhirDateTime):
            _need(obj, str)
            return cls(obj)
        if cls is FhirBoolean:
            return FhirBoolean(obj)
        if cls is FhirInteger:
            return FhirInteger(obj)
        if cls is FhirQuantity:
            _need(obj, dict)
            return FhirQuantity(obj["value"], obj.get("unit"), obj.get("system"), obj.get("code"))
        if cls is FhirIdentifier:
            _need(obj, dict)
            typ = obj.get("type")
            return FhirIdentifier(obj.get("value"), obj.get("system"),
                                  typ.get("text") if isinstance(typ, dict) else None)
        if cls is Reference:
            _need(obj, dict)
            return Reference(obj["reference"])
    except (KeyError, TypeError, ValueError, AttributeError) as exc:
        raise DocumentError(f"cannot read {obj!r} as {cls.fhir_type}: {exc}") from None
    raise DocumentError(f"unsupported FHIR type {cls!r}")


def _need(obj, typ):
    if not isinstance(obj, typ):
        raise TypeError(f"expected {typ.__name__}")


# ---------------------------------------------------------------------------
# paths


@dataclass(frozen=True)
class Field:
    name: str


@dataclass(frozen=True)
class Index:
    n: int


@dataclass(frozen=True)
class WhereEq:
    field: str
    literal: str


Step = Union[Field, Index, WhereEq]


def ExtensionUrl(url: str) -> Tuple[Step, ...]:
    """``extension('<url>')`` as the steps it stands for."""
    return (Field("extension"), WhereEq("url", url))


@dataclass(frozen=True)
class FhirPath:
    steps: Tuple[Step, ...] = ()
    absolute: bool = True

    def __str__(self) -> str:
        parts: List[str] = []
        for step in self.steps:
            if isinstance(step, Field):
                parts.append(("." if parts else "") + step.name)
            elif isinstance(step, Index):
                parts.append(f"[{step.n}]")
            else:
                lit = step.literal.replace("\\", "\\\\").replace("'", "\\'")
                parts.append(("." if parts else "") + f"where({step.field}='{lit}')")
        body = "".join(parts)
        if self.absolute:
            return "$resource" + ("." + body if body else "")
        return body

    def join(self, other: "FhirPath") -> "FhirPath":
        return FhirPath(self.steps + other.steps, self.absolute)


_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_INT_RE = re.compile(r"\d+")


def _string_literal(text: str, pos: int) -> Tuple[str, int]:
    if pos >= len(text) or text[pos] not in "'\"":
        raise PathSyntaxError("expected a quoted string", text, pos)
    quote = text[pos]
    buf = []
    p = pos + 1
    while p < len(text) and text[p] != quote:
        if text[p] == "\\" and p + 1 < len(text):
            p += 1
        buf.append(text[p])
        p += 1
    if p >= len(text):
        raise PathSyntaxError("unterminated string", text, pos)
    return "".join(buf), p + 1


def _skip_ws(text: str, pos: int) -> int:
    while pos < len(text) and text[pos] == " ":
        pos += 1
    return pos


def _expect(text: str, pos: int, ch: str) -> int:
    pos = _skip_ws(text, pos)
    if pos >= len(text) or text[pos] != ch:
        raise PathSyntaxError(f"expected {ch!r}", text, pos)
    return pos + 1


def parse_fhir_path(text: str) -> FhirPath:
    """Parse ``$resource.code``, ``extension('url').valueCoding`` and friends."""
    if not isinstance(text, str):
        raise PathSyntaxError("path must be a string", repr(text), 0)
    pos = 0
    absolute = False
    if text.startswith("$"):
        if not text.startswith("$resource"):
            raise PathSyntaxError("only the $resource root is supported", text, 0)
        pos = len("$resource")
        absolute = True
        if pos == len(text):
            return FhirPath((), True)
        if text[pos] != ".":
            raise PathSyntaxError("expected '.' after $resource", text, pos)
        pos += 1
    elif text == "":
        return FhirPath((), False)
    steps: List[Step] = []
    while True:
        m = _IDENT_RE.match(text, pos)
        if not m:
            raise PathSyntaxError("expected an element name", text, pos)
        ident = m.group(0)
        pos = m.end()
        if pos < len(text) and text[pos] == "(":
            if ident == "extension":
                url, pos = _string_literal(text, _skip_ws(text, pos + 1))
                pos = _expect(text, pos, ")")
                steps.extend(ExtensionUrl(url))
            elif ident == "where":
                if not steps:
                    raise PathSyntaxError("where() needs a collection to filter", text, m.start())
                p = _skip_ws(text, pos + 1)
                fm = _IDENT_RE.match(text, p)
                if not fm:
                    raise PathSyntaxError("expected a field name in where()", text, p)
                p = _expect(text, fm.end(), "=")
                lit, p = _string_literal(text, _skip_ws(text, p))
                pos = _expect(text, p, ")")
                steps.append(WhereEq(fm.group(0), lit))
            else:
                raise PathSyntaxError(f"unsupported FHIRPath function '{ident}()'", text, m.start())
        else:
            steps.append(Field(ident))
        while pos < len(text) and text[pos] == "[":
            im = _INT_RE.match(text, pos + 1)
            if not im:
                raise PathSyntaxError("expected an integer index", text, pos + 1)
            pos = _expect(text, im.end(), "]")
            steps.append(Index(int(im.group(0))))
        if pos == len(text):
            break
        if text[pos] != ".":
            raise PathSyntaxError(f"unsupported FHIRPath construct {text[pos]!r}", text, pos)
        pos += 1
    return FhirPath(tuple(steps), absolute)


def _as_path(path: Union[str, FhirPath]) -> FhirPath:
    return parse_fhir_path(path) if isinstance(path, str) else path


# ---------------------------------------------------------------------------
# selection


@dataclass
class Match:
    """One element reached by a path, with where it lives."""

    value: Any
    parent: Any = None  # dict or list holding the value
    key: Any = None  # key in parent dict, or index in parent list
    value_type: Optional[type] = None  # from a choice-type suffix

    def path_hint(self) -> str:
        return "" if self.key is None else str(self.key)


def _choice_matches(obj: dict, name: str) -> List[Tuple[str, type]]:
    out = []
    for key in obj:
        if key.startswith(name) and len(key) > len(name) and key[len(name)].isupper():
            cls = TYPE_BY_SUFFIX.get(key[len(name):])
            if cls is not None:
                out.append((key, cls))
    return out


def _suffix_type(key: str) -> Optional[type]:
    for base in CHOICE_ELEMENTS:
        if key.startswith(base) and key[len(base):] in TYPE_BY_SUFFIX:
            return TYPE_BY_SUFFIX[key[len(base):]]
    return None


def _expand(obj: dict, key: str, value_type: Optional[type]) -> List[Match]:
    val = obj[key]
    if isinstance(val, list):
        return [Match(item, val, i, value_type) for i, item in enumerate(val)]
    return [Match(val, obj, key, value_type)]


def select(root: Any, path: Union[str, FhirPath]) -> List[Match]:
    """Every element the path reaches, in document order."""
    path = _as_path(path)
    current = [Match(root)]
    for step in path.steps:
        nxt: List[Match] = []
        if isinstance(step, Field):
            for m in current:
                obj = m.value
                if not isinstance(obj, dict):
                    continue
                if step.name in obj:
                    nxt.extend(_expand(obj, step.name, _suffix_type(step.name)))
                else:
                    for key, cls in _choice_matches(obj, step.name):
                        nxt.extend(_expand(obj, key, cls))
        elif isinstance(step, Index):
            nxt = [current[step.n]] if step.n < len(current) else []
        else:
            nxt = [m for m in current if isinstance(m.value, dict) and _literal_eq(m.value.get(step.field), step.literal)]
        current = nxt
        if not current:
            break
    return current


def _literal_eq(value: Any, literal: str) -> bool:
    if isinstance(value, bool):
        return ("true" if value else "false") == literal
    if isinstance(value, (str, int, Decimal)):
        return str(value) == literal
    return False


# ---------------------------------------------------------------------------
# documents


@dataclass
class FhirDocument:
    resource_type: str
    root: Dict[str, Any]
    full_url: Optional[str] = None

    def __post_init__(self):
        if not isinstance(self.root, dict) or self.root.get("resourceType") != self.resource_type:
            raise DocumentError(f"resource root must carry resourceType {self.resource_type!r}")

    @classmethod
    def new(cls, resource_type: str) -> "FhirDocument":
        return cls(resource_type, {"resourceType": resource_type})

    @classmethod
    def from_json(cls, obj: Any) -> "FhirDocument":
        if not isinstance(obj, dict) or not isinstance(obj.get("resourceType"), str):
            raise DocumentError("a FHIR resource must be a JSON object with a resourceType")
        return cls(obj["resourceType"], obj)

    def to_json(self) -> Dict[str, Any]:
        return self.root

    def dumps(self) -> str:
        return jsonio.dumps(self.root)


def loads_resource(text) -> FhirDocument:
    return FhirDocument.from_json(jsonio.loads(text))


def get_values(doc: Union[FhirDocument, dict], path: Union[str, FhirPath],
               value_type: Optional[type] = None) -> List[FhirValue]:
    """Typed values at ``path``; elements whose type cannot be read are skipped.

    A bare choice element such as ``onset`` matches ``onsetDateTime`` etc. and
    the suffix decides the reported type.
    """
    root = doc.root if isinstance(doc, FhirDocument) else doc
    out = []
    for m in select(root, path):
        try:
            out.append(value_from_json(m.value, value_type or m.value_type))
        except DocumentError:
            continue
    return out


@dataclass
class _Unit:
    name: str
    filters: Tuple[WhereEq, ...] = ()
    index: Optional[int] = None
    steps: Tuple[Step, ...] = ()


def _units(path: FhirPath) -> List[_Unit]:
    units: List[_Unit] = []
    for step in path.steps:
        if isinstance(step, Field):
            units.append(_Unit(step.name, steps=(step,)))
            continue
        if not units:
            raise PathSyntaxError("path must start with an element name", str(path), 0)
        u = units[-1]
        if isinstance(step, WhereEq):
            if u.index is not None:
                raise PathSyntaxError("where() after an index is not writable", str(path), 0)
            u.filters += (step,)
        else:
            if u.index is not None:
                raise PathSyntaxError("double index is not writable", str(path), 0)
            u.index = step.n
        u.steps += (step,)
    return units


def _filters_ok(obj: Any, filters) -> bool:
    return all(isinstance(obj, dict) and _literal_eq(obj.get(f.field), f.literal) for f in filters)


def _compatible(existing: Any, new: Any) -> bool:
    if isinstance(existing, dict) or isinstance(new, dict):
        return isinstance(existing, dict) and isinstance(new, dict)
    if isinstance(existing, list) or isinstance(new, list):
        return False
    if isinstance(existing, bool) or isinstance(new, bool):
        return type(existing) is type(new)
    if isinstance(existing, (int, Decimal)):
        return isinstance(new, (int, Decimal))
    return type(existing) is type(new)


def _overwrite(m: Match, new: Any, label: str) -> Any:
    if not _compatible(m.value, new):
        raise TypeClash(f"{label} holds {type(m.value).__name__}, cannot write {type(new).__name__}")
    if isinstance(new, dict) and not new:
        return m.value  # anchor request: keep the existing object
    m.parent[m.key] = new
    return new


def _repeating(u: _Unit, existing: Any) -> bool:
    return u.index is None and (bool(u.filters) or u.name in REPEATING_ELEMENTS or isinstance(existing, list))


def _spine_child(existing: Any, u: _Unit) -> Any:
    """Follow the last matching element, as a new write would."""
    if isinstance(existing, list):
        cands = [e for e in existing if _filters_ok(e, u.filters)]
        if u.index is not None:
            return cands[u.index] if u.index < len(cands) else None
        return cands[-1] if cands else None
    return existing


def write(root: dict, path: Union[str, FhirPath], new: Any, occurrence: int = 0,
          value_type: Optional[type] = None) -> Any:
    """Write the JSON element ``new`` at the ``occurrence``-th location of ``path``.

    In place. ``occurrence`` may address an existing match or be one past the
    last; a new location is appended at the deepest repeating element of the
    path. An empty dict as ``new`` finds or creates an anchor object.
    Returns the stored element.
    """
    path = _as_path(path)
    label = str(path)
    units = _units(path)
    if not units:
        raise TypeClash("cannot write the resource root itself")
    if units[0].name in RESERVED_KEYS and "resourceType" in root:
        raise TypeClash(f"{units[0].name} is reserved")
    if occurrence < 0:
        raise OccurrenceError(f"occurrence must be >= 0, got {occurrence}")

    last = len(units) - 1
    keys = [u.name for u in units]
    term = units[last]
    if value_type is not None and term.name in CHOICE_ELEMENTS and not term.filters and term.index is None:
        keys[last] = term.name + value_type.suffix
        parent_path = FhirPath(path.steps[:-1], path.absolute)
        for m in select(root, parent_path):
            if isinstance(m.value, dict):
                for other, _ in _choice_matches(m.value, term.name):
                    if other != keys[last]:
                        raise TypeClash(f"{label} already holds {other}, cannot write {keys[last]}")
        matches = select(root, parent_path.join(FhirPath((Field(keys[last]),), False)))
    else:
        matches = select(root, path)

    if occurrence < len(matches):
        return _overwrite(matches[occurrence], new, label)
    if occurrence > len(matches):
        raise OccurrenceError(f"cannot create occurrence {occurrence} of {label}: only {len(matches)} exist")

    # deepest repeating element along the spine of last elements
    exp = None
    node: Any = root
    for i, u in enumerate(units):
        existing = node.get(keys[i]) if isinstance(node, dict) else None
        if _repeating(u, existing):
            exp = i
        node = _spine_child(existing, u)
    if matches and exp is None:
        raise OccurrenceError(f"{label} is a single element and already populated")

    node = root
    consumed = 0
    for i, u in enumerate(units):
        key = keys[i]
        consumed += len(u.steps)
        if not isinstance(node, dict):
            raise TypeClash(f"{label}: cannot navigate into {type(node).__name__} at {key}")
        existing = node.get(key)
        if not _repeating(u, existing) and u.index is None:
            if i == last:
                if existing is not None:
                    return _overwrite(Match(existing, node, key), new, label)
                node[key] = new
                return new
            if existing is None:
                existing = node[key] = {}
            node = existing
            continue

        if existing is None:
            existing = node[key] = []
        elif not isinstance(existing, list):
            raise TypeClash(f"{label}: {key} holds {type(existing).__name__}, expected a list")
        cands = [j for j, e in enumerate(existing) if _filters_ok(e, u.filters)]
        seed = {f.field: f.literal for f in u.filters}

        if u.index is not None:
            if u.index < len(cands):
                pos = cands[u.index]
                if i == last:
                    return _overwrite(Match(existing[pos], existing, pos), new, label)
                node = existing[pos]
                continue
            if u.index > len(cands):
                raise OccurrenceError(f"{label}: index {u.index} is past the end of {key}")
        elif i == last:
            if isinstance(new, dict):
                new = {**seed, **new}
            existing.append(new)
            return new
        elif cands and (i != exp or not select(existing[cands[-1]], FhirPath(path.steps[consumed:], False))):
            node = existing[cands[-1]]
            continue
        if i == last:
            existing.append(new)
            return new
        node = dict(seed)
        existing.append(node)
    raise AssertionError("unreachable")


def set_in_place(root: dict, path: Union[str, FhirPath], value: FhirValue, occurrence: int = 0) -> Any:
    if not isinstance(value, FHIR_VALUE_TYPES):
        raise TypeError(f"not a FHIR value: {value!r}")
    return write(root, path, value_to_json(value), occurrence, type(value))


def set_value(doc: FhirDocument, path: Union[str, FhirPath], value: FhirValue,
              occurrence: int = 0) -> FhirDocument:
    """Return a copy of ``doc`` with ``value`` written at ``path``.

    Intermediate objects and arrays are created as needed. Writing a bare
    choice element (``onset``) stores the type-suffixed key (``onsetDateTime``).
    """
    root = copy.deepcopy(doc.root)
    set_in_place(root, path, value, occurrence)
    return FhirDocument(doc.resource_type, root, doc.full_url)


def prune_empty(obj: Any) -> Any:
    """Remove empty objects and arrays left behind by anchor creation (in place)."""
    if isinstance(obj, dict):
        for key in list(obj):
            prune_empty(obj[key])
            if obj[key] == {} or obj[key] == []:
                del obj[key]
    elif isinstance(obj, list):
        for item in obj:
            prune_empty(item)
        obj[:] = [item for item in obj if item != {} and item != []]
    return obj
