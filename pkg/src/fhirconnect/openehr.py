"""openEHR compositions as trees, archetype paths over them, canonical JSON.

A composition is held as a tree of :class:`EhrNode`. Leaf ELEMENTs carry a
typed data value; RM attributes that directly hold a data value (``time``,
``context/start_time``, ``composer``, ``territory``) become value-carrying
pseudo-nodes so the same path machinery reaches them. Everything in the
canonical JSON that the tree does not model is kept verbatim in ``extras``.
"""

from __future__ import annotations

import copy
import re
from dataclasses import dataclass, field
from decimal import Decimal
from typing import Any, Dict, Iterator, List, Optional, Tuple, Union

from . import jsonio
from .errors import DocumentError, OccurrenceError, PathAmbiguous, PathSyntaxError, TypeClash
from .model import ARCHETYPE_ID_RE, archetype_rm_class

AT_CODE_RE = re.compile(r"^at\d{4,}(\.\d+)*$")

# ISO 8601 extended format, reduced precision allowed
_ISO_DATETIME_RE = re.compile(
    r"^\d{4}(-(0[1-9]|1[0-2])(-(0[1-9]|[12]\d|3[01])"
    r"(T([01]\d|2[0-3])(:[0-5]\d(:([0-5]\d|60)([.,]\d+)?)?)?(Z|[+-]([01]\d|2[0-3])(:?[0-5]\d)?)?)?)?)?$"
)


# ---------------------------------------------------------------------------
# data values


@dataclass(frozen=True)
class DvCodedText:
    value: str
    code: str
    terminology: str

    def canonical(self) -> str:
        return self.code


@dataclass(frozen=True)
class DvText:
    value: str

    def canonical(self) -> str:
        return self.value


@dataclass(frozen=True)
class DvDateTime:
    value: str

    def __post_init__(self):
        if not isinstance(self.value, str) or not _ISO_DATETIME_RE.match(self.value):
            raise ValueError(f"{self.value!r} is not an ISO 8601 date/time")

    def canonical(self) -> str:
        return self.value


@dataclass(frozen=True)
class DvQuantity:
    magnitude: Decimal
    unit: str

    def __post_init__(self):
        if isinstance(self.magnitude, bool) or not isinstance(self.magnitude, (Decimal, int, str)):
            raise ValueError(f"quantity magnitude must be a decimal, got {self.magnitude!r}")
        if not isinstance(self.magnitude, Decimal):
            object.__setattr__(self, "magnitude", Decimal(self.magnitude))
        if not self.magnitude.is_finite():
            raise ValueError("quantity magnitude must be finite")
        if not self.unit:
            raise ValueError("quantity unit must be a non-empty UCUM string")

    def canonical(self) -> str:
        return str(self.magnitude)


@dataclass(frozen=True)
class DvBoolean:
    value: bool

    def __post_init__(self):
        if not isinstance(self.value, bool):
            raise ValueError(f"boolean value expected, got {self.value!r}")

    def canonical(self) -> str:
        return "true" if self.value else "false"


@dataclass(frozen=True)
class DvIdentifier:
    id: str
    issuer: Optional[str] = None
    type: Optional[str] = None

    def canonical(self) -> str:
        return self.id


@dataclass(frozen=True)
class DvCount:
    value: int

    def __post_init__(self):
        if isinstance(self.value, bool) or not isinstance(self.value, int):
            raise ValueError(f"count must be an integer, got {self.value!r}")

    def canonical(self) -> str:
        return str(self.value)


DataValue = Union[DvCodedText, DvText, DvDateTime, DvQuantity, DvBoolean, DvIdentifier, DvCount]
DATA_VALUE_TYPES = (DvCodedText, DvText, DvDateTime, DvQuantity, DvBoolean, DvIdentifier, DvCount)

RM_TYPE_OF = {
    DvCodedText: "DV_CODED_TEXT",
    DvText: "DV_TEXT",
    DvDateTime: "DV_DATE_TIME",
    DvQuantity: "DV_QUANTITY",
    DvBoolean: "DV_BOOLEAN",
    DvIdentifier: "DV_IDENTIFIER",
    DvCount: "DV_COUNT",
}


def _code_phrase(terminology: str, code: str) -> dict:
    return {"_type": "CODE_PHRASE", "terminology_id": {"_type": "TERMINOLOGY_ID", "value": terminology},
            "code_string": code}


def data_value_to_json(v: DataValue) -> dict:
    if isinstance(v, DvCodedText):
        return {"_type": "DV_CODED_TEXT", "value": v.value, "defining_code": _code_phrase(v.terminology, v.code)}
    if isinstance(v, DvText):
        return {"_type": "DV_TEXT", "value": v.value}
    if isinstance(v, DvDateTime):
        return {"_type": "DV_DATE_TIME", "value": v.value}
    if isinstance(v, DvQuantity):
        return {"_type": "DV_QUANTITY", "magnitude": v.magnitude, "units": v.unit}
    if isinstance(v, DvBoolean):
        return {"_type": "DV_BOOLEAN", "value": v.value}
    if isinstance(v, DvIdentifier):
        out = {"_type": "DV_IDENTIFIER", "id": v.id}
        if v.issuer is not None:
            out["issuer"] = v.issuer
        if v.type is not None:
            out["type"] = v.type
        return out
    if isinstance(v, DvCount):
        return {"_type": "DV_COUNT", "magnitude": v.value}
    raise TypeError(f"not a data value: {v!r}")


def data_value_from_json(obj: Any) -> Optional[DataValue]:
    """Decode a canonical-JSON data value; ``None`` for unsupported types."""
    if not isinstance(obj, dict):
        return None
    t = obj.get("_type")
    try:
        if t == "DV_CODED_TEXT":
            dc = obj["defining_code"]
            return DvCodedText(obj["value"], dc["code_string"], dc["terminology_id"]["value"])
        if t == "DV_TEXT":
            return DvText(obj["value"])
        if t == "DV_DATE_TIME":
            return DvDateTime(obj["value"])
        if t == "DV_QUANTITY":
            mag = obj["magnitude"]
            if isinstance(mag, float):
                mag = Decimal(repr(mag))
            return DvQuantity(mag, obj["units"])
        if t == "DV_BOOLEAN":
            return DvBoolean(obj["value"])
        if t == "DV_IDENTIFIER":
            return DvIdentifier(obj["id"], obj.get("issuer"), obj.get("type"))
        if t == "DV_COUNT":
            return DvCount(obj["magnitude"])
    except (KeyError, TypeError, ValueError) as exc:
        raise DocumentError(f"malformed {t}: {exc}") from None
    return None


# ---------------------------------------------------------------------------
# tree


@dataclass
class EhrNode:
    rm_type: str
    archetype_node_id: Optional[str] = None
    name: Optional[str] = None
    attributes: Dict[str, List["EhrNode"]] = field(default_factory=dict)
    value: Optional[DataValue] = None
    extras: Dict[str, Any] = field(default_factory=dict)

    def children(self) -> Iterator[Tuple[str, "EhrNode"]]:
        for attr, nodes in self.attributes.items():
            for node in nodes:
                yield attr, node

    def is_archetype_root(self) -> bool:
        return bool(self.archetype_node_id) and bool(ARCHETYPE_ID_RE.match(self.archetype_node_id))


# ---------------------------------------------------------------------------
# paths


@dataclass(frozen=True)
class PathSegment:
    attribute: str
    node_id: Optional[str] = None
    name: Optional[str] = None

    def matches(self, node: EhrNode) -> bool:
        if self.node_id is not None and node.archetype_node_id != self.node_id:
            return False
        if self.name is not None and node.name != self.name:
            return False
        return True

    def __str__(self) -> str:
        preds = []
        if self.node_id is not None:
            preds.append(self.node_id)
        if self.name is not None:
            escaped = self.name.replace("\\", "\\\\").replace("'", "\\'")
            preds.append(f"'{escaped}'")
        return self.attribute + (f"[{', '.join(preds)}]" if preds else "")


@dataclass(frozen=True)
class EhrPath:
    segments: Tuple[PathSegment, ...] = ()
    absolute: bool = True

    def __str__(self) -> str:
        body = "/".join(str(s) for s in self.segments)
        if self.absolute:
            return "$archetype" + ("/" + body if body else "")
        return body

    def join(self, other: "EhrPath") -> "EhrPath":
        return EhrPath(self.segments + other.segments, self.absolute)


_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_NODE_ID_RE = re.compile(r"at\d{4,}(?:\.\d+)*|openEHR-EHR-[A-Z][A-Z_]*\.[A-Za-z0-9_]+(?:-[A-Za-z0-9_]+)*\.v\d+")


def _parse_predicate(text: str, start: int, end: int) -> Tuple[Optional[str], Optional[str]]:
    """Parse the inside of ``[...]`` spanning text[start:end]."""
    pos = start
    node_id = name = None

    def skip_ws(p):
        while p < end and text[p] == " ":
            p += 1
        return p

    pos = skip_ws(pos)
    m = _NODE_ID_RE.match(text, pos, end)
    if m:
        node_id = m.group(0)
        pos = skip_ws(m.end())
        if pos < end:
            if text[pos] != ",":
                raise PathSyntaxError("expected ',' or ']' after node id", text, pos)
            pos = skip_ws(pos + 1)
            if pos >= end or text[pos] != "'":
                raise PathSyntaxError("expected quoted name after ','", text, pos)
    if pos < end and text[pos] == "'":
        buf = []
        p = pos + 1
        while p < end and text[p] != "'":
            if text[p] == "\\" and p + 1 < end:
                p += 1
            buf.append(text[p])
            p += 1
        if p >= end:
            raise PathSyntaxError("unterminated name predicate", text, pos)
        name = "".join(buf)
        pos = skip_ws(p + 1)
    if pos != end:
        raise PathSyntaxError("unsupported predicate", text, pos)
    if node_id is None and name is None:
        raise PathSyntaxError("empty predicate", text, start - 1)
    return node_id, name


def _closing_bracket(text: str, open_at: int) -> int:
    p = open_at + 1
    in_quote = False
    while p < len(text):
        ch = text[p]
        if in_quote:
            if ch == "\\":
                p += 1
            elif ch == "'":
                in_quote = False
        elif ch == "'":
            in_quote = True
        elif ch == "[" or ch == "/":
            break
        elif ch == "]":
            return p
        p += 1
    raise PathSyntaxError("unclosed '['", text, open_at)


def parse_ehr_path(text: str) -> EhrPath:
    """Parse ``$archetype/data[at0001]/items[at0002, 'Name']`` or a relative path."""
    if not isinstance(text, str):
        raise PathSyntaxError("path must be a string", repr(text), 0)
    pos = 0
    absolute = False
    if text.startswith("$"):
        if not text.startswith("$archetype"):
            raise PathSyntaxError("only the $archetype root is supported", text, 0)
        pos = len("$archetype")
        absolute = True
        if pos == len(text):
            return EhrPath((), True)
        if text[pos] != "/":
            raise PathSyntaxError("expected '/' after $archetype", text, pos)
        pos += 1
    elif text == "":
        return EhrPath((), False)
    segments = []
    while True:
        m = _IDENT_RE.match(text, pos)
        if not m:
            raise PathSyntaxError("expected attribute name", text, pos)
        attr = m.group(0)
        pos = m.end()
        node_id = name = None
        if pos < len(text) and text[pos] == "[":
            close = _closing_bracket(text, pos)
            node_id, name = _parse_predicate(text, pos + 1, close)
            pos = close + 1
        segments.append(PathSegment(attr, node_id, name))
        if pos == len(text):
            break
        if text[pos] != "/":
            raise PathSyntaxError(f"unexpected character {text[pos]!r}", text, pos)
        pos += 1
        if pos == len(text):
            raise PathSyntaxError("trailing '/'", text, pos - 1)
    return EhrPath(tuple(segments), absolute)


def _as_path(path: Union[str, EhrPath]) -> EhrPath:
    return parse_ehr_path(path) if isinstance(path, str) else path


def find_nodes(root: EhrNode, path: Union[str, EhrPath]) -> List[EhrNode]:
    """All nodes addressed by ``path`` below ``root``, in document order."""
    path = _as_path(path)
    current = [root]
    for seg in path.segments:
        current = [c for n in current for c in n.attributes.get(seg.attribute, ()) if seg.matches(c)]
        if not current:
            break
    return current


def get_values(root: EhrNode, path: Union[str, EhrPath]) -> List[Tuple[EhrNode, DataValue]]:
    """(node, value) for every value-carrying node the path reaches."""
    return [(n, n.value) for n in find_nodes(root, path) if n.value is not None]


# ---------------------------------------------------------------------------
# construction

# (parent rm type, attribute) -> rm type for non-leaf nodes created on write
_CREATED_RM_TYPES = {
    ("OBSERVATION", "data"): "HISTORY",
    ("OBSERVATION", "state"): "ITEM_TREE",
    ("OBSERVATION", "protocol"): "ITEM_TREE",
    ("HISTORY", "events"): "POINT_EVENT",
    ("POINT_EVENT", "data"): "ITEM_TREE",
    ("POINT_EVENT", "state"): "ITEM_TREE",
    ("INTERVAL_EVENT", "data"): "ITEM_TREE",
    ("EVENT", "data"): "ITEM_TREE",
    ("EVALUATION", "data"): "ITEM_TREE",
    ("EVALUATION", "protocol"): "ITEM_TREE",
    ("ADMIN_ENTRY", "data"): "ITEM_TREE",
    ("ACTION", "description"): "ITEM_TREE",
    ("ACTION", "protocol"): "ITEM_TREE",
    ("INSTRUCTION", "activities"): "ACTIVITY",
    ("INSTRUCTION", "protocol"): "ITEM_TREE",
    ("ACTIVITY", "description"): "ITEM_TREE",
    ("COMPOSITION", "context"): "EVENT_CONTEXT",
    ("COMPOSITION", "content"): "SECTION",
    ("EVENT_CONTEXT", "other_context"): "ITEM_TREE",
    ("SECTION", "items"): "SECTION",
}

# RM attributes that hold a data value directly rather than a LOCATABLE
DV_ATTRIBUTES = {"time", "origin", "start_time", "end_time", "category", "setting", "math_function"}

MULTI_ATTRIBUTES = {"items", "events", "content", "activities", "other_participations", "links"}


def _infer_rm_type(parent: EhrNode, seg: PathSegment, leaf: bool, value: Optional[DataValue]) -> str:
    if seg.node_id and ARCHETYPE_ID_RE.match(seg.node_id):
        return archetype_rm_class(seg.node_id)
    if leaf:
        if seg.attribute in DV_ATTRIBUTES and value is not None:
            return RM_TYPE_OF[type(value)]
        if seg.attribute == "composer":
            return "PARTY_IDENTIFIED"
        if seg.attribute == "territory":
            return "CODE_PHRASE"
        return "ELEMENT"
    known = _CREATED_RM_TYPES.get((parent.rm_type, seg.attribute))
    if known:
        return known
    return "CLUSTER"


def _locate(root: EhrNode, path: EhrPath, occurrence: int, *, leaf: bool,
            value: Optional[DataValue] = None) -> EhrNode:
    """Return the ``occurrence``-th match of ``path``, creating it if it is the next one."""
    if occurrence < 0:
        raise OccurrenceError(f"occurrence must be >= 0, got {occurrence}")
    if not path.segments:
        if occurrence != 0:
            raise OccurrenceError("the root has exactly one occurrence")
        return root
    matches = find_nodes(root, path)
    if occurrence < len(matches):
        return matches[occurrence]
    if occurrence > len(matches):
        raise OccurrenceError(
            f"cannot create occurrence {occurrence} of {path}: only {len(matches)} exist")
    node = root
    for seg in path.segments[:-1]:
        siblings = [c for c in node.attributes.get(seg.attribute, ()) if seg.matches(c)]
        if len(siblings) > 1 and seg.node_id is None and seg.name is None:
            raise PathAmbiguous(f"segment {seg} of {path} matches {len(siblings)} siblings")
        if siblings:
            # last branch, so a new leaf lands after every existing match
            node = siblings[-1]
        else:
            child = EhrNode(_infer_rm_type(node, seg, False, None), seg.node_id, seg.name)
            node.attributes.setdefault(seg.attribute, []).append(child)
            node = child
    seg = path.segments[-1]
    child = EhrNode(_infer_rm_type(node, seg, leaf, value), seg.node_id, seg.name)
    node.attributes.setdefault(seg.attribute, []).append(child)
    return child


def set_in_place(root: EhrNode, path: Union[str, EhrPath], value: DataValue, occurrence: int = 0) -> EhrNode:
    """Mutating form of :func:`set_value`; returns the node that now holds ``value``."""
    if not isinstance(value, DATA_VALUE_TYPES):
        raise TypeError(f"not a data value: {value!r}")
    path = _as_path(path)
    target = _locate(root, path, occurrence, leaf=True, value=value)
    if target.value is not None and type(target.value) is not type(value):
        raise TypeClash(f"{path} holds {type(target.value).__name__}, cannot write {type(value).__name__}")
    if target.attributes and any(target.attributes.values()):
        raise TypeClash(f"{path} addresses a structural {target.rm_type} node, not a leaf")
    target.value = value
    return target


def ensure_node(root: EhrNode, path: Union[str, EhrPath], occurrence: int = 0) -> EhrNode:
    """Find or create the ``occurrence``-th structural node at ``path`` (in place)."""
    path = _as_path(path)
    node = _locate(root, path, occurrence, leaf=False)
    if node.value is not None:
        raise TypeClash(f"{path} is a leaf holding {type(node.value).__name__}")
    return node


def set_value(doc: EhrNode, path: Union[str, EhrPath], value: DataValue, occurrence: int = 0) -> EhrNode:
    """Return a copy of ``doc`` where the addressed node holds ``value``.

    Missing intermediate nodes are created with the path's at-codes and RM
    types inferred from their attribute names. ``occurrence`` may select an
    existing match or be exactly one past the last, which appends a sibling.
    """
    out = copy.deepcopy(doc)
    set_in_place(out, path, value, occurrence)
    return out


# ---------------------------------------------------------------------------
# walking


def iter_leaves(root: EhrNode, *, indexed: bool = False) -> Iterator[Tuple[str, EhrNode]]:
    """Yield (path, node) for every value-carrying node, paths relative to ``root``.

    With ``indexed`` each segment gets ``#k``, the position among siblings
    sharing the same attribute and predicate, which makes paths unique.
    """

    def walk(node: EhrNode, prefix: str):
        for attr, nodes in node.attributes.items():
            counts: Dict[Tuple, int] = {}
            for child in nodes:
                seg = str(PathSegment(attr, child.archetype_node_id))
                key = (attr, child.archetype_node_id)
                k = counts.get(key, 0)
                counts[key] = k + 1
                if indexed:
                    seg = f"{seg}#{k}"
                path = f"{prefix}/{seg}" if prefix else seg
                if child.value is not None:
                    yield path, child
                yield from walk(child, path)

    yield from walk(root, "")


def iter_nodes(root: EhrNode) -> Iterator[EhrNode]:
    yield root
    for _, child in root.children():
        yield from iter_nodes(child)


def prune_empty(root: EhrNode) -> None:
    """Drop created nodes that ended up with neither a value nor children."""
    for attr in list(root.attributes):
        kept = []
        for child in root.attributes[attr]:
            prune_empty(child)
            if child.value is not None or any(child.attributes.values()) or child.extras:
                kept.append(child)
        if kept:
            root.attributes[attr] = kept
        else:
            del root.attributes[attr]


# ---------------------------------------------------------------------------
# canonical JSON


def _is_node_json(obj: Any) -> bool:
    return isinstance(obj, dict) and ("archetype_node_id" in obj or obj.get("_type") == "EVENT_CONTEXT")


def node_from_json(obj: Any) -> EhrNode:
    """Build a tree from openEHR canonical JSON (``_type`` convention)."""
    if not isinstance(obj, dict) or "_type" not in obj:
        raise DocumentError("canonical JSON node must be an object with '_type'")
    node = EhrNode(obj["_type"], obj.get("archetype_node_id"))
    for key, val in obj.items():
        if key in ("_type", "archetype_node_id"):
            continue
        if key == "name":
            if isinstance(val, dict) and val.get("_type", "DV_TEXT") == "DV_TEXT" and set(val) <= {"_type", "value"}:
                node.name = val.get("value")
            else:
                node.extras[key] = val
            continue
        if key == "value" and node.rm_type == "ELEMENT":
            dv = data_value_from_json(val)
            if dv is not None:
                node.value = dv
            else:
                node.extras[key] = val
            continue
        if key == "composer" and isinstance(val, dict) and val.get("_type") == "PARTY_IDENTIFIED" \
                and isinstance(val.get("name"), str):
            pseudo = EhrNode("PARTY_IDENTIFIED", value=DvText(val["name"]),
                             extras={k: v for k, v in val.items() if k not in ("_type", "name")})
            node.attributes[key] = [pseudo]
            continue
        if key == "territory" and isinstance(val, dict) and val.get("_type", "CODE_PHRASE") == "CODE_PHRASE" \
                and "code_string" in val:
            term = val.get("terminology_id", {}).get("value", "ISO_3166-1")
            node.attributes[key] = [EhrNode("CODE_PHRASE", value=DvCodedText(val["code_string"], val["code_string"], term))]
            continue
        if _is_node_json(val):
            node.attributes[key] = [node_from_json(val)]
            continue
        if isinstance(val, list) and val and all(_is_node_json(v) for v in val):
            node.attributes[key] = [node_from_json(v) for v in val]
            continue
        if key in DV_ATTRIBUTES and isinstance(val, dict):
            dv = data_value_from_json(val)
            if dv is not None:
                node.attributes[key] = [EhrNode(val["_type"], value=dv)]
                continue
        node.extras[key] = val
    return node


def node_to_json(node: EhrNode) -> dict:
    if node.rm_type == "PARTY_IDENTIFIED" and isinstance(node.value, DvText):
        return {"_type": "PARTY_IDENTIFIED", **node.extras, "name": node.value.value}
    if node.rm_type == "CODE_PHRASE" and isinstance(node.value, DvCodedText):
        return _code_phrase(node.value.terminology, node.value.code)
    if node.rm_type.startswith("DV_") and node.value is not None:
        return data_value_to_json(node.value)
    out: Dict[str, Any] = {"_type": node.rm_type}
    if node.archetype_node_id is not None:
        out["archetype_node_id"] = node.archetype_node_id
    if node.name is not None:
        out["name"] = {"_type": "DV_TEXT", "value": node.name}
    out.update(node.extras)
    if node.value is not None:
        out["value"] = data_value_to_json(node.value)
    for attr, children in node.attributes.items():
        items = [node_to_json(c) for c in children]
        out[attr] = items if (attr in MULTI_ATTRIBUTES or len(items) > 1) else items[0]
    return out


def loads_composition(text) -> EhrNode:
    return node_from_json(jsonio.loads(text))


def dumps_composition(node: EhrNode) -> str:
    return jsonio.dumps(node_to_json(node))
