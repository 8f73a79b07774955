"""Read and write FHIRconnect YAML mapping files.

The parser walks PyYAML's composed node graph rather than the constructed
Python objects so every error can point at a line and column. The schema is
strict: unknown keys are errors, anchors/aliases and multi-document streams
are refused.
"""

from __future__ import annotations

import json
import re
from typing import Dict, List, Optional, Tuple

import yaml
from yaml.nodes import MappingNode, ScalarNode, SequenceNode

from .errors import ParseError
from .model import (
    AnyDocument,
    Cardinality,
    ConditionClause,
    ConditionSide,
    ContextDocument,
    ExtensionDocument,
    GrammarVersion,
    LANGUAGE_TAG,
    MappingDocument,
    MappingHeader,
    MappingKind,
    MappingRule,
    Operator,
)

_GRAMMAR_RE = re.compile(r"^" + LANGUAGE_TAG + r"/v?(\d+\.\d+\.\d+)$")
_NULL_TAG = "tag:yaml.org,2002:null"


class _Reader:
    """Node-walking helpers bound to one source file."""

    def __init__(self, filename: str):
        self.filename = filename
        self.positions: Dict[str, Tuple[int, int]] = {}

    def error(self, kind: str, message: str, node=None, mark=None) -> ParseError:
        mark = mark or (node.start_mark if node is not None else None)
        line = mark.line + 1 if mark is not None else 1
        col = mark.column + 1 if mark is not None else 1
        return ParseError(kind, message, file=self.filename, line=line, column=col)

    def mapping(self, node, where: str, allowed, required=()) -> Dict[str, Tuple[ScalarNode, object]]:
        if not isinstance(node, MappingNode):
            raise self.error("TypeMismatch", f"{where} must be a mapping", node)
        out: Dict[str, Tuple[ScalarNode, object]] = {}
        for key_node, value_node in node.value:
            if not isinstance(key_node, ScalarNode):
                raise self.error("TypeMismatch", f"keys in {where} must be plain scalars", key_node)
            key = key_node.value
            if key in out:
                raise self.error("Syntax", f"duplicate key {key!r} in {where}", key_node)
            if key not in allowed:
                raise self.error("UnknownKey", f"unknown key {key!r} in {where}", key_node)
            out[key] = (key_node, value_node)
        for key in required:
            if key not in out:
                raise self.error("MissingKey", f"missing required key {key!r} in {where}", node)
        return out

    def scalar(self, entry, where: str, *, optional=False) -> Optional[str]:
        key_node, node = entry
        self.positions[where] = (key_node.start_mark.line + 1, key_node.start_mark.column + 1)
        if isinstance(node, ScalarNode) and node.tag == _NULL_TAG and node.style is None:
            if optional:
                return None
            raise self.error("MissingKey", f"{where} must have a value", node)
        if not isinstance(node, ScalarNode):
            raise self.error("TypeMismatch", f"{where} must be a scalar", node)
        return node.value

    def string_list(self, entry, where: str) -> Tuple[str, ...]:
        _, node = entry
        if isinstance(node, ScalarNode) and node.tag == _NULL_TAG and node.style is None:
            return ()
        if not isinstance(node, SequenceNode):
            raise self.error("TypeMismatch", f"{where} must be a list", node)
        items = []
        for item in node.value:
            if not isinstance(item, ScalarNode):
                raise self.error("TypeMismatch", f"items of {where} must be scalars", item)
            items.append(item.value)
        return tuple(items)

    def sequence(self, entry, where: str) -> List[object]:
        _, node = entry
        if isinstance(node, ScalarNode) and node.tag == _NULL_TAG and node.style is None:
            raise self.error("TypeMismatch", f"{where} must be a list (use [] for none)", node)
        if not isinstance(node, SequenceNode):
            raise self.error("TypeMismatch", f"{where} must be a list", node)
        return node.value


def _compose(text: str, r: _Reader):
    try:
        docs = 0
        for event in yaml.parse(text, Loader=yaml.SafeLoader):
            if isinstance(event, yaml.AliasEvent):
                raise r.error("Syntax", "YAML aliases are not allowed in mapping files", mark=event.start_mark)
            if getattr(event, "anchor", None):
                raise r.error("Syntax", "YAML anchors are not allowed in mapping files", mark=event.start_mark)
            if isinstance(event, yaml.DocumentStartEvent):
                docs += 1
                if docs > 1:
                    raise r.error("Syntax", "only one YAML document per mapping file", mark=event.start_mark)
        return yaml.compose(text, Loader=yaml.SafeLoader)
    except ParseError:
        raise
    except yaml.MarkedYAMLError as exc:
        raise r.error("Syntax", f"{exc.problem or exc.context or 'malformed YAML'}",
                      mark=exc.problem_mark or exc.context_mark) from None
    except yaml.YAMLError as exc:
        raise r.error("Syntax", str(exc)) from None
    except RecursionError:
        raise r.error("Syntax", "document nesting too deep") from None


_RULE_KEYS = {"name", "with", "condition", "followedBy", "slotArchetype", "cardinality"}


def _parse_condition(r: _Reader, node) -> ConditionClause:
    m = r.mapping(node, "condition", {"targetRoot", "targetAttribute", "operator", "criteria"},
                  ("targetRoot", "targetAttribute", "operator"))
    root = r.scalar(m["targetRoot"], "condition.targetRoot")
    try:
        side = ConditionSide(root)
    except ValueError:
        raise r.error("TypeMismatch", f"targetRoot must be $resource or $archetype, got {root!r}",
                      m["targetRoot"][1]) from None
    op_text = r.scalar(m["operator"], "condition.operator")
    try:
        operator = Operator(op_text)
    except ValueError:
        allowed = ", ".join(o.value for o in Operator)
        raise r.error("TypeMismatch", f"operator must be one of {allowed}, got {op_text!r}",
                      m["operator"][1]) from None
    criteria = r.string_list(m["criteria"], "condition.criteria") if "criteria" in m else ()
    return ConditionClause(side, r.scalar(m["targetAttribute"], "condition.targetAttribute"),
                           operator, criteria, line=node.start_mark.line + 1,
                           column=node.start_mark.column + 1)


def _parse_rule(r: _Reader, node, *, in_extension: bool) -> Tuple[Optional[str], MappingRule]:
    allowed = _RULE_KEYS | ({"extension"} if in_extension else set())
    required = ("name", "extension") if in_extension else ("name",)
    m = r.mapping(node, "mapping", allowed, required)
    name = r.scalar(m["name"], "mapping.name")
    fhir_path = openehr_path = ""
    type_hint = None
    if "with" in m:
        w = r.mapping(m["with"][1], f"mapping {name!r} with", {"fhir", "openehr", "type"})
        fhir_path = r.scalar(w["fhir"], "with.fhir") if "fhir" in w else ""
        openehr_path = r.scalar(w["openehr"], "with.openehr") if "openehr" in w else ""
        type_hint = r.scalar(w["type"], "with.type") if "type" in w else None
    condition = _parse_condition(r, m["condition"][1]) if "condition" in m else None
    children: Tuple[MappingRule, ...] = ()
    if "followedBy" in m:
        fb = r.mapping(m["followedBy"][1], f"mapping {name!r} followedBy", {"mappings"}, ("mappings",))
        children = tuple(_parse_rule(r, child, in_extension=False)[1]
                         for child in r.sequence(fb["mappings"], "followedBy.mappings"))
    slot = r.scalar(m["slotArchetype"], "mapping.slotArchetype") if "slotArchetype" in m else None
    cardinality = Cardinality.MANY
    if "cardinality" in m:
        text = r.scalar(m["cardinality"], "mapping.cardinality")
        try:
            cardinality = Cardinality(text)
        except ValueError:
            raise r.error("TypeMismatch", f"cardinality must be one or many, got {text!r}",
                          m["cardinality"][1]) from None
    mode = None
    if in_extension:
        mode = r.scalar(m["extension"], "mapping.extension")
        if mode not in ("add", "overwrite"):
            raise r.error("TypeMismatch", f"extension must be add or overwrite, got {mode!r}",
                          m["extension"][1])
    rule = MappingRule(name=name, fhir_path=fhir_path, openehr_path=openehr_path, type_hint=type_hint,
                       condition=condition, children=children, slot_archetype=slot,
                       cardinality=cardinality, line=node.start_mark.line + 1,
                       column=node.start_mark.column + 1)
    return mode, rule


def parse_mapping_file(data, filename: str = "<string>") -> AnyDocument:
    """Parse one mapping file (bytes or str) into a model, extension or context document."""
    r = _Reader(filename)
    if isinstance(data, (bytes, bytearray)):
        try:
            text = bytes(data).decode("utf-8")
        except UnicodeDecodeError as exc:
            prefix = bytes(data[: exc.start])
            line = prefix.count(b"\n") + 1
            col = exc.start - (prefix.rfind(b"\n") + 1) + 1
            raise ParseError("Syntax", f"invalid UTF-8 at byte {exc.start}", file=filename,
                             line=line, column=col) from None
    else:
        text = data
    root = _compose(text, r)
    if root is None:
        raise r.error("BadGrammarVersion", "empty file: missing grammar line")
    if not isinstance(root, MappingNode):
        raise r.error("TypeMismatch", "a mapping file must be a YAML mapping", root)

    top_keys = {"grammar", "type", "metadata", "spec", "mappings", "context"}
    # check grammar and type before strict key checks so those errors take priority
    first_pass = {k.value: (k, v) for k, v in root.value if isinstance(k, ScalarNode)}
    if "grammar" not in first_pass:
        raise r.error("BadGrammarVersion", "missing 'grammar: FHIRConnect/<version>' line", root)
    grammar_text = r.scalar(first_pass["grammar"], "grammar")
    gm = _GRAMMAR_RE.match(grammar_text)
    if not gm:
        raise r.error("BadGrammarVersion", f"grammar must be {LANGUAGE_TAG}/<MAJOR.MINOR.PATCH>, got {grammar_text!r}",
                      first_pass["grammar"][1])
    grammar = GrammarVersion(LANGUAGE_TAG, gm.group(1))
    if grammar.major != 1:
        raise r.error("BadGrammarVersion", f"only grammar major version 1 is supported, got {grammar}",
                      first_pass["grammar"][1])
    if "type" not in first_pass:
        raise r.error("MissingKey", "missing required key 'type'", root)
    type_text = r.scalar(first_pass["type"], "type")
    try:
        kind = MappingKind(type_text)
    except ValueError:
        raise r.error("BadKind", f"type must be model, extension or context, got {type_text!r}",
                      first_pass["type"][1]) from None

    if kind is MappingKind.CONTEXT:
        required = ("grammar", "type", "metadata", "spec", "context")
        allowed = top_keys - {"mappings"}
    else:
        required = ("grammar", "type", "metadata", "spec", "mappings")
        allowed = top_keys - {"context"}
    top = r.mapping(root, "file", allowed, required)

    meta = r.mapping(top["metadata"][1], "metadata", {"name", "version"}, ("name", "version"))
    name = r.scalar(meta["name"], "metadata.name")
    version = r.scalar(meta["version"], "metadata.version")

    spec_allowed = {"system", "version"}
    spec_required: Tuple[str, ...] = ("system", "version")
    if kind is not MappingKind.CONTEXT:
        spec_allowed |= {"openEhrConfig", "fhirConfig"}
        spec_required += ("openEhrConfig", "fhirConfig")
    if kind is MappingKind.EXTENSION:
        spec_allowed.add("extends")
        spec_required += ("extends",)
    spec = r.mapping(top["spec"][1], "spec", spec_allowed, spec_required)
    fhir_system = r.scalar(spec["system"], "spec.system")
    fhir_version = r.scalar(spec["version"], "spec.version")

    if kind is MappingKind.CONTEXT:
        ctx = r.mapping(top["context"][1], "context",
                        {"profiles", "template", "start", "archetypes", "extensions"},
                        ("template", "start"))
        tmpl = r.mapping(ctx["template"][1], "context.template", {"id"}, ("id",))
        template_id = r.scalar(tmpl["id"], "context.template.id")
        header = MappingHeader(grammar, kind, name, version, fhir_system, fhir_version,
                               template_id=template_id)
        return ContextDocument(
            header=header,
            template_id=template_id,
            start_archetype=r.scalar(ctx["start"], "context.start"),
            profile_urls=r.string_list(ctx["profiles"], "context.profiles") if "profiles" in ctx else (),
            imported_model_mappings=r.string_list(ctx["archetypes"], "context.archetypes") if "archetypes" in ctx else (),
            imported_extension_mappings=r.string_list(ctx["extensions"], "context.extensions") if "extensions" in ctx else (),
            filename=filename,
            positions=dict(r.positions),
        )

    oe = r.mapping(spec["openEhrConfig"][1], "spec.openEhrConfig", {"archetype", "revision"},
                   ("archetype", "revision"))
    fc = r.mapping(spec["fhirConfig"][1], "spec.fhirConfig", {"structureDefinition"},
                   ("structureDefinition",))
    header = MappingHeader(
        grammar, kind, name, version, fhir_system, fhir_version,
        archetype_id=r.scalar(oe["archetype"], "spec.openEhrConfig.archetype"),
        archetype_revision=r.scalar(oe["revision"], "spec.openEhrConfig.revision"),
        structure_definition_url=r.scalar(fc["structureDefinition"], "spec.fhirConfig.structureDefinition"),
    )
    in_ext = kind is MappingKind.EXTENSION
    parsed = [_parse_rule(r, n, in_extension=in_ext) for n in r.sequence(top["mappings"], "mappings")]
    if not in_ext:
        return MappingDocument(header, tuple(rule for _, rule in parsed), filename=filename,
                               positions=dict(r.positions))
    order = tuple((mode == "overwrite", rule) for mode, rule in parsed)
    return ExtensionDocument(
        header=header,
        extends=r.scalar(spec["extends"], "spec.extends"),
        appended_rules=tuple(rule for over, rule in order if not over),
        overridden_rules=tuple(rule for over, rule in order if over),
        order=order,
        filename=filename,
        positions=dict(r.positions),
    )


# ---------------------------------------------------------------------------
# canonical serialization


def _q(text: str) -> str:
    # JSON string escapes are a subset of YAML double-quoted escapes
    return json.dumps(text, ensure_ascii=False)


def _emit_rule(rule: MappingRule, indent: int, mode: Optional[str], lines: List[str]) -> None:
    pad = " " * indent
    lines.append(f"{pad}- name: {_q(rule.name)}")
    inner = pad + "  "
    if mode is not None:
        lines.append(f"{inner}extension: {mode}")
    if rule.fhir_path or rule.openehr_path or rule.type_hint:
        lines.append(f"{inner}with:")
        if rule.fhir_path:
            lines.append(f"{inner}  fhir: {_q(rule.fhir_path)}")
        if rule.openehr_path:
            lines.append(f"{inner}  openehr: {_q(rule.openehr_path)}")
        if rule.type_hint:
            lines.append(f"{inner}  type: {_q(rule.type_hint)}")
    if rule.condition is not None:
        c = rule.condition
        lines.append(f"{inner}condition:")
        lines.append(f"{inner}  targetRoot: {_q(c.side.value)}")
        lines.append(f"{inner}  targetAttribute: {_q(c.target_path)}")
        lines.append(f"{inner}  operator: {c.operator.value}")
        if c.operands:
            lines.append(f"{inner}  criteria: [{', '.join(_q(o) for o in c.operands)}]")
    if rule.slot_archetype:
        lines.append(f"{inner}slotArchetype: {_q(rule.slot_archetype)}")
    if rule.cardinality is not Cardinality.MANY:
        lines.append(f"{inner}cardinality: {rule.cardinality.value}")
    if rule.children:
        lines.append(f"{inner}followedBy:")
        lines.append(f"{inner}  mappings:")
        for child in rule.children:
            _emit_rule(child, indent + 6, None, lines)


def serialize_mapping(doc: AnyDocument) -> bytes:
    """Emit canonical YAML: fixed key order, two-space indent, quoted strings.

    Comments from the source are not carried over.
    """
    h = doc.header
    lines = [f"grammar: {h.grammar}", f"type: {h.kind.value}", "metadata:",
             f"  name: {_q(h.name)}", f"  version: {_q(h.version)}", "spec:",
             f"  system: {_q(h.fhir_system)}", f"  version: {_q(h.fhir_version)}"]
    if isinstance(doc, ContextDocument):
        lines.append("context:")
        if doc.profile_urls:
            lines.append("  profiles:")
            lines.extend(f"    - {_q(u)}" for u in doc.profile_urls)
        lines.append("  template:")
        lines.append(f"    id: {_q(doc.template_id)}")
        lines.append(f"  start: {_q(doc.start_archetype)}")
        for key, names in (("archetypes", doc.imported_model_mappings),
                           ("extensions", doc.imported_extension_mappings)):
            if names:
                lines.append(f"  {key}:")
                lines.extend(f"    - {_q(n)}" for n in names)
        return ("\n".join(lines) + "\n").encode("utf-8")

    if isinstance(doc, ExtensionDocument):
        lines.append(f"  extends: {_q(doc.extends)}")
    lines += ["  openEhrConfig:", f"    archetype: {_q(h.archetype_id or '')}",
              f"    revision: {_q(h.archetype_revision or '')}", "  fhirConfig:",
              f"    structureDefinition: {_q(h.structure_definition_url or '')}"]
    if isinstance(doc, ExtensionDocument):
        order = doc.order or tuple((True, r) for r in doc.overridden_rules) + tuple(
            (False, r) for r in doc.appended_rules)
        entries = [("overwrite" if over else "add", rule) for over, rule in order]
    else:
        entries = [(None, rule) for rule in doc.rules]
    if not entries:
        lines.append("mappings: []")
    else:
        lines.append("mappings:")
        for mode, rule in entries:
            _emit_rule(rule, 2, mode, lines)
    return ("\n".join(lines) + "\n").encode("utf-8")


def load_mapping_file(path) -> AnyDocument:
    with open(path, "rb") as fh:
        return parse_mapping_file(fh.read(), str(path))
