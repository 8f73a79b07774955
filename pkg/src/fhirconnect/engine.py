"""Runs a resolved context over documents, in either direction."""

from __future__ import annotations

import copy
import enum
import functools
import uuid
from dataclasses import dataclass, field
from decimal import Decimal
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

from . import fhir, openehr
from .bridge import Bridge, DEFAULT_OPENEHR_FOR
from .errors import (
    ConversionError,
    DocumentError,
    LossyWithoutConsent,
    MissingTemplate,
    OccurrenceError,
    PathAmbiguous,
    RepositoryError,
    TypeClash,
    UnresolvedContext,
    AmbiguousDispatch,
)
from .fhir import FhirDocument, Reference, TYPE_BY_NAME
from .model import Cardinality, ConditionClause, ConditionSide, MappingRule, Operator, archetype_rm_class
from .openehr import EhrNode
from .repository import MappingRepository, ResolvedMapping, ResolvedMappingSet, resolve_context

BASE_PROFILE_PREFIX = "http://hl7.org/fhir/StructureDefinition/"


class Direction(enum.Enum):
    OPENEHR_TO_FHIR = "openehr-to-fhir"
    FHIR_TO_OPENEHR = "fhir-to-openehr"


class WarningKind(str, enum.Enum):
    UNMAPPED_FIELD = "UnmappedField"
    LOSSY_CONVERSION = "LossyConversion"
    CONDITION_SKIPPED = "ConditionSkipped"


@dataclass(frozen=True)
class TransformWarning:
    kind: WarningKind
    rule_name: Optional[str]
    detail: str
    path: Optional[str] = None

    def to_json(self) -> dict:
        out = {"kind": self.kind.value, "rule_name": self.rule_name, "detail": self.detail}
        if self.path is not None:
            out["path"] = self.path
        return out


@dataclass(frozen=True)
class TraceEntry:
    rule_name: str
    source_path: str
    target_path: str
    occurrence: int

    def to_json(self) -> dict:
        return {"rule_name": self.rule_name, "source_path": self.source_path,
                "target_path": self.target_path, "occurrence": self.occurrence}


@dataclass
class TransformRequest:
    direction: Direction
    context_name: str
    input: Any  # EhrNode, or FhirDocument / list of FhirDocument (a Bundle is unpacked)
    strict_lossy: bool = False
    bundle_output: bool = False
    trace: bool = False
    terminologies: Optional[Mapping[str, str]] = None
    terminology_passthrough: bool = False
    # seed for fullUrl allocation; derived from the context and input when absent
    namespace: Optional[str] = None


@dataclass
class TransformResult:
    output: List[Union[FhirDocument, EhrNode]]
    warnings: List[TransformWarning] = field(default_factory=list)
    trace: Optional[List[TraceEntry]] = None


_ehr_path = functools.lru_cache(maxsize=4096)(openehr.parse_ehr_path)
_fhir_path = functools.lru_cache(maxsize=4096)(fhir.parse_fhir_path)


# ---------------------------------------------------------------------------
# conditions


def _fhir_canonical(m: fhir.Match) -> Optional[str]:
    v = m.value
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (str, int, Decimal)):
        return str(v)
    try:
        return fhir.value_from_json(v, m.value_type).canonical()
    except DocumentError:
        return None


def evaluate_condition(clause: ConditionClause, source: Union[EhrNode, FhirDocument, dict]) -> bool:
    """Test ``clause`` against ``source`` (the clause path is relative to it).

    Exists/NotExists count matches; the comparing operators look at the first
    matched value's canonical string.
    """
    if isinstance(source, EhrNode):
        path = _ehr_path(clause.target_path)
        nodes = openehr.find_nodes(source, path)
        count = len(nodes)
        firsts = [n.value.canonical() for n in nodes if n.value is not None][:1]
    else:
        root = source.root if isinstance(source, FhirDocument) else source
        matches = fhir.select(root, _fhir_path(clause.target_path))
        count = len(matches)
        firsts = [c for c in (_fhir_canonical(m) for m in matches[:1]) if c is not None]
    op = clause.operator
    if op is Operator.EXISTS:
        return count > 0
    if op is Operator.NOT_EXISTS:
        return count == 0
    first = firsts[0] if firsts else None
    if op is Operator.EQUALS:
        return first is not None and first == clause.operands[0]
    if op is Operator.NOT_EQUALS:
        return first is None or first != clause.operands[0]
    return first is not None and first in clause.operands


# ---------------------------------------------------------------------------
# references and bundles


def _namespace(seed: Union[str, uuid.UUID]) -> uuid.UUID:
    return seed if isinstance(seed, uuid.UUID) else uuid.uuid5(uuid.NAMESPACE_URL, f"fhirconnect:{seed}")


def allocate_references(resources: Sequence[FhirDocument], links: Sequence[Tuple[int, str, int]] = (),
                        namespace: Union[str, uuid.UUID] = "run",
                        warnings: Optional[List[str]] = None) -> List[FhirDocument]:
    """Give each resource a ``urn:uuid`` fullUrl and write the requested references.

    Ids are UUIDv5 over ``namespace`` and the resource index, so the same
    namespace always yields the same ids. Inputs are not modified.
    """
    ns = _namespace(namespace)
    out = [FhirDocument(r.resource_type, copy.deepcopy(r.root), f"urn:uuid:{uuid.uuid5(ns, str(i))}")
           for i, r in enumerate(resources)]
    for src, path, dst in links:
        if not (0 <= src < len(out) and 0 <= dst < len(out)):
            raise IndexError(f"link {src} -> {dst} is out of range for {len(out)} resources")
        if src == dst and warnings is not None:
            warnings.append(f"resource {src} references itself at {path}")
        parsed = _fhir_path(path)
        ref = Reference(out[dst].full_url)
        n = len(fhir.select(out[src].root, parsed))
        try:
            fhir.set_in_place(out[src].root, parsed, ref, n)
        except OccurrenceError:
            fhir.set_in_place(out[src].root, parsed, ref, 0)
    return out


def make_bundle(resources: Sequence[FhirDocument]) -> FhirDocument:
    """Collection Bundle; resources without a fullUrl get none."""
    entries = []
    for r in resources:
        entry: Dict[str, Any] = {}
        if r.full_url:
            entry["fullUrl"] = r.full_url
        entry["resource"] = r.root
        entries.append(entry)
    return FhirDocument("Bundle", {"resourceType": "Bundle", "type": "collection", "entry": entries})


def unpack_bundle(doc: FhirDocument) -> List[FhirDocument]:
    if doc.resource_type != "Bundle":
        return [doc]
    out = []
    for entry in doc.root.get("entry", []):
        res = FhirDocument.from_json(entry.get("resource"))
        res.full_url = entry.get("fullUrl")
        out.append(res)
    return out


# ---------------------------------------------------------------------------
# execution


def _steps(path) -> tuple:
    return path.segments if isinstance(path, openehr.EhrPath) else path.steps


def _label(root_label: str, anchor_label: str, path, sep: str) -> str:
    """Human-readable absolute form of ``path`` for traces and warnings."""
    base = root_label if path.absolute else anchor_label
    rel = str(type(path)(_steps(path), False))
    return f"{base}{sep}{rel}" if rel else base


class _Run:
    def __init__(self, resolved: ResolvedMappingSet, req: TransformRequest):
        self.resolved = resolved
        self.req = req
        self.strict = req.strict_lossy
        self.bridge = Bridge(req.terminologies, passthrough=req.terminology_passthrough, strict=req.strict_lossy)
        self.warnings: List[TransformWarning] = []
        self.trace: Optional[List[TraceEntry]] = [] if req.trace else None
        self.consumed: set = set()

    def warn(self, kind: WarningKind, rule: Optional[MappingRule], detail: str, path: Optional[str] = None):
        self.warnings.append(TransformWarning(kind, rule.name if rule is not None else None, detail, path))

    def lossy(self, rule: MappingRule, detail: str, path: Optional[str] = None):
        if self.strict:
            raise LossyWithoutConsent(f"rule {rule.name!r}: {detail}")
        self.warn(WarningKind.LOSSY_CONVERSION, rule, detail, path)

    def record(self, rule: MappingRule, source: str, target: str, k: int):
        if self.trace is not None:
            self.trace.append(TraceEntry(rule.name, source, target, k))

    def condition_holds(self, rule: MappingRule, forward: bool, ehr_root, ehr_anchor, fhir_root, fhir_anchor) -> bool:
        clause = rule.condition
        if clause is None:
            return True
        if forward != (clause.side is ConditionSide.OPENEHR):
            return True  # reads the target side, which is still being built
        if forward:
            base = ehr_root if _ehr_path(clause.target_path).absolute else ehr_anchor
        else:
            base = fhir_root if _fhir_path(clause.target_path).absolute else fhir_anchor
        if evaluate_condition(clause, base):
            return True
        self.warn(WarningKind.CONDITION_SKIPPED, rule,
                  f"{clause.side.value}{'/' if forward else '.'}{clause.target_path} {clause.operator.value} "
                  f"{list(clause.operands)} is false")
        return False

    # -- openEHR -> FHIR ---------------------------------------------------

    def forward(self, mapping: ResolvedMapping, rules, ehr_root: EhrNode, fhir_root: dict,
                ehr_anchor: EhrNode, fhir_anchor: dict, labels: Tuple[str, str, str, str]):
        er_label, ea_label, fr_label, fa_label = labels
        for rule in rules:
            if not self.condition_holds(rule, True, ehr_root, ehr_anchor, fhir_root, fhir_anchor):
                continue
            epath = _ehr_path(rule.openehr_path) if rule.openehr_path else None
            fpath = _fhir_path(rule.fhir_path) if rule.fhir_path else None
            ebase = ehr_root if epath is None or epath.absolute else ehr_anchor
            fbase = fhir_root if fpath is None or fpath.absolute else fhir_anchor
            elabel = _label(er_label, ea_label, epath, "/") if epath else ea_label
            flabel = _label(fr_label, fa_label, fpath, ".") if fpath else fa_label

            if rule.slot_archetype:
                nodes = openehr.find_nodes(ebase, epath) if epath else [
                    n for n in openehr.iter_nodes(ebase) if n is not ebase]
                nodes = [n for n in nodes if n.archetype_node_id == rule.slot_archetype]
                self._fwd_group(mapping, rule, nodes, fbase, fpath, elabel, flabel,
                                lambda node, obj, lab: self.forward(
                                    mapping, self.resolved.slot_target(rule.slot_archetype).rules,
                                    node, obj, node, obj, (lab[0], lab[0], lab[1], lab[1])))
                continue
            if rule.children:
                nodes = openehr.find_nodes(ebase, epath) if epath else [ebase]
                self._fwd_group(mapping, rule, nodes, fbase, fpath, elabel, flabel,
                                lambda node, obj, lab: self.forward(
                                    mapping, rule.children, ehr_root, fhir_root, node, obj,
                                    (er_label, lab[0], fr_label, lab[1])))
                continue

            values = openehr.get_values(ebase, epath)
            if rule.cardinality is Cardinality.ONE:
                values = values[:1]
            if not values:
                self.warn(WarningKind.UNMAPPED_FIELD, rule, f"no value at {elabel}", elabel)
                continue
            target = TYPE_BY_NAME.get(rule.type_hint) if rule.type_hint else None
            for k, (node, dv) in enumerate(values):
                try:
                    fv = self.bridge.to_fhir(dv, target)
                except ConversionError as exc:
                    if self.strict:
                        raise
                    self.warn(WarningKind.LOSSY_CONVERSION, rule, f"{elabel}: {exc.message}", elabel)
                    continue
                try:
                    fhir.set_in_place(fbase, fpath, fv, k)
                except (OccurrenceError, TypeClash, PathAmbiguous) as exc:
                    self.lossy(rule, f"value from {elabel} not written to {flabel}: {exc.message}", elabel)
                    continue
                self.consumed.add(id(node))
                self.record(rule, elabel, flabel, k)

    def _fwd_group(self, mapping, rule, nodes, fbase, fpath, elabel, flabel, body):
        if rule.cardinality is Cardinality.ONE:
            nodes = nodes[:1]
        if not nodes:
            self.warn(WarningKind.UNMAPPED_FIELD, rule, f"no node at {elabel}", elabel)
            return
        for k, node in enumerate(nodes):
            if fpath is None:
                obj = fbase
            else:
                try:
                    obj = fhir.write(fbase, fpath, {}, k)
                except (OccurrenceError, TypeClash, PathAmbiguous) as exc:
                    self.lossy(rule, f"cannot place {elabel} at {flabel}: {exc.message}", elabel)
                    continue
                if not isinstance(obj, dict):
                    self.lossy(rule, f"{flabel} is not an object", elabel)
                    continue
            suffix = f"#{k}" if len(nodes) > 1 else ""
            body(node, obj, (elabel + suffix, flabel + (f"[{k}]" if suffix else "")))

    # -- FHIR -> openEHR ---------------------------------------------------

    def backward(self, mapping: ResolvedMapping, rules, fhir_root: dict, ehr_root: EhrNode,
                 fhir_anchor: dict, ehr_anchor: EhrNode, labels: Tuple[str, str, str, str]):
        fr_label, fa_label, er_label, ea_label = labels
        for rule in rules:
            if not self.condition_holds(rule, False, ehr_root, ehr_anchor, fhir_root, fhir_anchor):
                continue
            epath = _ehr_path(rule.openehr_path) if rule.openehr_path else None
            fpath = _fhir_path(rule.fhir_path) if rule.fhir_path else None
            ebase = ehr_root if epath is None or epath.absolute else ehr_anchor
            fbase = fhir_root if fpath is None or fpath.absolute else fhir_anchor
            elabel = _label(er_label, ea_label, epath, "/") if epath else ea_label
            flabel = _label(fr_label, fa_label, fpath, ".") if fpath else fa_label

            if rule.slot_archetype or rule.children:
                if rule.slot_archetype and epath is None:
                    self.warn(WarningKind.UNMAPPED_FIELD, rule,
                              f"slot {rule.slot_archetype} has no openEHR path to write back to", flabel)
                    continue
                objs = [m.value for m in fhir.select(fbase, fpath)] if fpath else [fbase]
                objs = [o for o in objs if isinstance(o, dict)]
                if rule.cardinality is Cardinality.ONE:
                    objs = objs[:1]
                if not objs:
                    self.warn(WarningKind.UNMAPPED_FIELD, rule, f"no element at {flabel}", flabel)
                    continue
                for k, obj in enumerate(objs):
                    if epath is None:
                        node = ebase
                    else:
                        try:
                            node = openehr.ensure_node(ebase, epath, k)
                        except (OccurrenceError, TypeClash, PathAmbiguous) as exc:
                            self.lossy(rule, f"cannot place {flabel} at {elabel}: {exc.message}", flabel)
                            continue
                    suffix = f"#{k}" if len(objs) > 1 else ""
                    lab = (flabel + (f"[{k}]" if suffix else ""), elabel + suffix)
                    if rule.slot_archetype:
                        target = self.resolved.slot_target(rule.slot_archetype)
                        self.backward(mapping, target.rules, obj, node, obj, node, (lab[0], lab[0], lab[1], lab[1]))
                    else:
                        self.backward(mapping, rule.children, fhir_root, ehr_root, obj, node,
                                      (fr_label, lab[0], er_label, lab[1]))
                continue

            matches = fhir.select(fbase, fpath)
            if rule.cardinality is Cardinality.ONE:
                matches = matches[:1]
            if not matches:
                self.warn(WarningKind.UNMAPPED_FIELD, rule, f"no value at {flabel}", flabel)
                continue
            hint = TYPE_BY_NAME.get(rule.type_hint) if rule.type_hint else None
            for k, m in enumerate(matches):
                try:
                    fv = fhir.value_from_json(m.value, hint or m.value_type)
                    notes: List[str] = []
                    dv = self.bridge.to_openehr(fv, DEFAULT_OPENEHR_FOR.get(type(fv)), notes)
                except (ConversionError, DocumentError) as exc:
                    if self.strict:
                        raise
                    self.warn(WarningKind.LOSSY_CONVERSION, rule, f"{flabel}: {exc.message}", flabel)
                    continue
                for note in notes:
                    self.warn(WarningKind.LOSSY_CONVERSION, rule, f"{flabel}: {note}", flabel)
                try:
                    openehr.set_in_place(ebase, epath, dv, k)
                except (OccurrenceError, TypeClash, PathAmbiguous) as exc:
                    self.lossy(rule, f"value from {flabel} not written to {elabel}: {exc.message}", flabel)
                    continue
                _consume(self.consumed, m)
                self.record(rule, flabel, elabel, k)


def _consume(consumed: set, m: fhir.Match) -> None:
    consumed.add((id(m.parent), m.key))

    def walk(obj):
        if isinstance(obj, dict):
            for key, val in obj.items():
                consumed.add((id(obj), key))
                walk(val)
        elif isinstance(obj, list):
            for i, val in enumerate(obj):
                consumed.add((id(obj), i))
                walk(val)

    walk(m.value)


def _fhir_leaves(root: dict):
    """(container id, key, path label) for every primitive in a resource."""

    def walk(obj, label, in_extension):
        if isinstance(obj, dict):
            for key in sorted(obj):
                if label == "" and key in ("resourceType", "id", "meta"):
                    continue
                if in_extension and key == "url":
                    continue
                val = obj[key]
                sub = f"{label}.{key}" if label else key
                if isinstance(val, (dict, list)):
                    yield from walk(val, sub, key in ("extension", "modifierExtension"))
                else:
                    yield id(obj), key, sub
        elif isinstance(obj, list):
            for i, val in enumerate(obj):
                sub = f"{label}[{i}]"
                if isinstance(val, (dict, list)):
                    yield from walk(val, sub, in_extension)
                else:
                    yield id(obj), i, sub

    yield from walk(root, "", False)


def _base_profile(url: str) -> bool:
    return url.startswith(BASE_PROFILE_PREFIX)


def _run_forward(run: _Run, root: EhrNode) -> List[FhirDocument]:
    resolved = run.resolved
    producers: Dict[str, List[ResolvedMapping]] = {}
    for m in resolved.producers:
        producers.setdefault(m.archetype_id, []).append(m)
    covered = set(producers) | set(resolved.slot_archetypes)

    resources: List[FhirDocument] = []
    occurrences: List[EhrNode] = []

    def visit(node: EhrNode, top: bool):
        if node.archetype_node_id in producers:
            occurrences.append(node)
        elif not top and node.is_archetype_root() and node.archetype_node_id not in covered:
            run.warn(WarningKind.UNMAPPED_FIELD, None,
                     f"archetype {node.archetype_node_id} has no mapping in context {resolved.context_name!r}",
                     node.archetype_node_id)
            return
        for _, child in node.children():
            visit(child, False)

    visit(root, True)

    for occ in occurrences:
        for mapping in producers[occ.archetype_node_id]:
            doc = FhirDocument.new(mapping.resource_type)
            if not _base_profile(mapping.profile_url):
                doc.root["meta"] = {"profile": [mapping.profile_url]}
            run.forward(mapping, mapping.rules, occ, doc.root, occ, doc.root,
                        ("$archetype", "$archetype", "$resource", "$resource"))
            fhir.prune_empty(doc.root)
            resources.append(doc)
        _warn_unconsumed(run, occ, set(producers))
    return resources


def _warn_unconsumed(run: _Run, occ: EhrNode, producer_ids: set) -> None:
    def walk(node: EhrNode, prefix: str):
        for attr, child in node.children():
            if child.archetype_node_id in producer_ids and child is not occ:
                continue  # its own resource reports on it
            seg = str(openehr.PathSegment(attr, child.archetype_node_id))
            path = f"{prefix}/{seg}"
            if child.value is not None and id(child) not in run.consumed:
                run.warn(WarningKind.UNMAPPED_FIELD, None,
                         f"{occ.archetype_node_id}: no rule reads {path}", path)
            walk(child, path)

    walk(occ, "$archetype")


def _dispatch(run: _Run, doc: FhirDocument) -> Optional[ResolvedMapping]:
    producers = run.resolved.producers
    profiles = doc.root.get("meta", {}).get("profile", []) if isinstance(doc.root.get("meta"), dict) else []
    by_profile = [m for m in producers if m.profile_url in profiles]
    # an unknown or absent profile falls back to the resource type
    candidates = by_profile or [m for m in producers if m.resource_type == doc.resource_type]
    if len(candidates) > 1:
        names = ", ".join(m.name for m in candidates)
        raise AmbiguousDispatch(f"{doc.resource_type} matches several mappings: {names}")
    return candidates[0] if candidates else None


def _run_backward(run: _Run, docs: List[FhirDocument]) -> List[EhrNode]:
    resolved = run.resolved
    start = resolved.entry_archetype
    composition = None
    if archetype_rm_class(start) == "COMPOSITION":
        composition = EhrNode("COMPOSITION", start, extras={"archetype_details": {
            "_type": "ARCHETYPED",
            "archetype_id": {"_type": "ARCHETYPE_ID", "value": start},
            "template_id": {"_type": "TEMPLATE_ID", "value": resolved.template_id},
            "rm_version": "1.0.4",
        }})
    entries: List[EhrNode] = []
    for index, doc in enumerate(docs):
        mapping = _dispatch(run, doc)
        if mapping is None:
            run.warn(WarningKind.UNMAPPED_FIELD, None,
                     f"resource {index} ({doc.resource_type}) matches no mapping in context {resolved.context_name!r}",
                     f"{doc.resource_type}")
            continue
        if composition is not None and mapping.archetype_id == start:
            node = composition
        else:
            node = EhrNode(archetype_rm_class(mapping.archetype_id) or "CLUSTER", mapping.archetype_id)
            if composition is not None:
                composition.attributes.setdefault("content", []).append(node)
            else:
                entries.append(node)
        run.backward(mapping, mapping.rules, doc.root, node, doc.root, node,
                     ("$resource", "$resource", "$archetype", "$archetype"))
        for key_owner, key, label in _fhir_leaves(doc.root):
            if (key_owner, key) not in run.consumed:
                path = f"$resource.{label}"
                run.warn(WarningKind.UNMAPPED_FIELD, None, f"{doc.resource_type}: no rule reads {path}", path)
    out = [composition] if composition is not None else entries
    for node in out:
        openehr.prune_empty(node)
    return out


def _resolve(repo: Union[MappingRepository, ResolvedMappingSet], context_name: str) -> ResolvedMappingSet:
    if isinstance(repo, ResolvedMappingSet):
        return repo
    try:
        resolved = resolve_context(repo, context_name)
    except RepositoryError as exc:
        raise UnresolvedContext(f"{exc.kind}: {exc.message}", file=exc.file, line=exc.line,
                                column=exc.column) from exc
    if not resolved.is_executable():
        raise UnresolvedContext(f"context {context_name!r} has no mapping that produces output")
    return resolved


def transform(repo: Union[MappingRepository, ResolvedMappingSet], req: TransformRequest) -> TransformResult:
    """Execute ``req`` against the context it names.

    openEHR input is one tree (a composition or a bare entry); FHIR input is a
    resource, a list of resources or a Bundle. Unmapped data and dropped
    detail are reported as warnings; with ``strict_lossy`` lossy steps raise.
    """
    resolved = _resolve(repo, req.context_name)
    run = _Run(resolved, req)
    if req.direction is Direction.OPENEHR_TO_FHIR:
        if not isinstance(req.input, EhrNode):
            raise TypeError("openEHR to FHIR needs an EhrNode as input")
        resources = _run_forward(run, req.input)
        if req.bundle_output:
            seed = req.namespace or f"{resolved.context_name}:{openehr.dumps_composition(req.input)}"
            notes: List[str] = []
            resources = [make_bundle(allocate_references(resources, (), seed, notes))]
        output: List[Any] = resources
    else:
        if not resolved.template_id:
            raise MissingTemplate(f"context {resolved.context_name!r} names no template; "
                                  "FHIR to openEHR needs one")
        docs = req.input if isinstance(req.input, (list, tuple)) else [req.input]
        flat: List[FhirDocument] = []
        for d in docs:
            flat.extend(unpack_bundle(d))
        output = _run_backward(run, flat)
    return TransformResult(output, run.warnings, run.trace)
