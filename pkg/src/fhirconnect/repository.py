"""Mapping library on disk, extension merging and context resolution."""

from __future__ import annotations

import os
from collections import Counter
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Tuple, Union

from .errors import (
    AppendCollision,
    DuplicateMapping,
    ExtensionOrderConflict,
    OverrideTargetMissing,
    ParseError,
    UnknownBase,
    UnknownContext,
    UnknownImport,
    UnresolvedSlot,
    ValidationError,
)
from .model import (
    AnyDocument,
    ContextDocument,
    ExtensionDocument,
    MappingDocument,
    MappingKind,
    MappingRule,
    Provenance,
    resource_type_from_url,
    rule_names,
    validate_document,
)
from .parser import parse_mapping_file

MAPPING_SUFFIXES = (".yml", ".yaml")


@dataclass(frozen=True)
class Problem:
    """One load or validation failure, ready to print as ``file:line:col kind message``."""

    file: str
    line: int
    column: int
    kind: str
    message: str

    def __str__(self) -> str:
        return f"{self.file}:{self.line}:{self.column} {self.kind} {self.message}"


@dataclass
class MappingRepository:
    models: Dict[str, MappingDocument] = field(default_factory=dict)
    extensions: Dict[str, ExtensionDocument] = field(default_factory=dict)
    contexts: Dict[str, ContextDocument] = field(default_factory=dict)
    # several model mappings may share an archetype when they target different resources
    by_archetype: Dict[str, Tuple[str, ...]] = field(default_factory=dict)
    by_profile: Dict[str, Tuple[str, ...]] = field(default_factory=dict)

    def add(self, doc: AnyDocument) -> None:
        """Index one validated document; raises DuplicateMapping on collisions."""
        where = dict(file=doc.filename)
        if isinstance(doc, ContextDocument):
            if doc.name in self.contexts:
                raise DuplicateMapping(
                    f"context {doc.name!r} already defined in {self.contexts[doc.name].filename}", **where)
            self.contexts[doc.name] = doc
            return
        if isinstance(doc, ExtensionDocument):
            if doc.name in self.extensions:
                raise DuplicateMapping(
                    f"extension {doc.name!r} already defined in {self.extensions[doc.name].filename}", **where)
            self.extensions[doc.name] = doc
        else:
            if doc.name in self.models:
                raise DuplicateMapping(
                    f"model {doc.name!r} already defined in {self.models[doc.name].filename}", **where)
            header = doc.header
            for other in self.by_archetype.get(header.archetype_id, ()):
                prev = self.models[other]
                if prev.header.structure_definition_url == header.structure_definition_url:
                    line, col = doc.positions.get("spec.openEhrConfig.archetype", (0, 0))
                    raise DuplicateMapping(
                        f"{header.archetype_id} -> {header.structure_definition_url} is already mapped "
                        f"by {other!r} ({prev.filename})", file=doc.filename, line=line, column=col)
            self.models[doc.name] = doc
            self.by_archetype[header.archetype_id] = self.by_archetype.get(header.archetype_id, ()) + (doc.name,)
        url = doc.header.structure_definition_url
        self.by_profile[url] = self.by_profile.get(url, ()) + (doc.name,)

    def counts(self) -> Tuple[int, int, int]:
        return len(self.models), len(self.extensions), len(self.contexts)


def _mapping_files(path: Union[str, Path]) -> List[Path]:
    root = Path(path)
    if not root.is_dir():
        raise FileNotFoundError(f"mapping directory not found: {root}")
    files = []
    for dirpath, dirnames, filenames in os.walk(root):
        dirnames.sort()
        for name in sorted(filenames):
            if name.endswith(MAPPING_SUFFIXES):
                files.append(Path(dirpath) / name)
    return files


def _load_one(file: Path) -> AnyDocument:
    doc = parse_mapping_file(file.read_bytes(), filename=str(file))
    report = validate_document(doc)
    if not report.is_ok():
        raise ValidationError(report, file=str(file))
    return doc


def load_directory(path: Union[str, Path]) -> MappingRepository:
    """Parse, validate and index every ``.yml``/``.yaml`` file below ``path``.

    Stops at the first bad file. Files are visited in sorted order so the
    first error is the same on every run.
    """
    repo = MappingRepository()
    for file in _mapping_files(path):
        repo.add(_load_one(file))
    return repo


def scan_directory(path: Union[str, Path]) -> Tuple[MappingRepository, List[Problem]]:
    """Like :func:`load_directory` but keeps going and collects every problem."""
    repo = MappingRepository()
    problems: List[Problem] = []
    for file in _mapping_files(path):
        try:
            doc = parse_mapping_file(file.read_bytes(), filename=str(file))
        except ParseError as exc:
            problems.append(Problem(str(file), exc.line or 0, exc.column or 0, exc.kind, exc.message))
            continue
        report = validate_document(doc)
        if not report.is_ok():
            problems.extend(Problem(str(file), v.line, v.column, v.kind, v.message) for v in report.violations)
            continue
        try:
            repo.add(doc)
        except DuplicateMapping as exc:
            problems.append(Problem(str(file), exc.line or 0, exc.column or 0, exc.kind, exc.message))
    return repo, problems


# ---------------------------------------------------------------------------
# extension merge


def _merge(base_rules: Tuple[MappingRule, ...], base_prov: Mapping[str, Provenance],
           ext: ExtensionDocument) -> Tuple[Tuple[MappingRule, ...], Dict[str, Provenance]]:
    rules = list(base_rules)
    prov = dict(base_prov)
    index = {r.name: i for i, r in enumerate(rules)}
    for rule in ext.overridden_rules:
        if rule.name not in index:
            raise OverrideTargetMissing(
                f"{ext.name!r} overrides {rule.name!r}, which {ext.extends!r} does not define",
                file=ext.filename, line=rule.line, column=rule.column)
        rules[index[rule.name]] = rule
        prov[rule.name] = Provenance.FROM_EXTENSION_OVERRIDDEN
    for rule in ext.appended_rules:
        clash = rule_names([rule]) & rule_names(rules)
        if clash:
            raise AppendCollision(
                f"{ext.name!r} adds {', '.join(sorted(clash))}, already defined in {ext.extends!r}",
                file=ext.filename, line=rule.line, column=rule.column)
        rules.append(rule)
        prov[rule.name] = Provenance.FROM_EXTENSION_ADDED
    names = Counter(r.name for top in rules for r in top.walk())
    dupes = sorted(n for n, c in names.items() if c > 1)
    if dupes:
        raise AppendCollision(f"merging {ext.name!r} leaves duplicate rule names: {', '.join(dupes)}",
                              file=ext.filename)
    return tuple(rules), prov


def apply_extension(base: MappingDocument, ext: ExtensionDocument) -> MappingDocument:
    """Return ``base`` with ``ext`` applied; ``base`` itself is left untouched.

    Overrides replace the same-named top-level rule where it stands; added
    rules go after the base rules in the order the extension lists them. The
    header keeps the base's fields except for the StructureDefinition URL,
    which becomes the extension's profile.
    """
    if base.kind is not MappingKind.MODEL:
        raise UnknownBase(f"{base.name!r} is not a model mapping", file=base.filename)
    if ext.extends != base.name:
        raise UnknownBase(f"{ext.name!r} extends {ext.extends!r}, not {base.name!r}", file=ext.filename)
    rules, _ = _merge(base.rules, {}, ext)
    header = replace(base.header, structure_definition_url=ext.header.structure_definition_url)
    return MappingDocument(header, rules, filename=base.filename, positions=base.positions)


# ---------------------------------------------------------------------------
# context resolution


@dataclass(frozen=True)
class ResolvedMapping:
    """One model mapping with its imported extensions applied."""

    name: str
    archetype_id: str
    resource_type: str
    profile_url: str
    rules: Tuple[MappingRule, ...]
    provenance: Mapping[str, Provenance]
    extensions: Tuple[str, ...] = ()


@dataclass(frozen=True)
class ResolvedMappingSet:
    context_name: str
    template_id: str
    entry_archetype: str
    per_archetype: Mapping[str, Tuple[ResolvedMapping, ...]]
    # archetype ids reached only through slotArchetype delegation
    slot_archetypes: frozenset = frozenset()
    diagnostics: Tuple[str, ...] = ()

    @property
    def provenance(self) -> Dict[Tuple[str, str], Provenance]:
        """(mapping name, rule name) -> where the rule came from."""
        return {(m.name, rule): p for ms in self.per_archetype.values() for m in ms
                for rule, p in m.provenance.items()}

    @property
    def mappings(self) -> Tuple[ResolvedMapping, ...]:
        return tuple(m for ms in self.per_archetype.values() for m in ms)

    @property
    def producers(self) -> Tuple[ResolvedMapping, ...]:
        """Mappings that yield a resource per archetype occurrence."""
        return tuple(m for m in self.mappings if m.archetype_id not in self.slot_archetypes)

    def slot_target(self, archetype_id: str) -> ResolvedMapping:
        return self.per_archetype[archetype_id][0]

    def is_executable(self) -> bool:
        return bool(self.producers)


def _slot_ids(rules) -> List[str]:
    return [r.slot_archetype for top in rules for r in top.walk() if r.slot_archetype]


def resolve_context(repo: MappingRepository, context_name: str) -> ResolvedMappingSet:
    """Flatten a context into per-archetype rule lists.

    Imported extensions are applied to their base in import order. Slot
    targets are followed transitively; a slot archetype with no imported
    mapping falls back to the library when exactly one model covers it.
    """
    ctx = repo.contexts.get(context_name)
    if ctx is None:
        raise UnknownContext(f"no context mapping named {context_name!r}")
    where = dict(file=ctx.filename)
    diagnostics: List[str] = []

    models: Dict[str, MappingDocument] = {}
    for name in ctx.imported_model_mappings:
        if name not in repo.models:
            raise UnknownImport(f"context {ctx.name!r} imports unknown model mapping {name!r}", **where)
        models[name] = repo.models[name]
    exts: Dict[str, List[ExtensionDocument]] = {}
    for name in ctx.imported_extension_mappings:
        if name not in repo.extensions:
            raise UnknownImport(f"context {ctx.name!r} imports unknown extension mapping {name!r}", **where)
        ext = repo.extensions[name]
        exts.setdefault(ext.extends, []).append(ext)

    resolved: Dict[str, ResolvedMapping] = {}

    def build(doc: MappingDocument) -> ResolvedMapping:
        chain = exts.get(doc.name, [])
        seen: Dict[str, ExtensionDocument] = {}
        for ext in chain:
            for rule in ext.overridden_rules:
                if rule.name in seen:
                    raise ExtensionOrderConflict(
                        f"{seen[rule.name].name!r} ({seen[rule.name].filename}) and {ext.name!r} ({ext.filename}) "
                        f"both override {rule.name!r} of {doc.name!r}", **where)
                seen[rule.name] = ext
        rules = doc.rules
        prov = {r.name: Provenance.FROM_MODEL for r in rules}
        url = doc.header.structure_definition_url
        for ext in chain:
            rules, prov = _merge(rules, prov, ext)
            url = ext.header.structure_definition_url
        return ResolvedMapping(doc.name, doc.header.archetype_id,
                               resource_type_from_url(doc.header.structure_definition_url), url,
                               rules, prov, tuple(e.name for e in chain))

    for name, doc in models.items():
        resolved[name] = build(doc)

    slot_archetypes = set()
    queue = [a for m in resolved.values() for a in _slot_ids(m.rules)]
    while queue:
        arch = queue.pop(0)
        if arch in slot_archetypes:
            continue
        slot_archetypes.add(arch)
        have = [m for m in resolved.values() if m.archetype_id == arch]
        if len(have) > 1:
            raise UnresolvedSlot(arch, f"slot {arch} is ambiguous: {', '.join(m.name for m in have)}", **where)
        if not have:
            candidates = repo.by_archetype.get(arch, ())
            if len(candidates) != 1:
                why = "no model mapping" if not candidates else f"{len(candidates)} model mappings"
                raise UnresolvedSlot(arch, f"slot {arch}: {why} in the library", **where)
            doc = repo.models[candidates[0]]
            diagnostics.append(f"slot {arch} resolved from the library via {doc.name!r} (not imported)")
            resolved[doc.name] = build(doc)
            have = [resolved[doc.name]]
        queue.extend(_slot_ids(have[0].rules))

    for base in exts:
        if base not in resolved:
            names = ", ".join(e.name for e in exts[base])
            raise UnknownImport(f"extension {names} extends {base!r}, which context {ctx.name!r} does not import",
                                **where)

    for m in resolved.values():
        for top in m.rules:
            for r in top.walk():
                if r.type_hint == "Reference":
                    diagnostics.append(f"{m.name}.{r.name} carries a Reference; other contexts are not followed")
    if not resolved:
        diagnostics.append(f"context {ctx.name!r} imports no mappings; nothing to execute")

    per_archetype: Dict[str, Tuple[ResolvedMapping, ...]] = {}
    for m in resolved.values():
        per_archetype[m.archetype_id] = per_archetype.get(m.archetype_id, ()) + (m,)
    return ResolvedMappingSet(ctx.name, ctx.template_id, ctx.start_archetype, per_archetype,
                              frozenset(slot_archetypes), tuple(diagnostics))


__all__ = [
    "MappingRepository", "Problem", "ResolvedMapping", "ResolvedMappingSet",
    "apply_extension", "load_directory", "resolve_context", "scan_directory",
]
