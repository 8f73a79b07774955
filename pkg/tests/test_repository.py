import dataclasses
import random
import shutil

import pytest
from hypothesis import given, settings, strategies as st

from fhirconnect.errors import (
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
from fhirconnect.model import (
    ContextDocument,
    ExtensionDocument,
    GrammarVersion,
    MappingHeader,
    MappingKind,
    MappingRule,
    Provenance,
)
from fhirconnect.parser import load_mapping_file
from fhirconnect.repository import (
    MappingRepository,
    apply_extension,
    load_directory,
    resolve_context,
    scan_directory,
)

import helpers as h

CONDITION = "http://hl7.org/fhir/StructureDefinition/Condition"


@pytest.fixture
def golden():
    return load_mapping_file(h.GOLDEN_MODEL_FILE)


def context(name, models=(), extensions=(), start="openEHR-EHR-COMPOSITION.problem_list.v2"):
    header = MappingHeader(GrammarVersion("FHIRConnect", "1.0.0"), MappingKind.CONTEXT, name, "1.0.0",
                           template_id="T")
    return ContextDocument(header, "T", start, imported_model_mappings=tuple(models),
                           imported_extension_mappings=tuple(extensions))


def extension(name, base, overrides=(), appends=()):
    header = h.header(MappingKind.EXTENSION, name, f"https://example.org/StructureDefinition/{name}")
    return ExtensionDocument(header, base, tuple(appends), tuple(overrides))


# load_directory


def test_load_lib_directory(tmp_path):
    shutil.copy(h.GOLDEN_MODEL_FILE, tmp_path / "problem.yml")
    repo = load_directory(tmp_path)
    assert repo.counts() == (1, 0, 0)
    assert repo.by_archetype == {h.PROBLEM_DIAGNOSIS: ("EVALUATION.problem_diagnosis.v1",)}
    assert repo.by_profile == {CONDITION: ("EVALUATION.problem_diagnosis.v1",)}


def test_load_empty_directory(tmp_path):
    assert load_directory(tmp_path).counts() == (0, 0, 0)


def test_missing_directory(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_directory(tmp_path / "nope")


def test_same_archetype_and_profile_twice(tmp_path):
    text = h.GOLDEN_MODEL_FILE.read_text()
    (tmp_path / "a.yml").write_text(text)
    (tmp_path / "b.yml").write_text(text.replace("name: EVALUATION.problem_diagnosis.v1", "name: other"))
    with pytest.raises(DuplicateMapping) as info:
        load_directory(tmp_path)
    assert info.value.file.endswith("b.yml") and info.value.line > 0


def test_same_archetype_different_resource_is_allowed(tmp_path):
    text = h.GOLDEN_MODEL_FILE.read_text()
    (tmp_path / "a.yml").write_text(text)
    (tmp_path / "b.yml").write_text(text.replace("name: EVALUATION.problem_diagnosis.v1", "name: other")
                                    .replace("StructureDefinition/Condition", "StructureDefinition/Observation"))
    repo = load_directory(tmp_path)
    assert repo.by_archetype[h.PROBLEM_DIAGNOSIS] == ("EVALUATION.problem_diagnosis.v1", "other")


def test_fail_fast_with_position(tmp_path):
    (tmp_path / "a.yml").write_text(h.GOLDEN_MODEL_FILE.read_text().replace("type: model", "type: banana"))
    (tmp_path / "b.yml").write_text(h.GOLDEN_MODEL_FILE.read_text().replace('"dateTime"', '"problemDiagnose"'))
    with pytest.raises(ParseError) as info:
        load_directory(tmp_path)
    assert info.value.kind == "BadKind" and info.value.file.endswith("a.yml")
    (tmp_path / "a.yml").unlink()
    with pytest.raises(ValidationError) as info:
        load_directory(tmp_path)
    assert info.value.kind == "DuplicateRuleName" and info.value.line == 21


def test_scan_collects_every_problem(tmp_path):
    (tmp_path / "a.yml").write_text(h.GOLDEN_MODEL_FILE.read_text().replace("type: model", "type: banana"))
    (tmp_path / "b.yml").write_text(h.GOLDEN_MODEL_FILE.read_text().replace('"dateTime"', '"problemDiagnose"'))
    (tmp_path / "c.yml").write_text(h.GOLDEN_MODEL_FILE.read_text())
    repo, problems = scan_directory(tmp_path)
    assert [p.kind for p in problems] == ["BadKind", "DuplicateRuleName"]
    assert str(problems[0]).startswith(f"{tmp_path / 'a.yml'}:2:7 BadKind")
    assert repo.counts() == (1, 0, 0)


def test_demo_library_loads():
    repo = load_directory(h.MAPPINGS)
    assert repo.counts() == (4, 1, 4)


# apply_extension


def test_override_in_place(golden):
    new = MappingRule("dateTime", "$resource.onsetDateTime", "$archetype/data[at0001]/items[at0077]")
    merged = apply_extension(golden, extension("e", golden.name, overrides=[new]))
    assert merged.rules == (golden.rules[0], new)
    assert golden.rules[1].fhir_path == "$resource.onset"  # base untouched


def test_identity_merge_changes_only_the_url(golden):
    ext = extension("e", golden.name)
    merged = apply_extension(golden, ext)
    assert merged.rules == golden.rules
    assert merged.header == dataclasses.replace(golden.header, structure_definition_url=ext.header.structure_definition_url)


def test_append_collision(golden):
    with pytest.raises(AppendCollision):
        apply_extension(golden, extension("e", golden.name, appends=[MappingRule("problemDiagnose", "$resource.x", "$archetype/y")]))


def test_override_target_missing(golden):
    with pytest.raises(OverrideTargetMissing):
        apply_extension(golden, extension("e", golden.name, overrides=[MappingRule("nope", "$resource.x", "$archetype/y")]))


def test_unknown_base(golden):
    with pytest.raises(UnknownBase):
        apply_extension(golden, extension("e", "something.else"))


@settings(max_examples=100, deadline=None)
@given(st.integers(min_value=0, max_value=2**32))
def test_appends_keep_file_order_after_base(seed):
    rng = random.Random(seed)
    base = h.random_base(rng)
    ext = h.random_extension(rng, base, "e")
    merged = apply_extension(base, ext)
    names = [r.name for r in merged.rules]
    assert len(names) == len(set(names))
    assert names == [r.name for r in base.rules] + [r.name for r in ext.appended_rules]


# resolve_context


def test_resolve_model_only(golden):
    repo = MappingRepository()
    repo.add(golden)
    repo.add(context("c", [golden.name]))
    resolved = resolve_context(repo, "c")
    assert list(resolved.per_archetype) == [h.PROBLEM_DIAGNOSIS]
    [m] = resolved.mappings
    assert m.rules == golden.rules
    assert set(resolved.provenance.values()) == {Provenance.FROM_MODEL}
    assert resolved.is_executable()


def test_resolve_with_override(golden):
    new = MappingRule("dateTime", "$resource.onsetDateTime", "$archetype/data[at0001]/items[at0077]")
    ext = extension("e", golden.name, overrides=[new])
    repo = MappingRepository()
    for doc in (golden, ext, context("c", [golden.name], ["e"])):
        repo.add(doc)
    resolved = resolve_context(repo, "c")
    assert resolved.provenance[(golden.name, "dateTime")] is Provenance.FROM_EXTENSION_OVERRIDDEN
    assert resolved.provenance[(golden.name, "problemDiagnose")] is Provenance.FROM_MODEL
    [m] = resolved.mappings
    assert m.rules == apply_extension(golden, ext).rules
    assert m.profile_url == ext.header.structure_definition_url


def test_empty_context_is_not_executable():
    repo = MappingRepository()
    repo.add(context("c"))
    resolved = resolve_context(repo, "c")
    assert resolved.mappings == () and not resolved.is_executable()
    assert resolved.diagnostics


def test_unknown_context_and_imports(golden):
    repo = MappingRepository()
    repo.add(golden)
    repo.add(context("a", ["missing"]))
    repo.add(context("b", [golden.name], ["missing"]))
    repo.add(extension("orphan", "other.model"))
    repo.add(context("d", [golden.name], ["orphan"]))
    with pytest.raises(UnknownContext):
        resolve_context(repo, "zzz")
    for name in "abd":
        with pytest.raises(UnknownImport):
            resolve_context(repo, name)


def test_conflicting_overrides(golden):
    new = MappingRule("dateTime", "$resource.onsetDateTime", "$archetype/data[at0001]/items[at0077]")
    repo = MappingRepository()
    for doc in (golden, extension("a", golden.name, overrides=[new]), extension("b", golden.name, overrides=[new]),
                context("c", [golden.name], ["a", "b"])):
        repo.add(doc)
    with pytest.raises(ExtensionOrderConflict):
        resolve_context(repo, "c")


def test_unresolved_slot(golden):
    slot = MappingRule("site", slot_archetype=h.ANATOMICAL_LOCATION)
    repo = MappingRepository()
    repo.add(dataclasses.replace(golden, rules=golden.rules + (slot,)))
    repo.add(context("c", [golden.name]))
    with pytest.raises(UnresolvedSlot) as info:
        resolve_context(repo, "c")
    assert info.value.archetype_id == h.ANATOMICAL_LOCATION


def test_slots_resolve_transitively_from_the_library():
    repo = load_directory(h.MAPPINGS)
    repo.contexts["OnlyLab"] = context("OnlyLab", ["OBSERVATION.laboratory_test_result.v1"],
                                       start="openEHR-EHR-COMPOSITION.report-result.v1")
    resolved = resolve_context(repo, "OnlyLab")
    assert resolved.slot_archetypes == {h.LAB_ANALYTE}
    assert [m.archetype_id for m in resolved.producers] == [h.LAB_RESULT]
    assert any("not imported" in d for d in resolved.diagnostics)


def test_demo_mii_context():
    resolved = resolve_context(load_directory(h.MAPPINGS), "MIIDiagnose")
    prov = resolved.provenance
    name = "EVALUATION.problem_diagnosis.v1"
    assert prov[(name, "problemDiagnose")] is Provenance.FROM_MODEL
    assert prov[(name, "dateTime")] is Provenance.FROM_EXTENSION_OVERRIDDEN
    assert prov[(name, "bodySite")] is Provenance.FROM_EXTENSION_ADDED
    assert resolved.slot_archetypes == {h.ANATOMICAL_LOCATION}


def test_resolution_is_pure():
    repo = load_directory(h.MAPPINGS)
    assert resolve_context(repo, "MIIDiagnose") == resolve_context(repo, "MIIDiagnose")
