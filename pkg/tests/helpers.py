"""Shared fixtures-by-function for the test suite: paths, random generators, oracles."""

from __future__ import annotations

import random
import string
from decimal import Decimal
from pathlib import Path
from typing import Any, List, Optional, Tuple

from fhirconnect import DEMO_MAPPINGS, DEMO_SAMPLES
from fhirconnect.fhir import (
    CHOICE_ELEMENTS,
    TYPE_BY_SUFFIX,
    CodeableConcept,
    Coding,
    Field,
    FhirBoolean,
    FhirDateTime,
    FhirIdentifier,
    FhirInteger,
    FhirPath,
    FhirQuantity,
    FhirString,
    Index,
    Reference,
    WhereEq,
)
from fhirconnect.model import (
    Cardinality,
    ConditionClause,
    ConditionSide,
    ExtensionDocument,
    GrammarVersion,
    MappingDocument,
    MappingHeader,
    MappingKind,
    MappingRule,
    Operator,
)
from fhirconnect.openehr import (
    DvBoolean,
    DvCodedText,
    DvCount,
    DvDateTime,
    DvIdentifier,
    DvQuantity,
    DvText,
    EhrNode,
    EhrPath,
    PathSegment,
    ensure_node,
    iter_leaves,
    set_in_place,
)

TESTS = Path(__file__).parent
GOLDEN = TESTS / "data" / "golden"
GOLDEN_MODEL_FILE = GOLDEN / "problem_diagnosis.yml"
MAPPINGS = DEMO_MAPPINGS
SAMPLES = DEMO_SAMPLES

PROBLEM_DIAGNOSIS = "openEHR-EHR-EVALUATION.problem_diagnosis.v1"
ANATOMICAL_LOCATION = "openEHR-EHR-CLUSTER.anatomical_location.v1"
LAB_RESULT = "openEHR-EHR-OBSERVATION.laboratory_test_result.v1"
LAB_ANALYTE = "openEHR-EHR-CLUSTER.laboratory_test_analyte.v1"


def leaf_set(node: EhrNode) -> set:
    """(indexed path, value) for every value in the tree."""
    return {(path, n.value) for path, n in iter_leaves(node, indexed=True)}


# ---------------------------------------------------------------------------
# scalar values

TERMINOLOGIES = ["SNOMED-CT", "LOINC", "ICD-10-GM"]
UCUM_UNITS = ["mg", "g/dL", "mmol/L", "10*9/L", "%", "cm", "kg/m2", "/min", "mm[Hg]", "1"]
_TEXT_ALPHABET = string.ascii_letters + string.digits + " -_.,;:/()'\"äöüßéñ中文"


def random_text(rng: random.Random, lo: int = 1, hi: int = 24) -> str:
    return "".join(rng.choice(_TEXT_ALPHABET) for _ in range(rng.randint(lo, hi)))


def random_code(rng: random.Random) -> str:
    return rng.choice([
        lambda: str(rng.randint(100000, 999999999)),
        lambda: f"{rng.randint(1, 99999)}-{rng.randint(0, 9)}",
        lambda: f"{rng.choice(string.ascii_uppercase)}{rng.randint(0, 99):02d}.{rng.randint(0, 9)}",
    ])()


def random_datetime(rng: random.Random) -> str:
    """A value valid both as ISO 8601 and as a FHIR R4 dateTime."""
    year = f"{rng.randint(1900, 2099)}"
    month = f"{rng.randint(1, 12):02d}"
    day = f"{rng.randint(1, 28):02d}"
    precision = rng.randint(0, 3)
    if precision == 0:
        return year
    if precision == 1:
        return f"{year}-{month}"
    if precision == 2:
        return f"{year}-{month}-{day}"
    time = f"{rng.randint(0, 23):02d}:{rng.randint(0, 59):02d}:{rng.randint(0, 59):02d}"
    if rng.random() < 0.3:
        time += "." + "".join(rng.choice(string.digits) for _ in range(rng.randint(1, 6)))
    tz = rng.choice(["Z", f"+{rng.randint(0, 13):02d}:{rng.choice(['00', '30'])}",
                     f"-{rng.randint(0, 12):02d}:00"])
    return f"{year}-{month}-{day}T{time}{tz}"


def random_decimal(rng: random.Random) -> Decimal:
    """Finite decimals with assorted scales, trailing zeros and exponents."""
    digits = "".join(rng.choice(string.digits) for _ in range(rng.randint(1, 12))).lstrip("0") or "0"
    sign = "-" if rng.random() < 0.3 and digits != "0" else ""
    style = rng.randint(0, 3)
    if style == 0:
        text = sign + digits
    elif style == 1:
        cut = rng.randint(0, len(digits))
        text = f"{sign}{digits[:cut] or '0'}.{digits[cut:] or '0'}"
    elif style == 2:
        text = f"{sign}{digits}.{'0' * rng.randint(1, 4)}"
    else:
        text = f"{sign}{digits}E{rng.randint(-8, 8)}"
    return Decimal(text)


def random_data_value(rng: random.Random, kind: Optional[type] = None):
    kind = kind or rng.choice([DvCodedText, DvText, DvDateTime, DvQuantity, DvBoolean, DvIdentifier, DvCount])
    if kind is DvCodedText:
        return DvCodedText(random_text(rng), random_code(rng), rng.choice(TERMINOLOGIES))
    if kind is DvText:
        return DvText(random_text(rng, 0, 40))
    if kind is DvDateTime:
        return DvDateTime(random_datetime(rng))
    if kind is DvQuantity:
        return DvQuantity(random_decimal(rng), rng.choice(UCUM_UNITS))
    if kind is DvBoolean:
        return DvBoolean(rng.random() < 0.5)
    if kind is DvIdentifier:
        return DvIdentifier(random_text(rng, 1, 16),
                            rng.choice([None, "urn:oid:1.2.276.0.76.4.8", "http://hospital.example/mrn"]),
                            rng.choice([None, "MR", "Patient number"]))
    return DvCount(rng.randint(-10**12, 10**12))


SYSTEMS = {"SNOMED-CT": "http://snomed.info/sct", "LOINC": "http://loinc.org",
           "ICD-10-GM": "http://fhir.de/CodeSystem/bfarm/icd-10-gm"}


def random_fhir_value(rng: random.Random, kind: type):
    """FHIR values inside the image of the lossless openEHR -> FHIR pairs."""
    if kind is CodeableConcept:
        text = random_text(rng)
        return CodeableConcept((Coding(rng.choice(list(SYSTEMS.values())), random_code(rng), text),), text)
    if kind is Coding:
        return Coding(rng.choice(list(SYSTEMS.values())), random_code(rng), random_text(rng))
    if kind is FhirString:
        return FhirString(random_text(rng, 0, 40))
    if kind is FhirDateTime:
        return FhirDateTime(random_datetime(rng))
    if kind is FhirQuantity:
        unit = rng.choice(UCUM_UNITS)
        return FhirQuantity(random_decimal(rng), unit, "http://unitsofmeasure.org", unit)
    if kind is FhirBoolean:
        return FhirBoolean(rng.random() < 0.5)
    if kind is FhirIdentifier:
        return FhirIdentifier(random_text(rng, 1, 16), rng.choice([None, "http://hospital.example/mrn"]),
                              rng.choice([None, "MR"]))
    if kind is Reference:
        return Reference(f"Patient/{rng.randint(1, 10**6)}")
    return FhirInteger(rng.randint(-10**12, 10**12))


# ---------------------------------------------------------------------------
# compositions over the demo mappings (only bidirectionally mapped leaves)


def random_mii_composition(rng: random.Random) -> EhrNode:
    comp = EhrNode("COMPOSITION", "openEHR-EHR-COMPOSITION.problem_list.v2", "Problem list")
    for _ in range(rng.randint(1, 3)):
        ev = EhrNode("EVALUATION", PROBLEM_DIAGNOSIS, "Problem/Diagnosis")
        comp.attributes.setdefault("content", []).append(ev)
        item = "$archetype/data[at0001]/items[{}]"
        set_in_place(ev, item.format("at0002"), random_data_value(rng, DvCodedText))
        if rng.random() < 0.7:
            set_in_place(ev, item.format("at0077"), random_data_value(rng, DvDateTime))
        for k in range(rng.randint(0, 3)):
            set_in_place(ev, item.format("at0009"), random_data_value(rng, DvText), k)
        if rng.random() < 0.5:
            set_in_place(ev, item.format("at0005"), random_data_value(rng, DvCodedText))
        if rng.random() < 0.5:
            set_in_place(ev, item.format("at0030"), random_data_value(rng, DvDateTime))
        if rng.random() < 0.5:
            set_in_place(ev, item.format("at0003"), random_data_value(rng, DvDateTime))
        if rng.random() < 0.5:
            code = rng.choice(["confirmed", "provisional", "refuted"])
            set_in_place(ev, item.format("at0073"), DvCodedText(code.title(), code, "SNOMED-CT"))
        for k in range(rng.randint(0, 3)):
            site = ensure_node(ev, item.format(ANATOMICAL_LOCATION), k)
            has_name = rng.random() < 0.7
            if has_name:
                set_in_place(site, "items[at0001]", random_data_value(rng, DvCodedText))
            if not has_name or rng.random() < 0.5:
                set_in_place(site, "items[at0002]", random_data_value(rng, DvText))
    return comp


def random_lab_composition(rng: random.Random) -> EhrNode:
    comp = EhrNode("COMPOSITION", "openEHR-EHR-COMPOSITION.report-result.v1", "Laboratory report")
    for _ in range(rng.randint(1, 2)):
        obs = EhrNode("OBSERVATION", LAB_RESULT, "Laboratory test result")
        comp.attributes.setdefault("content", []).append(obs)
        base = "$archetype/data[at0001]/events[at0002]"
        set_in_place(obs, f"{base}/data[at0003]/items[at0005]",
                     DvCodedText(random_text(rng), random_code(rng), "LOINC"))
        if rng.random() < 0.8:
            set_in_place(obs, f"{base}/time", DvDateTime(random_datetime(rng)))
        for k in range(rng.randint(0, 4)):
            an = ensure_node(obs, f"{base}/data[at0003]/items[{LAB_ANALYTE}]", k)
            set_in_place(an, "items[at0024]", DvCodedText(random_text(rng), random_code(rng), "LOINC"))
            if rng.random() < 0.9:
                set_in_place(an, "items[at0001]", random_data_value(rng, DvQuantity))
            if rng.random() < 0.4:
                set_in_place(an, "items[at0004]", DvCodedText(rng.choice(["High", "Low"]),
                                                              rng.choice(["H", "L"]), "SNOMED-CT"))
    return comp


# ---------------------------------------------------------------------------
# random openEHR trees and paths, with a brute-force oracle

EHR_ATTRS = ["items", "data", "events"]
EHR_IDS = [None, "at0001", "at0002", "at0003", "openEHR-EHR-CLUSTER.device.v1"]
EHR_NAMES = [None, "a", "b"]


def random_ehr_tree(rng: random.Random, depth: int = 0) -> EhrNode:
    node = EhrNode("CLUSTER" if depth else "EVALUATION",
                   rng.choice(EHR_IDS[1:]) if depth else PROBLEM_DIAGNOSIS,
                   rng.choice(EHR_NAMES) if depth else None)
    if depth >= 3 or (depth and rng.random() < 0.35):
        node.rm_type = "ELEMENT"
        node.value = DvText(random_text(rng, 1, 4))
        return node
    for _ in range(rng.randint(1, 4)):
        attr = rng.choice(EHR_ATTRS)
        node.attributes.setdefault(attr, []).append(random_ehr_tree(rng, depth + 1))
    return node


def ehr_addresses(root: EhrNode) -> List[Tuple[Tuple, EhrNode]]:
    """Every node with its full address ((attr, id, name), ...), document order."""
    out = []

    def walk(node, addr):
        out.append((addr, node))
        for attr, children in node.attributes.items():
            for child in children:
                walk(child, addr + ((attr, child.archetype_node_id, child.name),))

    walk(root, ())
    return out


def random_ehr_path(rng: random.Random, root: EhrNode) -> EhrPath:
    if rng.random() < 0.7:
        addr, _ = rng.choice(ehr_addresses(root)[1:] or [((), root)])
        segs = []
        for attr, node_id, name in addr:
            segs.append(PathSegment(attr, node_id if rng.random() < 0.7 else None,
                                    name if name is not None and rng.random() < 0.4 else None))
        if segs and rng.random() < 0.15:
            segs[-1] = PathSegment(rng.choice(EHR_ATTRS), rng.choice(EHR_IDS))
        return EhrPath(tuple(segs), rng.random() < 0.5)
    return EhrPath(tuple(PathSegment(rng.choice(EHR_ATTRS), rng.choice(EHR_IDS), rng.choice(EHR_NAMES))
                         for _ in range(rng.randint(1, 3))), True)


def ehr_oracle(root: EhrNode, path: EhrPath) -> List[EhrNode]:
    """Full-tree scan: nodes whose address has the path's length and fits each predicate."""
    hits = []
    for addr, node in ehr_addresses(root):
        if len(addr) != len(path.segments):
            continue
        ok = True
        for (attr, node_id, name), seg in zip(addr, path.segments):
            if attr != seg.attribute or (seg.node_id is not None and seg.node_id != node_id) \
                    or (seg.name is not None and seg.name != name):
                ok = False
                break
        if ok:
            hits.append(node)
    return hits


# ---------------------------------------------------------------------------
# random FHIR trees and paths, with a brute-force oracle

FHIR_KEYS = ["code", "note", "text", "coding", "system", "value", "valueQuantity", "valueString",
             "onsetDateTime", "extension", "url", "component"]


def random_fhir_tree(rng: random.Random, depth: int = 0) -> Any:
    if depth >= 3 or (depth and rng.random() < 0.3):
        return rng.choice([random_text(rng, 1, 3), rng.randint(0, 3), rng.random() < 0.5,
                           Decimal(rng.randint(0, 300)) / 100, rng.choice(["a", "b", "1"])])
    obj = {}
    for key in rng.sample(FHIR_KEYS, rng.randint(1, 4)):
        if rng.random() < 0.4:
            obj[key] = [random_fhir_tree(rng, depth + 1) for _ in range(rng.randint(1, 3))]
        else:
            obj[key] = random_fhir_tree(rng, depth + 1)
    if depth == 0:
        obj["resourceType"] = "Condition"
    return obj


def random_fhir_path(rng: random.Random) -> FhirPath:
    steps: list = []
    for _ in range(rng.randint(1, 3)):
        steps.append(Field(rng.choice(FHIR_KEYS + ["onset"])))
        r = rng.random()
        if r < 0.15:
            steps.append(Index(rng.randint(0, 2)))
        elif r < 0.3:
            steps.append(WhereEq(rng.choice(["url", "system", "code"]), rng.choice(["a", "b", "1"])))
    return FhirPath(tuple(steps), True)


def fhir_elements(root: Any) -> List[Tuple[Tuple, Any]]:
    """Every element reachable from ``root`` with its address ((key, index-or-None), ...)."""
    out = []

    def walk(obj, addr):
        out.append((addr, obj))
        if isinstance(obj, dict):
            for key, val in obj.items():
                if isinstance(val, list):
                    for i, item in enumerate(val):
                        walk(item, addr + ((key, i),))
                else:
                    walk(val, addr + ((key, None),))

    walk(root, ())
    return out


def _key_fits(key: str, name: str, siblings) -> bool:
    if name in siblings:
        return key == name
    suffix = key[len(name):]
    return key.startswith(name) and suffix[:1].isupper() and suffix in TYPE_BY_SUFFIX


def _literal(value, literal: str) -> bool:
    if isinstance(value, bool):
        return literal == ("true" if value else "false")
    return isinstance(value, (str, int, Decimal)) and str(value) == literal


def fhir_oracle(root: Any, path: FhirPath) -> List[Any]:
    elements = fhir_elements(root)
    by_addr = {addr: obj for addr, obj in elements}
    current = [()]
    for step in path.steps:
        if isinstance(step, Field):
            wanted = set(current)
            current = [addr for addr, _ in elements
                       if addr and addr[:-1] in wanted and isinstance(by_addr[addr[:-1]], dict)
                       and _key_fits(addr[-1][0], step.name, by_addr[addr[:-1]])]
        elif isinstance(step, WhereEq):
            current = [a for a in current if isinstance(by_addr[a], dict)
                       and _literal(by_addr[a].get(step.field), step.literal)]
        else:
            current = current[step.n:step.n + 1]
    return [by_addr[a] for a in current]


# ---------------------------------------------------------------------------
# random mapping documents


def header(kind: MappingKind, name: str, url: str = "http://hl7.org/fhir/StructureDefinition/Condition",
           archetype: str = PROBLEM_DIAGNOSIS) -> MappingHeader:
    return MappingHeader(GrammarVersion("FHIRConnect", "1.0.0"), kind, name, "1.0.0",
                         archetype_id=archetype, archetype_revision="1.0.0", structure_definition_url=url)


def random_rule(rng: random.Random, name: str, depth: int = 0) -> MappingRule:
    at = f"at{rng.randint(1, 9999):04d}"
    cond = None
    if rng.random() < 0.2:
        op = rng.choice(list(Operator))
        cond = ConditionClause(ConditionSide.OPENEHR, f"data[at0001]/items[{at}]", op,
                               ("x",) if op.takes_operands else ())
    children: tuple = ()
    if depth == 0 and rng.random() < 0.2:
        children = tuple(random_rule(rng, f"{name}_c{i}", 1) for i in range(rng.randint(1, 2)))
    return MappingRule(
        name=name,
        fhir_path=rng.choice(["$resource.code", "$resource.note.text", "$resource.onset", "$resource.severity"]),
        openehr_path=f"$archetype/data[at0001]/items[{at}]",
        type_hint=rng.choice([None, "string", "dateTime", "CodeableConcept"]),
        condition=cond,
        children=children,
        cardinality=rng.choice(list(Cardinality)),
    )


def random_base(rng: random.Random, name: str = "EVALUATION.problem_diagnosis.v1") -> MappingDocument:
    rules = tuple(random_rule(rng, f"r{i}") for i in range(rng.randint(1, 8)))
    return MappingDocument(header(MappingKind.MODEL, name), rules)


def random_extension(rng: random.Random, base: MappingDocument, name: str, *, overrides=None, appends=None,
                     tag: str = "x") -> ExtensionDocument:
    base_names = [r.name for r in base.rules]
    if overrides is None:
        overrides = rng.sample(base_names, rng.randint(0, len(base_names)))
    if appends is None:
        appends = [f"{tag}{i}" for i in range(rng.randint(0, 3))]
    over = tuple(random_rule(rng, n) for n in overrides)
    add = tuple(random_rule(rng, n) for n in appends)
    order = tuple((True, r) for r in over) + tuple((False, r) for r in add)
    return ExtensionDocument(header(MappingKind.EXTENSION, name, f"https://example.org/fhir/StructureDefinition/{name}"),
                             base.name, add, over, order=order)
