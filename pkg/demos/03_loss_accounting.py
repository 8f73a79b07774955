"""Data that no rule covers is reported, never silently dropped."""

import json

from fhirconnect import DEMO_MAPPINGS, load_directory, transform
from fhirconnect.engine import Direction, TransformRequest
from fhirconnect.errors import LossyWithoutConsent
from fhirconnect.fhir import FhirDocument
from fhirconnect.openehr import DvCodedText, DvText, EhrNode, set_in_place

repo = load_directory(DEMO_MAPPINGS)

# ProblemList maps two fields; a free-text description has nowhere to go
entry = EhrNode("EVALUATION", "openEHR-EHR-EVALUATION.problem_diagnosis.v1")
set_in_place(entry, "$archetype/data[at0001]/items[at0002]", DvCodedText("fever", "386661006", "SNOMED-CT"))
set_in_place(entry, "$archetype/data[at0001]/items[at0009]", DvText("started after travel"))
comp = EhrNode("COMPOSITION", "openEHR-EHR-COMPOSITION.problem_list.v2", attributes={"content": [entry]})

out = transform(repo, TransformRequest(Direction.OPENEHR_TO_FHIR, "ProblemList", comp))
for w in out.warnings:
    print(json.dumps(w.to_json(), sort_keys=True))

# Reverse: two codings fit into one DV_CODED_TEXT only by dropping one
condition = FhirDocument.from_json({
    "resourceType": "Condition",
    "code": {"text": "fever", "coding": [
        {"system": "http://snomed.info/sct", "code": "386661006", "display": "Fever"},
        {"system": "http://fhir.de/CodeSystem/bfarm/icd-10-gm", "code": "R50.9", "display": "Fieber"},
    ]},
    "recordedDate": "2020-01-03",
})
back = transform(repo, TransformRequest(Direction.FHIR_TO_OPENEHR, "ProblemList", [condition]))
for w in back.warnings:
    print(json.dumps(w.to_json(), sort_keys=True))

try:
    transform(repo, TransformRequest(Direction.FHIR_TO_OPENEHR, "ProblemList", [condition], strict_lossy=True))
except LossyWithoutConsent as exc:
    print("strict mode:", exc)
