"""How a profile extension layers onto a shared base mapping.

MIIDiagnose imports the same problem/diagnosis model as ProblemList plus the
MII.Diagnose extension. The extension overrides one rule, adds several, and
pulls in the anatomical-location cluster through a slot.
"""

from fhirconnect import DEMO_MAPPINGS, load_directory, resolve_context, transform
from fhirconnect.engine import Direction, TransformRequest
from fhirconnect.openehr import DvCodedText, DvDateTime, DvText, EhrNode, ensure_node, set_in_place

repo = load_directory(DEMO_MAPPINGS)

plain = resolve_context(repo, "ProblemList")
mii = resolve_context(repo, "MIIDiagnose")
for (mapping, rule), origin in sorted(mii.provenance.items()):
    print("%-34s %-22s %s" % (mapping, rule, origin.value))
print("slot archetypes:", sorted(mii.slot_archetypes))

# rules the two contexts share are the very same objects
shared = [r for m in plain.mappings for r in m.rules]
print("problemDiagnose shared:", shared[0] is mii.mappings[0].rules[0])

entry = EhrNode("EVALUATION", "openEHR-EHR-EVALUATION.problem_diagnosis.v1")
set_in_place(entry, "$archetype/data[at0001]/items[at0002]", DvCodedText("fever", "386661006", "SNOMED-CT"))
set_in_place(entry, "$archetype/data[at0001]/items[at0077]", DvDateTime("2020-01-01T08:30:00+01:00"))
set_in_place(entry, "$archetype/data[at0001]/items[at0003]", DvDateTime("2020-01-02"))
set_in_place(entry, "$archetype/data[at0001]/items[at0073]", DvCodedText("confirmed", "confirmed", "local"))
site = ensure_node(entry, "$archetype/data[at0001]/items[openEHR-EHR-CLUSTER.anatomical_location.v1]")
set_in_place(site, "$archetype/items[at0002]", DvText("left forearm"))
comp = EhrNode("COMPOSITION", "openEHR-EHR-COMPOSITION.problem_list.v2", attributes={"content": [entry]})

result = transform(repo, TransformRequest(Direction.OPENEHR_TO_FHIR, "MIIDiagnose", comp,
                                          terminology_passthrough=True))
print(result.output[0].dumps())
for w in result.warnings:
    print("warning:", w.to_json())
