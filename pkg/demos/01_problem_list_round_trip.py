"""Problem-list entry to FHIR Condition and back, using the bundled demo library."""

from fhirconnect import DEMO_MAPPINGS, DEMO_SAMPLES, load_directory, transform
from fhirconnect.engine import Direction, TransformRequest
from fhirconnect.openehr import dumps_composition, iter_leaves, loads_composition

repo = load_directory(DEMO_MAPPINGS)
print("library:", "%d models, %d extensions, %d contexts" % repo.counts())

comp = loads_composition((DEMO_SAMPLES / "problem_list_composition.json").read_bytes())
for path, node in iter_leaves(comp):
    print("  openEHR leaf", path, "=", node.value)

# openEHR -> FHIR: one Condition per problem/diagnosis entry
fwd = transform(repo, TransformRequest(Direction.OPENEHR_TO_FHIR, "ProblemList", comp, trace=True))
[condition] = fwd.output
print(condition.dumps())
for t in fwd.trace:
    print("  %-16s %s -> %s" % (t.rule_name, t.source_path, t.target_path))

# and back again; the composition header comes from the context
back = transform(repo, TransformRequest(Direction.FHIR_TO_OPENEHR, "ProblemList", fwd.output))
print(dumps_composition(back.output[0]))

before = {(p, n.value) for p, n in iter_leaves(comp)}
after = {(p, n.value) for p, n in iter_leaves(back.output[0])}
print("leaves preserved:", before == after)
