"""FHIRconnect mapping language and a bidirectional openEHR <-> FHIR R4 engine."""

from pathlib import Path

__version__ = "0.1.0"

from .bridge import Bridge, load_terminology_table, to_fhir, to_openehr  # noqa: E402
from .engine import (  # noqa: E402
    Direction,
    TransformRequest,
    TransformResult,
    TransformWarning,
    allocate_references,
    evaluate_condition,
    make_bundle,
    transform,
)
from .fhir import FhirDocument, loads_resource  # noqa: E402
from .model import validate_document, rule_lookup  # noqa: E402
from .openehr import EhrNode, dumps_composition, loads_composition  # noqa: E402
from .parser import load_mapping_file, parse_mapping_file, serialize_mapping  # noqa: E402
from .repository import apply_extension, load_directory, resolve_context  # noqa: E402

DATA_DIR = Path(__file__).parent / "data"
DEMO_MAPPINGS = DATA_DIR / "mappings"
DEMO_SAMPLES = DATA_DIR / "samples"

__all__ = [
    "Bridge", "Direction", "EhrNode", "FhirDocument", "TransformRequest", "TransformResult",
    "TransformWarning", "allocate_references", "apply_extension", "dumps_composition",
    "evaluate_condition", "load_directory", "load_mapping_file", "load_terminology_table",
    "loads_composition", "loads_resource", "make_bundle", "parse_mapping_file", "resolve_context",
    "rule_lookup", "serialize_mapping", "to_fhir", "to_openehr", "transform", "validate_document",
    "DEMO_MAPPINGS", "DEMO_SAMPLES", "__version__",
]
