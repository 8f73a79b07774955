"""Command line entry point: ``fhirconnect validate|resolve|transform|version``.

Exit codes: 0 success, 1 mapping violations or transform errors, 2 I/O or
usage problems, 3 input that does not parse.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path
from typing import List, Optional, Sequence

from . import __version__, jsonio
from .bridge import load_terminology_table
from .engine import Direction, TransformRequest, transform
from .errors import DocumentError, FhirConnectError, PathSyntaxError
from .fhir import FhirDocument
from .model import LANGUAGE_TAG, MappingRule
from .openehr import EhrNode, node_from_json, node_to_json
from .repository import MappingRepository, Problem, load_directory, resolve_context, scan_directory

EXIT_OK, EXIT_VIOLATIONS, EXIT_IO, EXIT_INPUT = 0, 1, 2, 3
ENV_MAPPINGS = "FHIRCONNECT_MAPPINGS"


class _InputError(Exception):
    pass


def _plural(n: int, word: str) -> str:
    return f"{n} {word}" if n == 1 else f"{n} {word}s"


def _mappings_dir(args) -> Path:
    value = args.mappings_dir or os.environ.get(ENV_MAPPINGS)
    if not value:
        raise SystemExit(_usage_error(f"--mappings-dir is required (or set {ENV_MAPPINGS})"))
    return Path(value)


def _usage_error(message: str) -> int:
    print(f"fhirconnect: error: {message}", file=sys.stderr)
    return EXIT_IO


def _load(args) -> MappingRepository:
    return load_directory(_mappings_dir(args))


# ---------------------------------------------------------------------------
# validate


def cmd_validate(args) -> int:
    try:
        repo, problems = scan_directory(_mappings_dir(args))
    except OSError as exc:
        print(f"fhirconnect: {exc}", file=sys.stderr)
        return EXIT_IO
    for name, ctx in sorted(repo.contexts.items()):
        try:
            resolve_context(repo, name)
        except FhirConnectError as exc:
            problems.append(Problem(ctx.filename, exc.line, exc.column, exc.kind, exc.message))
    for p in problems:
        print(p)
    models, exts, ctxs = repo.counts()
    print(f"{_plural(models, 'model')}, {_plural(exts, 'extension')}, {_plural(ctxs, 'context')}")
    return EXIT_VIOLATIONS if problems else EXIT_OK


# ---------------------------------------------------------------------------
# resolve


def _rule_lines(rule: MappingRule, tag: str, depth: int) -> List[str]:
    pad = "  " * depth
    parts = [f"{pad}{tag:<24} {rule.name}"]
    if rule.fhir_path or rule.openehr_path:
        parts.append(f"{rule.fhir_path or '-'} <-> {rule.openehr_path or '-'}")
    if rule.type_hint:
        parts.append(f"type={rule.type_hint}")
    if rule.slot_archetype:
        parts.append(f"slot={rule.slot_archetype}")
    if rule.condition is not None:
        c = rule.condition
        parts.append(f"if {c.side.value} {c.target_path} {c.operator.value} {list(c.operands)}")
    parts.append(f"cardinality={rule.cardinality.value}")
    lines = ["  ".join(parts)]
    for child in rule.children:
        lines.extend(_rule_lines(child, "", depth + 1))
    return lines


def cmd_resolve(args) -> int:
    try:
        repo = _load(args)
    except OSError as exc:
        print(f"fhirconnect: {exc}", file=sys.stderr)
        return EXIT_IO
    except FhirConnectError as exc:
        print(exc, file=sys.stderr)
        return EXIT_VIOLATIONS
    try:
        resolved = resolve_context(repo, args.context)
    except FhirConnectError as exc:
        print(f"{exc.kind}: {exc.message}", file=sys.stderr)
        return EXIT_VIOLATIONS
    print(f"context {resolved.context_name}")
    print(f"template {resolved.template_id}")
    print(f"start {resolved.entry_archetype}")
    for mapping in resolved.mappings:
        role = "slot" if mapping.archetype_id in resolved.slot_archetypes else "resource"
        print(f"mapping {mapping.name} [{role}] {mapping.archetype_id} -> {mapping.resource_type} "
              f"({mapping.profile_url})")
        for ext in mapping.extensions:
            print(f"  extended by {ext}")
        for rule in mapping.rules:
            lines = _rule_lines(rule, mapping.provenance[rule.name].value, 1)
            print("\n".join(lines))
    for note in resolved.diagnostics:
        print(f"note: {note}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# transform


def _read_json(path: Path):
    data = path.read_bytes()
    try:
        return jsonio.loads(data)
    except UnicodeDecodeError as exc:
        raise _InputError(f"{path}: invalid UTF-8 at byte {exc.start}") from None
    except json.JSONDecodeError as exc:
        raise _InputError(f"{path}:{exc.lineno}:{exc.colno} {exc.msg}") from None


def _parse_input(obj, direction: Direction, path: Path):
    try:
        if direction is Direction.OPENEHR_TO_FHIR:
            return node_from_json(obj)
        items = obj if isinstance(obj, list) else [obj]
        return [FhirDocument.from_json(item) for item in items]
    except (DocumentError, ValueError) as exc:
        raise _InputError(f"{path}: {getattr(exc, 'message', exc)}") from None


def _output_json(output) -> object:
    items = [node_to_json(o) if isinstance(o, EhrNode) else o.to_json() for o in output]
    return items[0] if len(items) == 1 else items


def _transform_one(args, repo, in_path: Path, out_path: Path, terminologies) -> int:
    direction = Direction(args.direction)
    try:
        obj = _read_json(in_path)
    except OSError as exc:
        print(f"fhirconnect: {exc}", file=sys.stderr)
        return EXIT_IO
    except _InputError as exc:
        print(f"fhirconnect: {exc}", file=sys.stderr)
        return EXIT_INPUT
    try:
        source = _parse_input(obj, direction, in_path)
    except _InputError as exc:
        print(f"fhirconnect: {exc}", file=sys.stderr)
        return EXIT_INPUT
    req = TransformRequest(direction, args.context, source, strict_lossy=args.strict_lossy,
                           bundle_output=args.bundle, trace=args.trace, terminologies=terminologies,
                           terminology_passthrough=args.terminology_passthrough)
    try:
        result = transform(repo, req)
    except (FhirConnectError, PathSyntaxError) as exc:
        print(f"{exc.kind}: {exc.message}", file=sys.stderr)
        return EXIT_VIOLATIONS
    for w in result.warnings:
        print(json.dumps(w.to_json(), sort_keys=True, ensure_ascii=False), file=sys.stderr)
    try:
        out_path.write_text(jsonio.dumps(_output_json(result.output)), encoding="utf-8")
        if args.trace:
            trace_path = out_path.with_name(out_path.name + ".trace.json")
            trace_path.write_text(jsonio.dumps([t.to_json() for t in result.trace or []]), encoding="utf-8")
    except OSError as exc:
        print(f"fhirconnect: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


def cmd_transform(args) -> int:
    batch = args.input_dir is not None
    if batch == (args.input is not None):
        return _usage_error("give exactly one of --in or --input-dir")
    if batch and args.output_dir is None or not batch and args.output is None:
        return _usage_error("--out (or --output-dir with --input-dir) is required")
    terminologies = None
    if args.terminology_table:
        try:
            terminologies = load_terminology_table(args.terminology_table)
        except OSError as exc:
            print(f"fhirconnect: {exc}", file=sys.stderr)
            return EXIT_IO
        except Exception as exc:  # malformed table is an input problem
            print(f"fhirconnect: {exc}", file=sys.stderr)
            return EXIT_INPUT
    try:
        repo = _load(args)
    except OSError as exc:
        print(f"fhirconnect: {exc}", file=sys.stderr)
        return EXIT_IO
    except FhirConnectError as exc:
        print(exc, file=sys.stderr)
        return EXIT_VIOLATIONS
    if not batch:
        return _transform_one(args, repo, Path(args.input), Path(args.output), terminologies)
    in_dir, out_dir = Path(args.input_dir), Path(args.output_dir)
    if not in_dir.is_dir():
        return _usage_error(f"input directory not found: {in_dir}")
    out_dir.mkdir(parents=True, exist_ok=True)
    worst = EXIT_OK
    for path in sorted(in_dir.glob("*.json")):
        worst = max(worst, _transform_one(args, repo, path, out_dir / path.name, terminologies))
    return worst


def cmd_version(args) -> int:
    print(f"fhirconnect {__version__} (grammar {LANGUAGE_TAG}/v1.0.0, FHIR R4)")
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fhirconnect", description="FHIRconnect mapping toolkit")
    parser.add_argument("--mappings-dir", help=f"mapping library directory (default: ${ENV_MAPPINGS})")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="parse and check every mapping file")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("resolve", help="print the merged rule list of a context")
    p.add_argument("context")
    p.set_defaults(func=cmd_resolve)

    p = sub.add_parser("transform", help="run a context over a document")
    p.add_argument("--direction", required=True, choices=[d.value for d in Direction])
    p.add_argument("--context", required=True)
    p.add_argument("--in", dest="input")
    p.add_argument("--out", dest="output")
    p.add_argument("--input-dir", help="transform every *.json file here, in filename order")
    p.add_argument("--output-dir")
    p.add_argument("--trace", action="store_true", help="write <out>.trace.json")
    p.add_argument("--strict-lossy", action="store_true", help="fail instead of warning on lossy conversion")
    p.add_argument("--bundle", action="store_true", help="wrap FHIR output in a collection Bundle")
    p.add_argument("--terminology-table", help="YAML list of {openehr_terminology_id, fhir_system_uri}")
    p.add_argument("--terminology-passthrough", action="store_true",
                   help="pass unknown terminology ids through as coding systems")
    p.set_defaults(func=cmd_transform)

    p = sub.add_parser("version", help="print version information")
    p.set_defaults(func=cmd_version)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except SystemExit as exc:
        return int(exc.code or 0)


if __name__ == "__main__":
    sys.exit(main())
