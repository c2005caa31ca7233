"""Batch front end: parse chart documents, dispatch operations, emit reports.

Documents are JSON files following the schema published in docs/schema.md
(schema_version 1). Everything is exact: rationals are integers or "p/q"
strings, polynomials are strings over the declared coordinate names, and
floats are rejected. Operation tables always describe the total family,
with the differential merged into arity 1.

Reports echo the command, carry a pass flag and a structured payload, and
are byte-stable for identical inputs; elapsed time therefore goes to
stderr, never into the report body. Exit codes: 0 when every check passes,
1 when a mathematical check fails (including construction-time validation
inside the library), 2 for unusable input (bad JSON, schema violations,
unknown commands or flags).

The DERIVE_THREADS environment variable sets the worker-thread count for
per-point diagnostics; the default is 1. Results do not depend on the
thread count.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from fractions import Fraction

from .bundles import Chart, GradedBundle
from .cdga import derivation_square_failures, from_derivation, to_derivation
from .geometry import (
    DerivedChart,
    complex_cohomology,
    is_classical_point,
    pullback_fibration,
    tangent_complex,
    virtual_dimension,
)
from .intersection import AffineSubmanifold, derived_intersection
from .linalg import inverse
from .ops import MultiOp, sort_with_sign
from .pathspace import (
    ConnectionData,
    PathContraction,
    PolyPath,
    derived_path_space,
    factorization_check,
    section_square_failures,
)
from .structures import (
    CurvedStructure,
    LooMorphism,
    as_constant,
    check_morphism,
    check_structure,
    invert_morphism,
    linear_block,
    operations_from_tables,
    strictify_fibration,
)
from .transfer import ContractionData, FiltrationSpec, reduce_fibration_step, transfer_structure

__all__ = [
    "ChartDocument",
    "Report",
    "SchemaError",
    "chart_document",
    "morphism_document",
    "parse_chart_document",
    "parse_morphism_document",
    "main",
    "run",
]

SCHEMA_VERSION = 1

COMMANDS = (
    "check",
    "transfer",
    "tangent",
    "vdim",
    "pathspace",
    "factorize",
    "intersect",
    "pullback",
    "invert",
    "strictify",
    "reduce",
    "cdga",
)


class SchemaError(ValueError):
    """A document does not follow the published schema; messages carry locations."""


# --- low-level field access ---------------------------------------------------


def _need(doc, key, where, kind, kind_name):
    if not isinstance(doc, dict):
        raise SchemaError(f"{where}: expected a mapping, got {type(doc).__name__}")
    if key not in doc:
        raise SchemaError(f"{where}: missing required field {key!r}")
    value = doc[key]
    if not isinstance(value, kind) or isinstance(value, bool):
        raise SchemaError(f"{where}.{key}: expected {kind_name}, got {type(value).__name__}")
    return value


def _need_list(doc, key, where):
    return _need(doc, key, where, list, "a list")


def _need_map(doc, key, where):
    return _need(doc, key, where, dict, "a mapping")


def _need_str(doc, key, where):
    return _need(doc, key, where, str, "a string")


def _need_int(doc, key, where):
    return _need(doc, key, where, int, "an integer")


def _envelope(doc, kind, where):
    if not isinstance(doc, dict):
        raise SchemaError(f"{where}: expected a mapping, got {type(doc).__name__}")
    version = _need_int(doc, "schema_version", where)
    if version != SCHEMA_VERSION:
        raise SchemaError(f"{where}.schema_version: expected {SCHEMA_VERSION}, got {version}")
    found = _need_str(doc, "kind", where)
    if found != kind:
        raise SchemaError(f"{where}.kind: expected {kind!r}, got {found!r}")


def _name_list(values, where):
    if not isinstance(values, list) or any(not isinstance(v, str) for v in values):
        raise SchemaError(f"{where}: expected a list of names")
    return tuple(values)


def _rational(value, where):
    if isinstance(value, bool) or isinstance(value, float):
        raise SchemaError(f"{where}: rationals must be integers or 'p/q' strings, got {value!r}")
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, str):
        try:
            return Fraction(value)
        except (ValueError, ZeroDivisionError) as err:
            raise SchemaError(f"{where}: bad rational {value!r} ({err})") from None
    raise SchemaError(f"{where}: rationals must be integers or 'p/q' strings, got {value!r}")


def _chart_poly(chart, value, where):
    if isinstance(value, bool) or isinstance(value, float):
        raise SchemaError(f"{where}: polynomials must be strings or integers, got {value!r}")
    try:
        return chart.poly(value)
    except ValueError as err:
        raise SchemaError(f"{where}: {err}") from None


def _point(values, chart, where):
    if not isinstance(values, list):
        raise SchemaError(f"{where}: expected a point as a list of rationals")
    point = tuple(_rational(v, f"{where}[{i}]") for i, v in enumerate(values))
    if len(point) != chart.nvars:
        raise SchemaError(f"{where}: point has {len(point)} entries, chart needs {chart.nvars}")
    return point


# --- chart and morphism documents ----------------------------------------------


class ChartDocument:
    """A parsed chart file: the raw structure plus the optional blocks.

    The structure is deliberately unvalidated so that the ``check`` command
    can report residuals instead of refusing to parse; commands that build
    geometry wrap it in a DerivedChart and let validation fail there.
    """

    __slots__ = ("structure", "connection", "points")

    def __init__(self, structure, connection, points):
        self.structure = structure
        self.connection = connection
        self.points = points

    @property
    def chart(self):
        return self.structure.chart

    @property
    def bundle(self):
        return self.structure.bundle

    def derived(self):
        return DerivedChart(self.structure)


def _parse_operation_entries(entries, source, target, chart, degree, where, fixed_arity=None):
    tables = {}
    seen = {}
    for i, entry in enumerate(entries):
        at = f"{where}[{i}]"
        if not isinstance(entry, dict):
            raise SchemaError(f"{at}: expected a mapping")
        if fixed_arity is None:
            arity = _need_int(entry, "arity", at)
        else:
            arity = entry.get("arity", fixed_arity)
            if arity != fixed_arity:
                raise SchemaError(f"{at}.arity: expected {fixed_arity}, got {arity}")
        if arity < 0:
            raise SchemaError(f"{at}.arity: must be >= 0, got {arity}")
        inputs = _name_list(_need(entry, "inputs", at, list, "a list"), f"{at}.inputs")
        if len(inputs) != arity:
            raise SchemaError(f"{at}.inputs: {len(inputs)} names for arity {arity}")
        for name in inputs:
            if not source.has(name):
                raise SchemaError(f"{at}.inputs: unknown basis name {name!r}")
        output = _need_map(entry, "output", at)
        vector = {}
        for name in sorted(output):
            if not target.has(name):
                raise SchemaError(f"{at}.output: unknown basis name {name!r}")
            vector[name] = _chart_poly(chart, output[name], f"{at}.output.{name}")
        skey, _ = sort_with_sign(inputs, source)
        if skey in seen.setdefault(arity, set()):
            raise SchemaError(f"{at}.inputs: duplicate entry for multiset {list(skey)}")
        seen[arity].add(skey)
        tables.setdefault(arity, {})[inputs] = vector
    return tables


def _parse_connection(entries, bundle, chart, where):
    matrices = {}
    for i, entry in enumerate(entries):
        at = f"{where}[{i}]"
        if not isinstance(entry, dict):
            raise SchemaError(f"{at}: expected a mapping")
        coord = _need_str(entry, "coordinate", at)
        if coord not in chart.coords:
            raise SchemaError(f"{at}.coordinate: unknown coordinate {coord!r}")
        name = _need_str(entry, "on", at)
        if not bundle.has(name):
            raise SchemaError(f"{at}.on: unknown basis name {name!r}")
        output = _need_map(entry, "output", at)
        vector = {
            tgt: _chart_poly(chart, output[tgt], f"{at}.output.{tgt}") for tgt in sorted(output)
        }
        matrices.setdefault(coord, {})[name] = vector
    try:
        return ConnectionData(bundle, chart, matrices)
    except ValueError as err:
        raise SchemaError(f"{where}: {err}") from None


def parse_chart_document(doc, where="chart"):
    """Parse a chart document into its raw structure and optional blocks."""
    _envelope(doc, "chart", where)
    base = _need_map(doc, "base", where)
    coords = _name_list(_need(base, "coordinates", f"{where}.base", list, "a list"),
                        f"{where}.base.coordinates")
    if "dim" in base and base["dim"] != len(coords):
        raise SchemaError(f"{where}.base.dim: {base['dim']} does not match {len(coords)} coordinates")
    try:
        chart = Chart(coords)
    except ValueError as err:
        raise SchemaError(f"{where}.base.coordinates: {err}") from None
    degrees = {}
    for i, item in enumerate(_need_list(doc, "bundle", where)):
        at = f"{where}.bundle[{i}]"
        if not isinstance(item, dict):
            raise SchemaError(f"{at}: expected a mapping")
        degree = _need_int(item, "degree", at)
        names = _name_list(_need(item, "names", at, list, "a list"), f"{at}.names")
        if degree in degrees:
            raise SchemaError(f"{at}.degree: repeated degree {degree}")
        degrees[degree] = names
    try:
        bundle = GradedBundle(degrees)
    except ValueError as err:
        raise SchemaError(f"{where}.bundle: {err}") from None
    entries = _need_list(doc, "operations", where)
    tables = _parse_operation_entries(entries, bundle, bundle, chart, 1, f"{where}.operations")
    try:
        operations = operations_from_tables(bundle, bundle, chart, 1, tables)
    except ValueError as err:
        raise SchemaError(f"{where}.operations: {err}") from None
    connection = None
    if "connection" in doc:
        connection = _parse_connection(
            _need_list(doc, "connection", where), bundle, chart, f"{where}.connection"
        )
    points = ()
    if "points" in doc:
        points = tuple(
            _point(p, chart, f"{where}.points[{i}]")
            for i, p in enumerate(_need_list(doc, "points", where))
        )
    return ChartDocument(CurvedStructure(bundle, operations), connection, points)


def parse_morphism_document(doc, where="morphism"):
    """Parse a morphism document; returns (morphism, source doc, target doc)."""
    _envelope(doc, "morphism", where)
    source = parse_chart_document(_need_map(doc, "source", where), f"{where}.source")
    target = parse_chart_document(_need_map(doc, "target", where), f"{where}.target")
    raw_base = _need_list(doc, "base_map", where)
    if len(raw_base) != target.chart.nvars:
        raise SchemaError(
            f"{where}.base_map: {len(raw_base)} components for a "
            f"{target.chart.nvars}-coordinate target"
        )
    base = tuple(
        _chart_poly(source.chart, component, f"{where}.base_map[{i}]")
        for i, component in enumerate(raw_base)
    )
    entries = _need_list(doc, "phi", where)
    tables = _parse_operation_entries(
        entries, source.bundle, target.bundle, source.chart, 0, f"{where}.phi"
    )
    if 0 in tables:
        raise SchemaError(f"{where}.phi: morphism operations start at arity 1")
    try:
        phi = operations_from_tables(source.bundle, target.bundle, source.chart, 0, tables)
        morphism = LooMorphism(source.chart, target.chart, base, phi)
    except ValueError as err:
        raise SchemaError(f"{where}: {err}") from None
    return morphism, source, target


def _family_entries(family, chart):
    out = []
    for arity in family.arities():
        op = family.get(arity)
        for key in sorted(op.entries):
            bucket = op.entries[key]
            out.append(
                {
                    "arity": arity,
                    "inputs": list(key),
                    "output": {name: chart.format(bucket[name]) for name in sorted(bucket)},
                }
            )
    return out


def chart_document(structure, connection=None, points=None):
    """Serialize a structure (with optional blocks) back into a document."""
    structure = getattr(structure, "structure", structure)
    chart = structure.chart
    bundle = structure.bundle
    doc = {
        "schema_version": SCHEMA_VERSION,
        "kind": "chart",
        "base": {"dim": chart.nvars, "coordinates": list(chart.coords)},
        "bundle": [
            {"degree": degree, "names": list(names)}
            for degree, names in sorted(bundle.degrees.items())
        ],
        "operations": _family_entries(structure.total(), chart),
    }
    if connection is not None:
        doc["connection"] = [
            {
                "coordinate": coord,
                "on": name,
                "output": {
                    tgt: chart.format(coeff)
                    for tgt, coeff in sorted(connection.gamma(coord, name).items())
                },
            }
            for coord in chart.coords
            for name in bundle.names
            if connection.gamma(coord, name)
        ]
    if points:
        doc["points"] = [[str(v) for v in point] for point in points]
    return doc


def morphism_document(morphism, source_doc, target_doc):
    """Serialize a morphism with its endpoint charts embedded."""
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "morphism",
        "source": source_doc,
        "target": target_doc,
        "base_map": [morphism.source_chart.format(c) for c in morphism.base_map],
        "phi": _family_entries(morphism.phi, morphism.source_chart),
    }


# --- report plumbing ------------------------------------------------------------


class Report:
    """A command's outcome: echo, pass flag, payload, and wall-clock seconds.

    The serialized body excludes the elapsed time so that identical inputs
    produce identical bytes; the caller prints the timing to stderr.
    """

    __slots__ = ("command", "files", "passed", "payload", "elapsed")

    def __init__(self, command, files, passed, payload, elapsed=0.0):
        self.command = command
        self.files = list(files)
        self.passed = bool(passed)
        self.payload = payload
        self.elapsed = elapsed

    def body(self):
        return {
            "schema_version": SCHEMA_VERSION,
            "command": self.command,
            "files": self.files,
            "passed": self.passed,
            "payload": self.payload,
        }

    def render(self, form):
        if form == "json":
            return json.dumps(self.body(), indent=2)
        lines = []
        _flatten(self.body(), "", lines)
        return "\n".join(lines)


def _scalar(value):
    if value is True:
        return "yes"
    if value is False:
        return "no"
    if value is None:
        return "none"
    return str(value)


def _flatten(value, path, lines):
    if isinstance(value, dict):
        if not value:
            lines.append(f"{path}: (empty)")
        for key, item in value.items():
            _flatten(item, f"{path}.{key}" if path else str(key), lines)
    elif isinstance(value, list):
        if all(not isinstance(v, (dict, list)) for v in value):
            lines.append(f"{path}: [{', '.join(_scalar(v) for v in value)}]")
        else:
            for i, item in enumerate(value):
                _flatten(item, f"{path}[{i}]", lines)
    else:
        lines.append(f"{path}: {_scalar(value)}")


def _axiom_payload(report, chart):
    failures = []
    for arity, key, residual in report.failures:
        failures.append(
            {
                "arity": arity,
                "inputs": list(key),
                "residual": {name: chart.format(residual[name]) for name in sorted(residual)},
            }
        )
    return {"passed": report.passed, "failures": failures}


def _thread_count():
    raw = os.environ.get("DERIVE_THREADS", "1")
    try:
        count = int(raw)
    except ValueError:
        raise SchemaError(f"DERIVE_THREADS must be an integer, got {raw!r}") from None
    return max(count, 1)


def _map_points(fn, items):
    items = list(items)
    workers = _thread_count()
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _one_file(docs, command):
    if len(docs) != 1:
        raise SchemaError(f"{command} takes exactly one file, got {len(docs)}")
    return docs[0]


def _resolve_points(args, doc_points, chart, command, required=False):
    if args.points is not None:
        raw = _load_json(args.points)
        _envelope(raw, "points", args.points)
        return tuple(
            _point(p, chart, f"{args.points}.points[{i}]")
            for i, p in enumerate(_need_list(raw, "points", args.points))
        )
    if doc_points:
        return doc_points
    if required:
        raise SchemaError(f"{command} needs --points or a points block in the chart file")
    return ()


# --- commands --------------------------------------------------------------------


def _cmd_check(docs, args):
    checks = []
    all_passed = True
    for path, raw in docs:
        kind = raw.get("kind") if isinstance(raw, dict) else None
        if kind == "chart":
            parsed = parse_chart_document(raw, path)
            report = check_structure(parsed.structure)
            payload = _axiom_payload(report, parsed.chart)
        elif kind == "morphism":
            morphism, source, target = parse_morphism_document(raw, path)
            report = check_morphism(morphism, source.structure, target.structure)
            payload = _axiom_payload(report, morphism.source_chart)
        else:
            raise SchemaError(f"{path}.kind: check accepts charts and morphisms, got {kind!r}")
        checks.append({"file": path, "kind": kind, **payload})
        all_passed = all_passed and report.passed
    return all_passed, {"checks": checks}


def _parse_filtration(raw, where):
    kind = _need_str(raw, "kind", where)
    if kind == "natural":
        return FiltrationSpec.natural()
    if kind == "variation":
        return FiltrationSpec.variation(_need_int(raw, "level", where))
    if kind == "custom":
        levels = _need_map(raw, "levels", where)
        for name, level in levels.items():
            if not isinstance(level, int) or isinstance(level, bool):
                raise SchemaError(f"{where}.levels.{name}: expected an integer")
        return FiltrationSpec.custom(levels)
    raise SchemaError(f"{where}.kind: unknown filtration kind {kind!r}")


def _cmd_transfer(docs, args):
    path, raw = _one_file(docs, "transfer")
    _envelope(raw, "transfer", path)
    parsed = parse_chart_document(_need_map(raw, "chart", path), f"{path}.chart")
    block = _need_map(raw, "contraction", path)
    bundle, chart = parsed.bundle, parsed.chart
    pieces = {}
    for label, degree in (("delta", 1), ("eta", -1)):
        entries = _need_list(block, label, f"{path}.contraction")
        tables = _parse_operation_entries(
            entries, bundle, bundle, chart, degree, f"{path}.contraction.{label}", fixed_arity=1
        )
        table = tables.get(1, {})
        try:
            pieces[label] = MultiOp.from_table(bundle, bundle, chart, 1, degree, table)
        except ValueError as err:
            raise SchemaError(f"{path}.contraction.{label}: {err}") from None
    filtration = _parse_filtration(
        _need_map(block, "filtration", f"{path}.contraction"), f"{path}.contraction.filtration"
    )
    contraction = ContractionData(bundle, pieces["delta"], pieces["eta"], filtration)
    total = parsed.structure.total()
    operations = total.copy()
    operations.set(1, total.get(1) - pieces["delta"])
    structure = CurvedStructure(bundle, operations, differential=pieces["delta"])
    result = transfer_structure(structure, contraction)
    structure_report = check_structure(result.h_structure)
    morphism_report = check_morphism(result.phi, result.h_structure, structure)
    payload = {
        "transferred": chart_document(result.h_structure),
        "phi": _family_entries(result.phi.phi, chart),
        "pi1": _family_entries_single(result.pi1_tilde, chart),
        "diagnostics": {k: result.diagnostics[k] for k in sorted(result.diagnostics)},
        "structure_check": _axiom_payload(structure_report, chart),
        "morphism_check": _axiom_payload(morphism_report, chart),
    }
    return structure_report.passed and morphism_report.passed, payload


def _family_entries_single(op, chart):
    out = []
    for key in sorted(op.entries):
        bucket = op.entries[key]
        out.append(
            {
                "arity": op.arity,
                "inputs": list(key),
                "output": {name: chart.format(bucket[name]) for name in sorted(bucket)},
            }
        )
    return out


def _cmd_tangent(docs, args):
    path, raw = _one_file(docs, "tangent")
    parsed = parse_chart_document(raw, path)
    dc = parsed.derived()
    points = _resolve_points(args, parsed.points, parsed.chart, "tangent", required=True)

    def at_point(point):
        try:
            tc = tangent_complex(dc, point)
        except ValueError as err:
            return {"point": [str(v) for v in point], "classical": False, "witness": str(err)}
        return {
            "point": [str(v) for v in point],
            "classical": True,
            "terms": list(tc.terms),
            "cohomology": complex_cohomology(tc),
        }

    results = _map_points(at_point, points)
    return all(r["classical"] for r in results), {"points": results}


def _cmd_vdim(docs, args):
    values = []
    for path, raw in docs:
        parsed = parse_chart_document(raw, path)
        values.append({"file": path, "vdim": virtual_dimension(parsed.derived())})
    return True, {"charts": values}


def _cmd_pathspace(docs, args):
    path, raw = _one_file(docs, "pathspace")
    parsed = parse_chart_document(raw, path)
    dc = parsed.derived()
    pm = derived_path_space(dc)
    space = PolyPath.symbolic(dc)
    contraction_report = PathContraction(space).verify(args.degree_cap)
    square = section_square_failures(space, args.degree_cap)
    square_payload = {
        "passed": not square,
        "failures": [
            {"arity": arity, "inputs": [list(piece) for piece in key]}
            for arity, key, _ in square
        ],
    }
    vdim_source = virtual_dimension(dc)
    vdim_path = virtual_dimension(pm.derived)
    payload = {
        "path_chart": chart_document(pm.derived.structure),
        "vdim": vdim_path,
        "vdim_source": vdim_source,
        "vdim_matches": vdim_path == vdim_source,
        "max_operation_arity": pm.derived.structure.total().max_arity(),
        "inclusion": morphism_document(
            pm.inclusion, chart_document(dc.structure), chart_document(pm.derived.structure)
        ),
        "projection": morphism_document(
            pm.projection,
            chart_document(pm.derived.structure),
            chart_document(pm.product.structure),
        ),
        "contraction_identities": {
            "passed": contraction_report.passed,
            "failures": [list(map(str, f)) for f in contraction_report.failures],
        },
        "section_square_zero": square_payload,
    }
    passed = payload["vdim_matches"] and contraction_report.passed and not square
    return passed, payload


def _cmd_factorize(docs, args):
    path, raw = _one_file(docs, "factorize")
    parsed = parse_chart_document(raw, path)
    dc = parsed.derived()
    points = _resolve_points(args, parsed.points, parsed.chart, "factorize")
    reports = factorization_check(dc, points)
    payload = {
        name: {"passed": reports[name].passed, "failures": [list(map(str, f)) for f in reports[name].failures]}
        for name in sorted(reports)
    }
    return all(r.passed for r in reports.values()), {"reports": payload, "points_checked": len(points)}


def _parse_submanifold(raw, ambient, where):
    presentation = _need_str(raw, "presentation", where)
    try:
        if presentation == "affine_map":
            params = Chart(_name_list(_need_list(raw, "parameters", where), f"{where}.parameters"))
            components = [
                _chart_poly(params, c, f"{where}.components[{i}]")
                for i, c in enumerate(_need_list(raw, "components", where))
            ]
            return AffineSubmanifold.from_affine_map(ambient, params, components)
        if presentation == "zero_locus":
            equations = [
                _chart_poly(ambient, e, f"{where}.equations[{i}]")
                for i, e in enumerate(_need_list(raw, "equations", where))
            ]
            names = None
            if "parameters" in raw:
                names = _name_list(_need_list(raw, "parameters", where), f"{where}.parameters")
            return AffineSubmanifold.from_zero_locus(ambient, equations, names)
        if presentation == "graph":
            values = _need_list(raw, "values", where)
            split = ambient.nvars - len(values)
            if split < 0:
                raise SchemaError(f"{where}.values: more values than ambient coordinates")
            params = Chart(ambient.coords[:split])
            polys = [
                _chart_poly(params, v, f"{where}.values[{i}]") for i, v in enumerate(values)
            ]
            return AffineSubmanifold.graph(ambient, polys)
    except ValueError as err:
        if isinstance(err, SchemaError):
            raise
        raise SchemaError(f"{where}: {err}") from None
    raise SchemaError(f"{where}.presentation: unknown presentation {presentation!r}")


def _cmd_intersect(docs, args):
    path, raw = _one_file(docs, "intersect")
    _envelope(raw, "intersection", path)
    ambient_block = _need_map(raw, "ambient", path)
    coords = _name_list(
        _need_list(ambient_block, "coordinates", f"{path}.ambient"), f"{path}.ambient.coordinates"
    )
    ambient = Chart(coords)
    left = _parse_submanifold(_need_map(raw, "left", path), ambient, f"{path}.left")
    right = _parse_submanifold(_need_map(raw, "right", path), ambient, f"{path}.right")
    result = derived_intersection(ambient, left, right)
    dc = result.chart
    samples = []
    if "samples" in raw:
        for i, entry in enumerate(_need_list(raw, "samples", path)):
            at = f"{path}.samples[{i}]"
            if not isinstance(entry, dict):
                raise SchemaError(f"{at}: expected a mapping with left and right points")
            lp = _point(_need_list(entry, "left", at), left.params, f"{at}.left")
            rp = _point(_need_list(entry, "right", at), right.params, f"{at}.right")
            samples.append((lp, rp))

    def at_sample(pair):
        lp, rp = pair
        classical = is_classical_point(dc, lp + rp)
        set_theoretic = left.embed(lp) == right.embed(rp)
        entry = {
            "left": [str(v) for v in lp],
            "right": [str(v) for v in rp],
            "classical": classical,
            "set_theoretic": set_theoretic,
            "match": classical == set_theoretic,
        }
        if classical:
            entry["cohomology"] = complex_cohomology(tangent_complex(dc, lp + rp))
        return entry

    checked = _map_points(at_sample, samples)
    payload = {
        "chart": chart_document(dc.structure),
        "vdim": virtual_dimension(dc),
        "left_dim": left.dim,
        "right_dim": right.dim,
        "samples": checked,
    }
    return all(entry["match"] for entry in checked), payload


def _cmd_pullback(docs, args):
    path, raw = _one_file(docs, "pullback")
    _envelope(raw, "pullback", path)
    fibration, fib_source, fib_target = parse_morphism_document(
        _need_map(raw, "fibration", path), f"{path}.fibration"
    )
    base_change, change_source, change_target = parse_morphism_document(
        _need_map(raw, "base_change", path), f"{path}.base_change"
    )
    result = pullback_fibration(
        fibration, fib_source.derived(), base_change, change_source.derived()
    )
    payload = {
        "chart": chart_document(result.chart.structure),
        "vdim": virtual_dimension(result.chart),
        "projection": morphism_document(
            result.projection,
            chart_document(result.chart.structure),
            chart_document(change_source.structure),
        ),
        "comparison": morphism_document(
            result.comparison,
            chart_document(result.chart.structure),
            chart_document(fib_source.structure),
        ),
    }
    return True, payload


def _cmd_invert(docs, args):
    path, raw = _one_file(docs, "invert")
    morphism, source, target = parse_morphism_document(raw, path)
    inverse_morphism = invert_morphism(morphism)
    payload = {
        "inverse": morphism_document(
            inverse_morphism,
            chart_document(target.structure),
            chart_document(source.structure),
        )
    }
    return True, payload


def _cmd_strictify(docs, args):
    path, raw = _one_file(docs, "strictify")
    morphism, source, target = parse_morphism_document(raw, path)
    iso, linear, new_source = strictify_fibration(morphism, source.structure, target.structure)
    source_doc = chart_document(source.structure)
    target_doc = chart_document(target.structure)
    new_doc = chart_document(new_source)
    payload = {
        "source": new_doc,
        "iso": morphism_document(iso, source_doc, new_doc),
        "linear": morphism_document(linear, new_doc, target_doc),
    }
    return True, payload


def _iso_in_degrees(morphism, low):
    top = max(morphism.source_bundle.amplitude, morphism.target_bundle.amplitude)
    phi1 = morphism.phi.get(1)
    for degree in range(low, top + 1):
        src = morphism.source_bundle.basis(degree)
        tgt = morphism.target_bundle.basis(degree)
        if len(src) != len(tgt):
            return False
        if not src:
            continue
        block = as_constant(linear_block(phi1, degree))
        if block is None or inverse([list(row) for row in block]) is None:
            return False
    return True


def _cmd_reduce(docs, args):
    path, raw = _one_file(docs, "reduce")
    morphism, source, target = parse_morphism_document(raw, path)
    current = morphism
    structure = source.structure
    steps = []
    for level in range(structure.bundle.amplitude, 1, -1):
        if level > structure.bundle.amplitude:
            continue
        reduced, _, composite = reduce_fibration_step(current, structure, target.structure, level)
        current = composite
        structure = reduced
        steps.append(
            {
                "level": level,
                "bundle": [
                    {"degree": degree, "names": list(names)}
                    for degree, names in sorted(structure.bundle.degrees.items())
                ],
            }
        )
    iso = _iso_in_degrees(current, 2)
    payload = {
        "steps": steps,
        "final": chart_document(structure),
        "composite": morphism_document(
            current, chart_document(structure), chart_document(target.structure)
        ),
        "iso_in_degrees_from_2": iso,
    }
    return iso, payload


def _families_match(a, b):
    for arity in set(a.arities()) | set(b.arities()):
        if not (a.get(arity) - b.get(arity)).is_zero():
            return False
    return True


def _cmd_cdga(docs, args):
    path, raw = _one_file(docs, "cdga")
    parsed = parse_chart_document(raw, path)
    structure = parsed.structure
    derivation = to_derivation(structure)
    square_report = derivation_square_failures(derivation)
    structure_report = check_structure(structure)
    roundtrip = from_derivation(derivation)
    chart = parsed.chart

    def element_entries(element):
        return [
            {"monomial": list(key), "coefficient": chart.format(element[key])}
            for key in sorted(element)
        ]

    generators = [
        {"generator": name, "output": element_entries(derivation.image(name))}
        for name in parsed.bundle.names
    ]
    payload = {
        "generators": generators,
        "square_zero": square_report.passed,
        "square_failures": [
            {"generator": name, "residual": element_entries(residual)}
            for name, residual in square_report.failures
        ],
        "structure_passes": structure_report.passed,
        "biconditional": square_report.passed == structure_report.passed,
        "roundtrip": _families_match(roundtrip.total(), structure.total()),
    }
    return payload["biconditional"] and payload["roundtrip"], payload


_COMMANDS = {
    "check": _cmd_check,
    "transfer": _cmd_transfer,
    "tangent": _cmd_tangent,
    "vdim": _cmd_vdim,
    "pathspace": _cmd_pathspace,
    "factorize": _cmd_factorize,
    "intersect": _cmd_intersect,
    "pullback": _cmd_pullback,
    "invert": _cmd_invert,
    "strictify": _cmd_strictify,
    "reduce": _cmd_reduce,
    "cdga": _cmd_cdga,
}


# --- entry point ------------------------------------------------------------------


def _load_json(path):
    try:
        with open(path, "r", encoding="utf-8") as handle:
            return json.load(handle)
    except OSError as err:
        raise SchemaError(f"{path}: cannot read ({err})") from None
    except json.JSONDecodeError as err:
        raise SchemaError(f"{path}: invalid JSON ({err})") from None


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="derive",
        description="Exact batch checks and constructions on chart documents.",
    )
    parser.add_argument("command", choices=COMMANDS, help="operation to run")
    parser.add_argument("files", nargs="+", metavar="FILE", help="input documents")
    parser.add_argument("--points", metavar="FILE", help="points document for diagnostics")
    parser.add_argument(
        "--degree-cap", type=int, default=None, metavar="N", dest="degree_cap",
        help="parameter-degree cap for section-level verifications",
    )
    parser.add_argument(
        "--report", choices=("text", "json"), default="text", help="output format"
    )
    return parser


def run(args):
    """Execute a parsed command line; returns (exit code, Report)."""
    started = time.perf_counter()
    try:
        docs = [(path, _load_json(path)) for path in args.files]
        passed, payload = _COMMANDS[args.command](docs, args)
        code = 0 if passed else 1
    except SchemaError as err:
        passed, payload, code = False, {"error": str(err)}, 2
    except ValueError as err:
        passed, payload, code = False, {"error": str(err)}, 1
    report = Report(args.command, args.files, passed, payload, time.perf_counter() - started)
    return code, report


def main(argv=None):
    args = _build_parser().parse_args(argv)
    code, report = run(args)
    sys.stdout.write(report.render(args.report) + "\n")
    sys.stderr.write(f"elapsed: {report.elapsed:.3f}s\n")
    return code
