"""Case-base data model: cases, feature schemas, explanation categories.

A case pairs an agent input-output problem with the explanation category
that accounts for it. Case bases are immutable; every mutating operation
returns a new value, so they are safe to share across parallel workers.

Feature values are plain Python objects: ``str`` for nominal symbols,
``float``/``int`` for numeric and boolean features, ``None`` for missing.
Missing values are permitted only on supplemental columns.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, replace
from typing import Iterable, Mapping, Sequence

NOMINAL = "nominal"
NUMERIC = "numeric"
BOOLEAN = "boolean"
KINDS = (NOMINAL, NUMERIC, BOOLEAN)

AGENT_INPUT = "agent_input"
AGENT_OUTPUT = "agent_output"
SUPPLEMENTAL = "supplemental"
ORIGINS = (AGENT_INPUT, AGENT_OUTPUT, SUPPLEMENTAL)

# Column names used by the case-base CSV layout; features cannot shadow them.
RESERVED_COLUMNS = ("id", "label", "ec")

FeatureValue = str | float | int | None


class CaseBaseError(ValueError):
    """Raised when a case base or an operation on one violates its contract."""


@dataclass(frozen=True)
class FeatureSchema:
    """Declares one feature: its kind governs the local similarity function.

    observed_range is maintained for numeric features only and always equals
    the actual min/max over the owning case base (None when every value is
    missing). declared_values optionally enumerates nominal symbols.
    """

    name: str
    kind: str
    origin: str = SUPPLEMENTAL
    observed_range: tuple[float, float] | None = None
    declared_values: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        if not self.name:
            raise CaseBaseError("feature name must be non-empty")
        if self.kind not in KINDS:
            raise CaseBaseError(f"unknown feature kind {self.kind!r}")
        if self.origin not in ORIGINS:
            raise CaseBaseError(f"unknown feature origin {self.origin!r}")
        if self.observed_range is not None:
            if self.kind != NUMERIC:
                raise CaseBaseError(
                    f"observed_range only applies to numeric features, not {self.kind}"
                )
            lo, hi = self.observed_range
            if not (math.isfinite(lo) and math.isfinite(hi)) or lo > hi:
                raise CaseBaseError(f"invalid observed_range {self.observed_range!r}")
        if self.declared_values is not None and self.kind != NOMINAL:
            raise CaseBaseError("declared_values only applies to nominal features")


@dataclass(frozen=True)
class Case:
    """One agent input-output pair mapped to its explanation category."""

    id: str
    problem: Mapping[str, FeatureValue]
    solution: str


@dataclass(frozen=True)
class ExplanationCategory:
    """A reusable textual explanation covering one-to-many classifications."""

    id: str
    text: str
    exemplar_refs: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        if not self.id:
            raise CaseBaseError("explanation category id must be non-empty")
        if not self.text:
            raise CaseBaseError(f"explanation category {self.id!r} has empty text")


def check_value(schema: FeatureSchema, value: FeatureValue) -> FeatureValue:
    """Validate and canonicalize a value against a schema.

    Numeric values become float, boolean 0/1 become int, nominal stay str.
    None passes through (missing).
    """
    if value is None:
        return None
    if schema.kind == NOMINAL:
        if not isinstance(value, str):
            raise CaseBaseError(
                f"feature {schema.name!r} is nominal but got {value!r}"
            )
        return value
    if isinstance(value, bool):
        value = int(value)
    if not isinstance(value, (int, float)):
        raise CaseBaseError(f"feature {schema.name!r} expects a number, got {value!r}")
    if schema.kind == BOOLEAN:
        if value not in (0, 1):
            raise CaseBaseError(
                f"feature {schema.name!r} is boolean but got {value!r}"
            )
        return int(value)
    value = float(value)
    if not math.isfinite(value):
        raise CaseBaseError(f"feature {schema.name!r} must be finite, got {value!r}")
    return value


@dataclass(frozen=True)
class CaseBase:
    """Immutable collection of schemas, cases, and the EC registry.

    Construction validates the structural invariants: unique names and ids,
    exactly one agent_output schema, every problem covering every schema,
    registered solutions, and observed ranges equal to the actual min/max.
    """

    schemas: tuple[FeatureSchema, ...]
    cases: tuple[Case, ...]
    ec_registry: tuple[ExplanationCategory, ...]

    def __post_init__(self) -> None:
        names = [s.name for s in self.schemas]
        if len(set(names)) != len(names):
            raise CaseBaseError("duplicate feature names in schema set")
        outputs = [s for s in self.schemas if s.origin == AGENT_OUTPUT]
        if len(outputs) != 1:
            raise CaseBaseError(
                f"case base needs exactly one agent_output feature, found {len(outputs)}"
            )
        for s in self.schemas:
            if s.name in RESERVED_COLUMNS and s.origin != AGENT_OUTPUT:
                raise CaseBaseError(f"feature name {s.name!r} is reserved")
        ec_ids = [e.id for e in self.ec_registry]
        if len(set(ec_ids)) != len(ec_ids):
            raise CaseBaseError("duplicate explanation category ids")
        known_ecs = set(ec_ids)
        case_ids = set()
        schema_map = {s.name: s for s in self.schemas}
        for case in self.cases:
            if case.id in case_ids:
                raise CaseBaseError(f"duplicate case id {case.id!r}")
            case_ids.add(case.id)
            if case.solution not in known_ecs:
                raise CaseBaseError(
                    f"case {case.id!r} references unregistered EC {case.solution!r}"
                )
            if set(case.problem) != set(names):
                extra = set(case.problem) - set(names)
                missing = set(names) - set(case.problem)
                raise CaseBaseError(
                    f"case {case.id!r} does not match the schema set"
                    f" (unknown: {sorted(extra)}, absent: {sorted(missing)})"
                )
            for fname, value in case.problem.items():
                schema = schema_map[fname]
                if value is None and schema.origin != SUPPLEMENTAL:
                    raise CaseBaseError(
                        f"case {case.id!r}: missing value on non-supplemental"
                        f" feature {fname!r}"
                    )
                check_value(schema, value)
        for schema in self.schemas:
            if schema.kind != NUMERIC:
                continue
            expected = _observed_range(schema.name, self.cases)
            if expected != schema.observed_range:
                raise CaseBaseError(
                    f"feature {schema.name!r}: observed_range {schema.observed_range}"
                    f" does not match actual {expected}"
                )

    def schema_index(self) -> dict[str, FeatureSchema]:
        return {s.name: s for s in self.schemas}

    def schema(self, name: str) -> FeatureSchema:
        for s in self.schemas:
            if s.name == name:
                return s
        raise CaseBaseError(f"unknown feature {name!r}")

    def output_schema(self) -> FeatureSchema:
        return next(s for s in self.schemas if s.origin == AGENT_OUTPUT)

    def agent_feature_names(self) -> tuple[str, ...]:
        """Input and output feature names, in schema order."""
        return tuple(
            s.name for s in self.schemas if s.origin in (AGENT_INPUT, AGENT_OUTPUT)
        )

    def supplemental_names(self) -> tuple[str, ...]:
        return tuple(s.name for s in self.schemas if s.origin == SUPPLEMENTAL)

    def ec(self, ec_id: str) -> ExplanationCategory:
        for e in self.ec_registry:
            if e.id == ec_id:
                return e
        raise CaseBaseError(f"unknown explanation category {ec_id!r}")

    def case(self, case_id: str) -> Case:
        for c in self.cases:
            if c.id == case_id:
                return c
        raise CaseBaseError(f"unknown case {case_id!r}")

    def class_sizes(self) -> dict[str, int]:
        sizes: dict[str, int] = {}
        for c in self.cases:
            sizes[c.solution] = sizes.get(c.solution, 0) + 1
        return sizes


def _observed_range(name: str, cases: Sequence[Case]) -> tuple[float, float] | None:
    values = [c.problem[name] for c in cases if c.problem.get(name) is not None]
    if not values:
        return None
    return (float(min(values)), float(max(values)))


def _with_ranges(
    schemas: Iterable[FeatureSchema], cases: Sequence[Case]
) -> tuple[FeatureSchema, ...]:
    out = []
    for schema in schemas:
        if schema.kind == NUMERIC:
            schema = replace(schema, observed_range=_observed_range(schema.name, cases))
        out.append(schema)
    return tuple(out)


def build_from_log(
    records: Sequence[tuple[Mapping[str, FeatureValue], FeatureValue, str]],
    schemas: Sequence[FeatureSchema],
    ecs: Sequence[ExplanationCategory],
) -> CaseBase:
    """Build a case base from agent log records.

    Each record is (input features, output label, ec id). Case ids are
    assigned in input order; duplicated records are preserved as distinct
    cases. Numeric observed ranges are computed from the data.
    """
    if not records:
        raise CaseBaseError("cannot build a case base from an empty record list")
    registered = {e.id for e in ecs}
    if not registered:
        raise CaseBaseError("empty explanation category registry")
    schema_map = {s.name: s for s in schemas}
    output = [s for s in schemas if s.origin == AGENT_OUTPUT]
    if len(output) != 1:
        raise CaseBaseError("schemas must declare exactly one agent_output feature")
    output_name = output[0].name
    cases = []
    for i, (features, label, ec_id) in enumerate(records):
        if ec_id not in registered:
            raise CaseBaseError(f"record {i}: unregistered EC {ec_id!r}")
        problem: dict[str, FeatureValue] = {}
        for fname, value in features.items():
            if fname not in schema_map:
                raise CaseBaseError(f"record {i}: unknown feature {fname!r}")
            if fname == output_name:
                raise CaseBaseError(
                    f"record {i}: the output feature {fname!r} is set via the label"
                )
            problem[fname] = check_value(schema_map[fname], value)
        problem[output_name] = check_value(schema_map[output_name], label)
        for schema in schemas:
            if schema.name not in problem:
                if schema.origin == SUPPLEMENTAL:
                    problem[schema.name] = None
                else:
                    raise CaseBaseError(
                        f"record {i}: no value for feature {schema.name!r}"
                    )
        cases.append(Case(id=f"c{i:04d}", problem=problem, solution=ec_id))
    return CaseBase(
        schemas=_with_ranges(schemas, cases),
        cases=tuple(cases),
        ec_registry=tuple(ecs),
    )


INPUT_ID = "input_id"


def _canonical_input(case: Case, input_names: Sequence[str]) -> str:
    # Byte-equality of this serialization defines input identity.
    parts = []
    for name in input_names:
        value = case.problem[name]
        parts.append("" if value is None else format_value(value))
    return "\x1f".join(parts)


def nominalize_input(case_base: CaseBase) -> CaseBase:
    """Collapse all agent inputs into a single opaque nominal feature.

    Byte-identical inputs map to the same symbol, distinct inputs to
    distinct symbols. Symbols are assigned in order of first occurrence,
    which makes the operation idempotent.
    """
    input_names = [s.name for s in case_base.schemas if s.origin == AGENT_INPUT]
    if not input_names:
        raise CaseBaseError("case base has no agent_input feature to nominalize")
    symbols: dict[str, str] = {}
    new_cases = []
    for case in case_base.cases:
        key = _canonical_input(case, input_names)
        if key not in symbols:
            symbols[key] = f"in{len(symbols):04d}"
        problem = {INPUT_ID: symbols[key]}
        for name, value in case.problem.items():
            if name not in input_names:
                problem[name] = value
        new_cases.append(replace(case, problem=problem))
    new_schemas = [FeatureSchema(name=INPUT_ID, kind=NOMINAL, origin=AGENT_INPUT)]
    for schema in case_base.schemas:
        if schema.origin != AGENT_INPUT:
            new_schemas.append(schema)
    return CaseBase(
        schemas=_with_ranges(new_schemas, new_cases),
        cases=tuple(new_cases),
        ec_registry=case_base.ec_registry,
    )


def attach_feature(
    case_base: CaseBase,
    name: str,
    values: Mapping[str, FeatureValue],
    kind: str,
) -> CaseBase:
    """Attach a supplemental column keyed by case id.

    Case ids absent from the mapping get a missing value; ids unknown to the
    case base are an error. Existing values and solutions are untouched.
    """
    if any(s.name == name for s in case_base.schemas):
        raise CaseBaseError(f"feature {name!r} already exists")
    known = {c.id for c in case_base.cases}
    unknown = set(values) - known
    if unknown:
        raise CaseBaseError(f"values reference unknown case ids: {sorted(unknown)}")
    schema = FeatureSchema(name=name, kind=kind, origin=SUPPLEMENTAL)
    new_cases = []
    for case in case_base.cases:
        value = check_value(schema, values.get(case.id))
        problem = dict(case.problem)
        problem[name] = value
        new_cases.append(replace(case, problem=problem))
    return CaseBase(
        schemas=_with_ranges(list(case_base.schemas) + [schema], new_cases),
        cases=tuple(new_cases),
        ec_registry=case_base.ec_registry,
    )


# ---------------------------------------------------------------------------
# Serialization: case-base CSV + schema JSON, and id,value feature columns.
# ---------------------------------------------------------------------------


def format_value(value: FeatureValue) -> str:
    """Canonical text form of a value: exact round-trip for floats."""
    if value is None:
        return ""
    if isinstance(value, str):
        return value
    value = float(value)
    if value == int(value) and abs(value) < 1e15:
        return str(int(value))
    return repr(value)


def _quote(text: str) -> str:
    return '"' + text.replace('"', '""') + '"'


def _format_field(schema: FeatureSchema, value: FeatureValue) -> str:
    if value is None:
        return ""
    if schema.kind == NOMINAL:
        return _quote(str(value))
    return format_value(value)


def _parse_field(schema: FeatureSchema, text: str) -> FeatureValue:
    if text == "":
        return None
    if schema.kind == NOMINAL:
        return text
    if schema.kind == BOOLEAN:
        return check_value(schema, float(text))
    return float(text)


def schema_to_json(case_base: CaseBase) -> dict:
    features = []
    for s in case_base.schemas:
        entry: dict = {"name": s.name, "kind": s.kind, "origin": s.origin}
        if s.observed_range is not None:
            entry["range"] = [s.observed_range[0], s.observed_range[1]]
        if s.declared_values is not None:
            entry["values"] = list(s.declared_values)
        features.append(entry)
    ecs = []
    for e in case_base.ec_registry:
        entry = {"id": e.id, "text": e.text}
        if e.exemplar_refs is not None:
            entry["exemplars"] = list(e.exemplar_refs)
        ecs.append(entry)
    return {"features": features, "ecs": ecs}


def schemas_from_json(doc: Mapping) -> tuple[
    tuple[FeatureSchema, ...], tuple[ExplanationCategory, ...]
]:
    schemas = []
    for entry in doc["features"]:
        rng = entry.get("range")
        values = entry.get("values")
        schemas.append(
            FeatureSchema(
                name=entry["name"],
                kind=entry["kind"],
                origin=entry.get("origin", SUPPLEMENTAL),
                observed_range=(float(rng[0]), float(rng[1])) if rng else None,
                declared_values=tuple(values) if values else None,
            )
        )
    ecs = []
    for entry in doc.get("ecs", []):
        exemplars = entry.get("exemplars")
        ecs.append(
            ExplanationCategory(
                id=entry["id"],
                text=entry["text"],
                exemplar_refs=tuple(exemplars) if exemplars else None,
            )
        )
    return tuple(schemas), tuple(ecs)


def save_case_base(case_base: CaseBase, csv_path, schema_path) -> None:
    """Write the `id,<feature...>,label,ec` CSV and its schema JSON."""
    output_name = case_base.output_schema().name
    feature_schemas = [s for s in case_base.schemas if s.origin != AGENT_OUTPUT]
    header = ["id"] + [s.name for s in feature_schemas] + ["label", "ec"]
    lines = [",".join(header)]
    output_schema = case_base.output_schema()
    for case in case_base.cases:
        fields = [_quote(case.id)]
        for schema in feature_schemas:
            fields.append(_format_field(schema, case.problem[schema.name]))
        fields.append(_format_field(output_schema, case.problem[output_name]))
        fields.append(_quote(case.solution))
        lines.append(",".join(fields))
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        fh.write("\n".join(lines) + "\n")
    with open(schema_path, "w", encoding="utf-8") as fh:
        json.dump(schema_to_json(case_base), fh, indent=2)
        fh.write("\n")


def load_case_base(csv_path, schema_path) -> CaseBase:
    """Load a case base saved by save_case_base (or hand-written to match)."""
    with open(schema_path, "r", encoding="utf-8") as fh:
        schemas, ecs = schemas_from_json(json.load(fh))
    schema_map = {s.name: s for s in schemas}
    output_name = next(s.name for s in schemas if s.origin == AGENT_OUTPUT)
    with open(csv_path, "r", encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise CaseBaseError(f"{csv_path}: empty case-base file")
    header = rows[0]
    if header[0] != "id" or header[-2:] != ["label", "ec"]:
        raise CaseBaseError(f"{csv_path}: malformed header {header!r}")
    feature_names = header[1:-2]
    for name in feature_names:
        if name not in schema_map:
            raise CaseBaseError(f"{csv_path}: column {name!r} not in schema file")
    cases = []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise CaseBaseError(f"{csv_path}:{lineno}: expected {len(header)} fields")
        problem: dict[str, FeatureValue] = {}
        for name, text in zip(feature_names, row[1:-2]):
            problem[name] = _parse_field(schema_map[name], text)
        problem[output_name] = _parse_field(schema_map[output_name], row[-2])
        cases.append(Case(id=row[0], problem=problem, solution=row[-1]))
    return CaseBase(schemas=tuple(schemas), cases=tuple(cases), ec_registry=tuple(ecs))


def save_feature_column(values: Mapping[str, FeatureValue], path) -> None:
    """Write an `id,value` column file, rows sorted by id."""
    lines = ["id,value"]
    for case_id in sorted(values):
        lines.append(f"{_quote(case_id)},{format_value(values[case_id])}")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


def load_feature_column(path, kind: str = NUMERIC) -> dict[str, FeatureValue]:
    """Read an `id,value` column file; empty value fields become missing."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["id", "value"]:
        raise CaseBaseError(f"{path}: expected an `id,value` header")
    probe = FeatureSchema(name="column", kind=kind)
    values: dict[str, FeatureValue] = {}
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != 2:
            raise CaseBaseError(f"{path}:{lineno}: expected 2 fields")
        case_id, text = row
        if case_id in values:
            raise CaseBaseError(f"{path}:{lineno}: duplicate id {case_id!r}")
        values[case_id] = _parse_field(probe, text)
    return values
