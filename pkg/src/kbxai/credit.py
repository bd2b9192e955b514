"""Synthetic credit-assessment study: feature grid, rule table, fixtures.

Three ordinal applicant features drive a first-match rule table that labels
each grid point accept/reject and assigns its explanation category. The
grid is X1 (job stability) in 2..5, X2 (credit score band) in 0..3, and
X3 (debt-to-income band) in 0..3: 64 points in total.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from typing import Mapping

import numpy as np

from .casebase import (
    AGENT_INPUT,
    AGENT_OUTPUT,
    NOMINAL,
    NUMERIC,
    CaseBase,
    ExplanationCategory,
    FeatureSchema,
    build_from_log,
)
from .extension import compile_expr

GRID_FEATURES = ("X1", "X2", "X3")
GRID_VALUES = {"X1": (2, 3, 4, 5), "X2": (0, 1, 2, 3), "X3": (0, 1, 2, 3)}
DECISIONS = ("accept", "reject")


class CreditError(ValueError):
    """Raised for invalid rule tables or generation requests."""


def _input_schemas() -> tuple[FeatureSchema, ...]:
    return tuple(
        FeatureSchema(name=name, kind=NUMERIC, origin=AGENT_INPUT)
        for name in GRID_FEATURES
    )


@dataclass(frozen=True)
class CreditRule:
    """One row of the table: condition over X1..X3, decision, and its EC."""

    ec_id: str
    ec_text: str
    decision: str
    condition: object
    note: str = ""

    def matches(self, problem: Mapping[str, float]) -> bool:
        return self.condition.evaluate(problem, output_name="label")


@dataclass(frozen=True)
class CreditRuleTable:
    """Ordered rule list; the first matching rule decides a grid point."""

    rules: tuple[CreditRule, ...]

    def __post_init__(self) -> None:
        ids = [r.ec_id for r in self.rules]
        if len(set(ids)) != len(ids):
            raise CreditError("duplicate ec_id in rule table")
        for rule in self.rules:
            if rule.decision not in DECISIONS:
                raise CreditError(
                    f"rule {rule.ec_id!r}: decision must be accept or reject"
                )

    def classify(self, point: Mapping[str, float]) -> CreditRule:
        for rule in self.rules:
            if rule.matches(point):
                return rule
        raise CreditError(f"rule table does not cover grid point {dict(point)!r}")


def rule_table_from_json(doc: Mapping) -> CreditRuleTable:
    schemas = _input_schemas()
    rules = []
    for entry in doc["rules"]:
        condition = compile_expr(entry["condition"], {s.name: s for s in schemas},
                                 allow_label=False)
        rules.append(
            CreditRule(
                ec_id=entry["ec_id"],
                ec_text=entry["ec_text"],
                decision=entry["decision"],
                condition=condition,
                note=entry.get("note", ""),
            )
        )
    return CreditRuleTable(rules=tuple(rules))


def load_rule_table(path) -> CreditRuleTable:
    with open(path, "r", encoding="utf-8") as fh:
        return rule_table_from_json(json.load(fh))


def default_rule_table() -> CreditRuleTable:
    """The shipped 15-rule table (15 explanation categories)."""
    doc = json.loads(
        resources.files("kbxai.fixtures")
        .joinpath("credit_rules_default.json")
        .read_text(encoding="utf-8")
    )
    return rule_table_from_json(doc)


def default_supplemental_rules() -> list[dict]:
    """The shipped supplemental feature rules for the credit study."""
    return json.loads(
        resources.files("kbxai.fixtures")
        .joinpath("credit_supplemental.json")
        .read_text(encoding="utf-8")
    )


def enumerate_grid() -> list[dict[str, float]]:
    """All 64 grid points in lexicographic (X1, X2, X3) order."""
    points = []
    for x1 in GRID_VALUES["X1"]:
        for x2 in GRID_VALUES["X2"]:
            for x3 in GRID_VALUES["X3"]:
                points.append({"X1": float(x1), "X2": float(x2), "X3": float(x3)})
    return points


def gen_credit_cases(
    table: CreditRuleTable | None = None,
    take: int | None = None,
    seed: int | None = None,
) -> CaseBase:
    """Generate the credit case base from the rule table.

    Enumerates the 64 grid points in lexicographic order, labels each via
    the first matching rule, and optionally subsamples `take` points with
    the seeded generator (enumeration order preserved). A non-total table
    fails naming the uncovered point.
    """
    if table is None:
        table = default_rule_table()
    points = enumerate_grid()
    records = []
    for point in points:
        rule = table.classify(point)
        records.append((point, rule.decision, rule.ec_id))
    if take is not None:
        if not (1 <= take <= len(records)):
            raise CreditError(f"take must be in 1..{len(records)}, got {take}")
        rng = np.random.default_rng(seed)
        keep = sorted(int(i) for i in rng.choice(len(records), size=take, replace=False))
        records = [records[i] for i in keep]
    schemas = _input_schemas() + (
        FeatureSchema(
            name="label",
            kind=NOMINAL,
            origin=AGENT_OUTPUT,
            declared_values=DECISIONS,
        ),
    )
    ecs = tuple(
        ExplanationCategory(id=rule.ec_id, text=rule.ec_text) for rule in table.rules
    )
    return build_from_log(records, schemas, ecs)
