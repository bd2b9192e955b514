"""Case extension learning: rule-derived features and the ablation search.

Supplemental features enter a case base either as declarative boolean rules
over the base features and the agent's label, or as externally annotated
columns (casebase.attach_feature). The ablation search then measures every
feature subset's LOOCV accuracy against the agent-only baseline and flags
redundant pairs.
"""

from __future__ import annotations

import itertools
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Mapping, Sequence

from .casebase import (
    AGENT_OUTPUT,
    BOOLEAN,
    CaseBase,
    FeatureSchema,
    FeatureValue,
    attach_feature,
)
from .engine import (
    EvalConfig,
    ReliefFParams,
    WeightVector,
    default_relieff_params,
    loocv_accuracy,
    relieff_weights,
)


class RuleError(ValueError):
    """Raised for unparsable, unresolvable, or ill-typed feature rules."""


class AblationError(ValueError):
    """Raised when an ablation request violates its contract."""


ORDERING_OPS = ("<", "<=", ">", ">=")
ALL_OPS = ("==", "!=") + ORDERING_OPS


# --- rule expression tree ---------------------------------------------------


@dataclass(frozen=True)
class _FeatureAtom:
    feature: str
    op: str
    value: FeatureValue

    def evaluate(self, problem: Mapping[str, FeatureValue], output_name: str) -> bool:
        actual = problem[self.feature]
        if actual is None:
            # A missing operand never satisfies a comparison.
            return False
        if self.op == "==":
            return actual == self.value
        if self.op == "!=":
            return actual != self.value
        if self.op == "<":
            return actual < self.value
        if self.op == "<=":
            return actual <= self.value
        if self.op == ">":
            return actual > self.value
        return actual >= self.value


@dataclass(frozen=True)
class _LabelAtom:
    value: str

    def evaluate(self, problem: Mapping[str, FeatureValue], output_name: str) -> bool:
        return problem[output_name] == self.value


@dataclass(frozen=True)
class _All:
    children: tuple

    def evaluate(self, problem, output_name) -> bool:
        return all(c.evaluate(problem, output_name) for c in self.children)


@dataclass(frozen=True)
class _Any:
    children: tuple

    def evaluate(self, problem, output_name) -> bool:
        return any(c.evaluate(problem, output_name) for c in self.children)


@dataclass(frozen=True)
class _Not:
    child: object

    def evaluate(self, problem, output_name) -> bool:
        return not self.child.evaluate(problem, output_name)


@dataclass(frozen=True)
class FeatureRule:
    """A named boolean rule; derived features read 1 where it holds, else 0."""

    name: str
    expr: object

    def evaluate(self, problem: Mapping[str, FeatureValue], output_name: str) -> int:
        return 1 if self.expr.evaluate(problem, output_name) else 0


def compile_expr(
    node: Mapping,
    schemas: Mapping[str, FeatureSchema],
    allow_label: bool = True,
):
    """Compile one expression node against a schema index."""
    if not isinstance(node, Mapping):
        raise RuleError(f"expected an expression object, got {node!r}")
    keys = [k for k in ("all", "any", "not", "feat", "label") if k in node]
    if len(keys) != 1:
        raise RuleError(
            f"expression must have exactly one of all/any/not/feat/label: {dict(node)!r}"
        )
    kind = keys[0]
    if kind == "all":
        return _All(tuple(compile_expr(c, schemas, allow_label) for c in node["all"]))
    if kind == "any":
        return _Any(tuple(compile_expr(c, schemas, allow_label) for c in node["any"]))
    if kind == "not":
        return _Not(compile_expr(node["not"], schemas, allow_label))
    if kind == "label":
        if not allow_label:
            raise RuleError("label atoms are not allowed in this context")
        value = node["label"]
        if not isinstance(value, str):
            raise RuleError(f"label atom expects a string, got {value!r}")
        return _LabelAtom(value=value)
    feature = node["feat"]
    if feature not in schemas:
        raise RuleError(f"unknown feature {feature!r}")
    schema = schemas[feature]
    if schema.origin == AGENT_OUTPUT:
        raise RuleError(f"use a label atom for the output feature {feature!r}")
    op = node.get("op", "==")
    if op not in ALL_OPS:
        raise RuleError(f"unknown comparison operator {op!r}")
    if "value" not in node:
        raise RuleError(f"feature atom for {feature!r} is missing a value")
    value = node["value"]
    if schema.kind == "nominal":
        if op in ORDERING_OPS:
            raise RuleError(f"ordering comparison on nominal feature {feature!r}")
        if not isinstance(value, str):
            raise RuleError(f"nominal feature {feature!r} compares against strings")
    else:
        if isinstance(value, bool):
            value = int(value)
        if not isinstance(value, (int, float)):
            raise RuleError(f"feature {feature!r} compares against numbers")
        value = float(value)
    return _FeatureAtom(feature=feature, op=op, value=value)


def compile_rule(source: Mapping, schemas: Sequence[FeatureSchema]) -> FeatureRule:
    """Compile a JSON rule source into a validated FeatureRule.

    The source carries a "name" plus exactly one expression key
    (all/any/not/feat/label). Compilation is total and side-effect free.
    """
    if "name" not in source or not source["name"]:
        raise RuleError("rule source needs a non-empty name")
    body = {k: v for k, v in source.items() if k != "name"}
    index = {s.name: s for s in schemas}
    return FeatureRule(name=source["name"], expr=compile_expr(body, index))


def derive_feature(case_base: CaseBase, rule: FeatureRule) -> CaseBase:
    """Attach the rule's 0/1 evaluation as a boolean supplemental feature."""
    output_name = case_base.output_schema().name
    values = {
        case.id: rule.evaluate(case.problem, output_name)
        for case in case_base.cases
    }
    return attach_feature(case_base, rule.name, values, BOOLEAN)


def derive_features(case_base: CaseBase, sources: Sequence[Mapping]) -> CaseBase:
    """Compile and attach a list of rule sources in order."""
    for source in sources:
        rule = compile_rule(source, case_base.schemas)
        case_base = derive_feature(case_base, rule)
    return case_base


# --- ablation ---------------------------------------------------------------


@dataclass(frozen=True)
class AblationConfig:
    """Which supplemental candidates to ablate and how to evaluate them."""

    candidates: tuple[str, ...]
    max_subset_size: int
    knn_k: int = 1
    relieff: ReliefFParams | None = None
    strict_folds: bool = False
    redundancy_tau: float = 0.0
    force: bool = False

    def __post_init__(self) -> None:
        if not self.candidates:
            raise AblationError("candidates must be non-empty")
        if len(set(self.candidates)) != len(self.candidates):
            raise AblationError("duplicate candidate names")
        if not (1 <= self.max_subset_size <= len(self.candidates)):
            raise AblationError(
                "max_subset_size must be between 1 and the number of candidates"
            )


@dataclass(frozen=True)
class AblationRow:
    feature_set: tuple[str, ...]
    accuracy: float
    gain: float
    weights: WeightVector


@dataclass(frozen=True)
class RedundancyEntry:
    pair: tuple[str, str]
    index: float
    redundant: bool


@dataclass(frozen=True)
class AblationReport:
    """Accuracies, gains, weights, and redundancy for every evaluated subset.

    Rows are sorted by accuracy descending, then subset size, then name,
    so rows[0].feature_set is the best configuration (ties prefer the
    smallest set). The empty set row carries the baseline.
    """

    baseline: float
    rows: tuple[AblationRow, ...]
    redundancy: tuple[RedundancyEntry, ...]
    best: tuple[str, ...]
    knn_k: int
    strict_folds: bool


def _enumerate_subsets(
    candidates: Sequence[str], max_size: int
) -> list[tuple[str, ...]]:
    ordered = sorted(candidates)
    subsets: list[tuple[str, ...]] = [()]
    subsets.extend((name,) for name in ordered)
    for size in range(2, max_size + 1):
        subsets.extend(itertools.combinations(ordered, size))
    return subsets


def default_jobs() -> int:
    """Worker cap for row evaluation, from KBXAI_THREADS (default 1)."""
    raw = os.environ.get("KBXAI_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise AblationError(f"KBXAI_THREADS must be an integer, got {raw!r}")


def ablate(
    case_base: CaseBase, config: AblationConfig, n_jobs: int | None = None
) -> AblationReport:
    """Evaluate the empty set, every singleton, and every subset up to
    max_subset_size.

    Each row's active features are the agent features plus the subset, its
    weights are relearned for that feature set, and its accuracy is exactly
    loocv_accuracy for that configuration. Rows may evaluate in parallel;
    assembly is in enumeration order, so reports are worker-count invariant.
    """
    supplemental = set(case_base.supplemental_names())
    for name in config.candidates:
        if name not in supplemental:
            raise AblationError(f"candidate {name!r} is not an attached supplemental")
    if len(config.candidates) > 20 and config.max_subset_size > 3 and not config.force:
        raise AblationError(
            "refusing to enumerate subsets of size > 3 over more than 20"
            " candidates; pass force=True to override"
        )
    agent = case_base.agent_feature_names()
    schema_order = [s.name for s in case_base.schemas]
    params = config.relieff or default_relieff_params(case_base)
    subsets = _enumerate_subsets(config.candidates, config.max_subset_size)

    def evaluate(subset: tuple[str, ...]) -> tuple[float, WeightVector]:
        chosen = set(subset)
        active = tuple(agent) + tuple(
            name for name in schema_order if name in chosen
        )
        eval_config = EvalConfig(
            active_features=active,
            knn_k=config.knn_k,
            relieff=params,
            strict_folds=config.strict_folds,
        )
        accuracy = loocv_accuracy(case_base, eval_config)
        weights = relieff_weights(case_base, params, active)
        return accuracy, weights

    jobs = default_jobs() if n_jobs is None else max(1, n_jobs)
    if jobs == 1:
        results = [evaluate(s) for s in subsets]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(evaluate, subsets))

    by_subset = dict(zip(subsets, results))
    baseline = by_subset[()][0]
    rows = [
        AblationRow(
            feature_set=subset,
            accuracy=accuracy,
            gain=accuracy - baseline,
            weights=weights,
        )
        for subset, (accuracy, weights) in by_subset.items()
    ]
    rows.sort(key=lambda r: (-r.accuracy, len(r.feature_set), r.feature_set))

    gain_of = {row.feature_set: row.gain for row in rows}
    redundancy = []
    if config.max_subset_size >= 2:
        for f, g in itertools.combinations(sorted(config.candidates), 2):
            if (f, g) not in gain_of:
                continue
            index = gain_of[(f,)] + gain_of[(g,)] - gain_of[(f, g)]
            redundancy.append(
                RedundancyEntry(
                    pair=(f, g), index=index, redundant=index > config.redundancy_tau
                )
            )
    return AblationReport(
        baseline=baseline,
        rows=tuple(rows),
        redundancy=tuple(redundancy),
        best=rows[0].feature_set,
        knn_k=config.knn_k,
        strict_folds=config.strict_folds,
    )


def redundancy_index(report: AblationReport, f: str, g: str) -> float:
    """R = gain(f) + gain(g) - gain({f,g}); positive means overlap."""
    gain_of = {row.feature_set: row.gain for row in report.rows}
    pair = tuple(sorted((f, g)))
    for needed in ((f,), (g,), pair):
        if needed not in gain_of:
            raise AblationError(f"report has no row for feature set {needed!r}")
    return gain_of[(f,)] + gain_of[(g,)] - gain_of[pair]


# --- report rendering -------------------------------------------------------


def report_to_json(report: AblationReport) -> dict:
    """One JSON document per report; raw 64-bit accuracies preserved."""
    return {
        "baseline": report.baseline,
        "best": list(report.best),
        "knn_k": report.knn_k,
        "strict_folds": report.strict_folds,
        "rows": [
            {
                "features": list(row.feature_set),
                "accuracy": row.accuracy,
                "gain": row.gain,
                "weights": dict(row.weights.weights),
                "retrieval_weights": dict(row.weights.retrieval_weights),
            }
            for row in report.rows
        ],
        "redundancy": [
            {
                "pair": list(entry.pair),
                "index": entry.index,
                "redundant": entry.redundant,
            }
            for entry in report.redundancy
        ],
    }


def _set_label(feature_set: tuple[str, ...]) -> str:
    return " + ".join(feature_set) if feature_set else "(agent features only)"


def render_markdown(report: AblationReport) -> str:
    """Aligned-column Markdown table: baseline row marked, maximum bolded."""
    best_accuracy = max(row.accuracy for row in report.rows)
    body = []
    for row in report.rows:
        accuracy = f"{row.accuracy:.4f}"
        if row.accuracy == best_accuracy:
            accuracy = f"**{accuracy}**"
        note = "baseline" if not row.feature_set else ""
        body.append((_set_label(row.feature_set), accuracy, f"{row.gain:+.4f}", note))
    header = ("Features", "Accuracy", "Gain", "Note")
    widths = [
        max(len(header[i]), *(len(row[i]) for row in body)) for i in range(4)
    ]
    lines = [
        "| " + " | ".join(header[i].ljust(widths[i]) for i in range(4)) + " |",
        "| " + " | ".join("-" * widths[i] for i in range(4)) + " |",
    ]
    for row in body:
        lines.append("| " + " | ".join(row[i].ljust(widths[i]) for i in range(4)) + " |")
    if report.redundancy:
        lines.append("")
        lines.append("Redundant pairs (index > 0):")
        flagged = [e for e in report.redundancy if e.redundant]
        if flagged:
            for entry in flagged:
                lines.append(
                    f"- {entry.pair[0]} / {entry.pair[1]}: R = {entry.index:.4f}"
                )
        else:
            lines.append("- none")
    return "\n".join(lines) + "\n"
