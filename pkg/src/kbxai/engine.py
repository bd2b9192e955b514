"""Similarity, ReliefF weight learning, weighted-kNN EC selection, LOOCV.

All operations are pure functions over immutable inputs, and every internal
iteration runs in a canonical order (ascending case id, ascending EC id),
so results never depend on how cases happen to be stored.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Mapping, Sequence

from .casebase import (
    BOOLEAN,
    NOMINAL,
    CaseBase,
    FeatureSchema,
    FeatureValue,
)


class EngineError(ValueError):
    """Raised when an evaluation request violates an engine precondition."""


def local_sim(schema: FeatureSchema, a: FeatureValue, b: FeatureValue) -> float:
    """Per-feature similarity in [0, 1].

    Nominal and boolean features compare by equality. Numeric features use
    the range-normalized difference 1 - |a-b|/(max-min) over the observed
    range, defined as 1 when the range is degenerate. A missing operand
    yields 0: absence never fabricates agreement.
    """
    if a is None or b is None:
        return 0.0
    if schema.kind == NOMINAL:
        if not (isinstance(a, str) and isinstance(b, str)):
            raise EngineError(f"feature {schema.name!r}: nominal values must be str")
        return 1.0 if a == b else 0.0
    if isinstance(a, str) or isinstance(b, str):
        raise EngineError(f"feature {schema.name!r}: expected numeric values")
    if schema.kind == BOOLEAN:
        return 1.0 if int(a) == int(b) else 0.0
    rng = schema.observed_range
    if rng is None or rng[0] == rng[1]:
        return 1.0
    sim = 1.0 - abs(float(a) - float(b)) / (rng[1] - rng[0])
    return min(1.0, max(0.0, sim))


@dataclass(frozen=True)
class WeightVector:
    """Raw ReliefF weights plus the nonnegative weights used for retrieval.

    Retrieval weights clamp negatives to 0; when everything clamps to 0 the
    retrieval weights fall back to uniform 1/|F| so similarity stays defined.
    """

    weights: Mapping[str, float]
    retrieval_weights: Mapping[str, float]

    @classmethod
    def from_raw(cls, weights: Mapping[str, float]) -> "WeightVector":
        if not weights:
            raise EngineError("weight vector needs at least one feature")
        clamped = {f: max(0.0, w) for f, w in weights.items()}
        if all(w == 0.0 for w in clamped.values()):
            uniform = 1.0 / len(clamped)
            clamped = {f: uniform for f in clamped}
        return cls(weights=dict(weights), retrieval_weights=clamped)

    def to_json(self) -> dict:
        return {
            "weights": dict(self.weights),
            "retrieval_weights": dict(self.retrieval_weights),
        }

    @classmethod
    def from_json(cls, doc: Mapping) -> "WeightVector":
        return cls(
            weights=dict(doc["weights"]),
            retrieval_weights=dict(doc["retrieval_weights"]),
        )


@dataclass(frozen=True)
class ReliefFParams:
    """ReliefF hyperparameters.

    passes is either "all_cases" (deterministic, the default at this data
    scale) or "sampled", which draws sample_size pass cases without
    replacement using the seed.
    """

    neighbors_k: int = 3
    passes: str = "all_cases"
    sample_size: int | None = None
    seed: int | None = None

    def __post_init__(self) -> None:
        if self.neighbors_k < 1:
            raise EngineError("neighbors_k must be >= 1")
        if self.passes not in ("all_cases", "sampled"):
            raise EngineError(f"unknown pass mode {self.passes!r}")
        if self.passes == "sampled" and (
            self.sample_size is None or self.sample_size < 1
        ):
            raise EngineError("sampled passes need sample_size >= 1")


def default_relieff_params(case_base: CaseBase) -> ReliefFParams:
    """Default hyperparameters: all-case passes, k tied to the class sizes."""
    sizes = case_base.class_sizes()
    smallest = min(sizes.values()) if sizes else 1
    return ReliefFParams(neighbors_k=max(1, min(3, smallest - 1)))


@dataclass(frozen=True)
class EvalConfig:
    """One retrieval-evaluation configuration.

    active_features is the ordered feature set visible to every fold; the
    agent_output feature must be part of it. strict_folds relearns weights
    per fold with the held-out case excluded instead of once per config.
    """

    active_features: tuple[str, ...]
    knn_k: int = 1
    relieff: ReliefFParams | None = None
    strict_folds: bool = False

    def __post_init__(self) -> None:
        if self.knn_k < 1:
            raise EngineError("knn_k must be >= 1")
        if len(set(self.active_features)) != len(self.active_features):
            raise EngineError("active_features contains duplicates")


def global_sim(
    query: Mapping[str, FeatureValue],
    problem: Mapping[str, FeatureValue],
    weights: WeightVector,
    schema_index: Mapping[str, FeatureSchema],
) -> float:
    """Retrieval-weighted mean of local similarities over the active set."""
    active = list(weights.retrieval_weights)
    if not active:
        raise EngineError("empty active feature set")
    num = 0.0
    den = 0.0
    for name in active:
        w = weights.retrieval_weights[name]
        num += w * local_sim(schema_index[name], query[name], problem[name])
        den += w
    return num / den


class _Workspace:
    """Pairwise local-similarity tables over the canonical case order.

    Cases are indexed by ascending id so every downstream computation is
    invariant to storage order. Entries reuse local_sim verbatim, keeping
    the tabulated path bit-identical to the scalar one.
    """

    def __init__(self, case_base: CaseBase, active_features: Sequence[str]):
        if not active_features:
            raise EngineError("empty active feature set")
        schema_index = case_base.schema_index()
        for name in active_features:
            if name not in schema_index:
                raise EngineError(f"unknown active feature {name!r}")
        self.active = tuple(active_features)
        self.cases = sorted(case_base.cases, key=lambda c: c.id)
        self.ids = [c.id for c in self.cases]
        self.classes = [c.solution for c in self.cases]
        self.schema_index = schema_index
        n = len(self.cases)
        self.sim: dict[str, list[list[float]]] = {}
        for name in self.active:
            schema = schema_index[name]
            table = [[1.0] * n for _ in range(n)]
            for i in range(n):
                vi = self.cases[i].problem[name]
                table[i][i] = local_sim(schema, vi, vi)
                for j in range(i + 1, n):
                    s = local_sim(schema, vi, self.cases[j].problem[name])
                    table[i][j] = s
                    table[j][i] = s
            self.sim[name] = table

    def diff_tables(self) -> dict[str, list[list[float]]]:
        """ReliefF's per-feature difference, diff = 1 - local similarity."""
        out: dict[str, list[list[float]]] = {}
        for name in self.active:
            out[name] = [[1.0 - s for s in row] for row in self.sim[name]]
        return out

    def distances(
        self, diff: Mapping[str, list[list[float]]]
    ) -> list[list[float]]:
        """Case distance: sum of per-feature diffs, in active-feature order."""
        n = len(self.cases)
        total = [[0.0] * n for _ in range(n)]
        for name in self.active:
            table = diff[name]
            for i in range(n):
                row = table[i]
                trow = total[i]
                for j in range(n):
                    trow[j] += row[j]
        return total


def _relieff_core(
    ws: _Workspace, indices: Sequence[int], params: ReliefFParams
) -> dict[str, float]:
    """ReliefF update loop over a subset of workspace indices."""
    members = sorted(indices)
    n = len(members)
    if n < 2:
        raise EngineError("ReliefF needs at least 2 cases")
    by_class: dict[str, list[int]] = {}
    for i in members:
        by_class.setdefault(ws.classes[i], []).append(i)
    if len(by_class) < 2:
        raise EngineError("ReliefF needs at least 2 solution classes")
    freq = {c: len(ix) / n for c, ix in by_class.items()}
    diff = ws.diff_tables()
    dist = ws.distances(diff)

    if params.passes == "sampled":
        import numpy as np

        if params.sample_size > n:
            raise EngineError("sample_size exceeds the number of cases")
        rng = np.random.default_rng(params.seed)
        chosen = rng.choice(n, size=params.sample_size, replace=False)
        pass_indices = sorted(members[int(i)] for i in chosen)
    else:
        pass_indices = members

    m = len(pass_indices)
    k = params.neighbors_k
    weights = {name: 0.0 for name in ws.active}
    for r in pass_indices:
        cls = ws.classes[r]
        p_cls = freq[cls]
        hits = [i for i in by_class[cls] if i != r]
        hits.sort(key=lambda i: (dist[r][i], ws.ids[i]))
        k_h = min(k, len(hits))
        if k_h > 0:
            for name in ws.active:
                table = diff[name]
                total = 0.0
                for h in hits[:k_h]:
                    total += table[r][h]
                weights[name] -= total / (m * k_h)
        for other in sorted(by_class):
            if other == cls:
                continue
            misses = sorted(by_class[other], key=lambda i: (dist[r][i], ws.ids[i]))
            k_c = min(k, len(misses))
            scale = freq[other] / (1.0 - p_cls)
            for name in ws.active:
                table = diff[name]
                total = 0.0
                for miss in misses[:k_c]:
                    total += table[r][miss]
                weights[name] += scale * total / (m * k_c)
    return weights


def relieff_weights(
    case_base: CaseBase,
    params: ReliefFParams | None = None,
    active_features: Sequence[str] | None = None,
) -> WeightVector:
    """Learn ReliefF feature weights over the case base.

    Deterministic: passes run in ascending case-id order, neighbor ties
    break by ascending case id, and miss classes iterate in ascending EC id.
    Negative weights are clamped to 0 for retrieval by WeightVector.
    """
    if active_features is None:
        active_features = tuple(s.name for s in case_base.schemas)
    if params is None:
        params = default_relieff_params(case_base)
    ws = _Workspace(case_base, active_features)
    raw = _relieff_core(ws, range(len(ws.cases)), params)
    return WeightVector.from_raw({name: raw[name] for name in ws.active})


@dataclass(frozen=True)
class Neighbor:
    case_id: str
    similarity: float
    ec_id: str


@dataclass(frozen=True)
class Selection:
    """Outcome of one EC selection: the winner plus the ranked neighbors."""

    ec_id: str
    neighbors: tuple[Neighbor, ...]


def _vote(neighbors: Sequence[Neighbor]) -> str:
    votes: dict[str, float] = {}
    for nb in neighbors:
        votes[nb.ec_id] = votes.get(nb.ec_id, 0.0) + nb.similarity
    # Max vote mass; exact ties go to the lexicographically smallest EC id.
    return min(votes, key=lambda ec: (-votes[ec], ec))


def select_ec(
    query: Mapping[str, FeatureValue],
    case_base: CaseBase,
    weights: WeightVector,
    knn_k: int = 1,
) -> Selection:
    """Retrieve the knn_k most similar cases and vote an EC by similarity mass.

    Neighbor ties break by ascending case id, EC vote ties by ascending EC
    id, so identical inputs always produce identical outputs.
    """
    if not case_base.cases:
        raise EngineError("empty case base")
    if knn_k < 1:
        raise EngineError("knn_k must be >= 1")
    schema_index = case_base.schema_index()
    for name in weights.retrieval_weights:
        if name not in query:
            raise EngineError(f"query does not cover active feature {name!r}")
    scored = []
    for case in sorted(case_base.cases, key=lambda c: c.id):
        sim = global_sim(query, case.problem, weights, schema_index)
        scored.append(Neighbor(case_id=case.id, similarity=sim, ec_id=case.solution))
    scored.sort(key=lambda nb: (-nb.similarity, nb.case_id))
    top = tuple(scored[:knn_k])
    return Selection(ec_id=_vote(top), neighbors=top)


def _uniform_retrieval(active: Sequence[str]) -> dict[str, float]:
    return WeightVector.from_raw({name: 0.0 for name in active}).retrieval_weights


def _fold_prediction(
    ws: _Workspace,
    i: int,
    candidate_indices: Sequence[int],
    retrieval: Mapping[str, float],
    knn_k: int,
) -> str:
    # Mirrors global_sim term by term so fold similarities are bit-identical
    # to the scalar path.
    sims = []
    for j in candidate_indices:
        num = 0.0
        den = 0.0
        for name in ws.active:
            w = retrieval[name]
            num += w * ws.sim[name][i][j]
            den += w
        sims.append(Neighbor(ws.ids[j], num / den, ws.classes[j]))
    sims.sort(key=lambda nb: (-nb.similarity, nb.case_id))
    return _vote(sims[:knn_k])


def loocv_accuracy(case_base: CaseBase, config: EvalConfig) -> float:
    """Leave-one-out accuracy of EC selection under one configuration.

    Every fold sees exactly the configured active features. By default the
    ReliefF weights are learned once on the full case base; with
    strict_folds they are relearned per fold without the held-out case.
    A single-class training set has no ReliefF signal, so such folds (or a
    single-class case base) fall back to uniform retrieval weights.
    """
    if len(case_base.cases) < 2:
        raise EngineError("LOOCV needs at least 2 cases")
    output_name = case_base.output_schema().name
    if output_name not in config.active_features:
        raise EngineError("the agent_output feature must stay active")
    params = config.relieff or default_relieff_params(case_base)
    ws = _Workspace(case_base, config.active_features)
    n = len(ws.cases)
    all_indices = list(range(n))
    if not config.strict_folds:
        if len(set(ws.classes)) < 2:
            retrieval = _uniform_retrieval(ws.active)
        else:
            raw = _relieff_core(ws, all_indices, params)
            retrieval = WeightVector.from_raw(raw).retrieval_weights
    correct = 0
    for i in range(n):
        rest = [j for j in all_indices if j != i]
        if config.strict_folds:
            fold_classes = {ws.classes[j] for j in rest}
            if len(fold_classes) < 2:
                fold_retrieval = _uniform_retrieval(ws.active)
            else:
                fold_raw = _relieff_core(ws, rest, params)
                fold_retrieval = WeightVector.from_raw(fold_raw).retrieval_weights
        else:
            fold_retrieval = retrieval
        predicted = _fold_prediction(ws, i, rest, fold_retrieval, config.knn_k)
        if predicted == ws.classes[i]:
            correct += 1
    return correct / n


def baseline_accuracy(case_base: CaseBase, config: EvalConfig) -> float:
    """LOOCV accuracy over the agent's own features, no supplementals."""
    agent = case_base.agent_feature_names()
    return loocv_accuracy(case_base, replace(config, active_features=agent))
