"""Builds explanation categories for image-style studies.

Positively-labeled instances the agent misclassified (false negatives) serve
as exemplar candidates. Each seed instance proposes a candidate EC from its
two highest-cosine candidates; instances are then assigned to the EC whose
exemplar pair has the best median cosine, and finalize dedups, filters,
ranks by popularity, and samples the final case base.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from typing import Mapping, NamedTuple, Sequence

import numpy as np

from .casebase import (
    AGENT_INPUT,
    AGENT_OUTPUT,
    NOMINAL,
    Case,
    CaseBase,
    ExplanationCategory,
    FeatureSchema,
)

logger = logging.getLogger(__name__)


class EcBuilderError(ValueError):
    """Raised when EC construction cannot satisfy its contract."""


class InstanceMeta(NamedTuple):
    true_label: str
    predicted_label: str


@dataclass(frozen=True)
class EmbeddingStore:
    """Embedding vectors plus true/predicted labels, keyed by instance id."""

    dim: int
    vectors: Mapping[str, np.ndarray]
    meta: Mapping[str, InstanceMeta]

    def __post_init__(self) -> None:
        if self.dim < 1:
            raise EcBuilderError("embedding dim must be >= 1")
        if set(self.vectors) != set(self.meta):
            raise EcBuilderError("meta must cover exactly the embedded instances")
        for iid, vec in self.vectors.items():
            if vec.shape != (self.dim,):
                raise EcBuilderError(
                    f"instance {iid!r}: expected dim {self.dim}, got {vec.shape}"
                )
            if not np.all(np.isfinite(vec)):
                raise EcBuilderError(f"instance {iid!r}: non-finite embedding")
            if float(np.linalg.norm(vec)) == 0.0:
                raise EcBuilderError(f"instance {iid!r}: zero vector (cosine undefined)")

    def ids(self) -> list[str]:
        return sorted(self.vectors)

    @classmethod
    def from_arrays(
        cls,
        ids: Sequence[str],
        vectors: np.ndarray,
        meta: Mapping[str, InstanceMeta],
    ) -> "EmbeddingStore":
        vectors = np.asarray(vectors, dtype=np.float64)
        return cls(
            dim=int(vectors.shape[1]),
            vectors={iid: vectors[i].copy() for i, iid in enumerate(ids)},
            meta=dict(meta),
        )


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    """Cosine of two nonzero vectors of equal dimension, in [-1, 1]."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise EcBuilderError(f"dimension mismatch: {u.shape} vs {v.shape}")
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        raise EcBuilderError("cosine is undefined for a zero vector")
    return float(np.dot(u, v) / (nu * nv))


class _CosineCache:
    """Memoized pairwise cosines so every stage sees identical values."""

    def __init__(self, store: EmbeddingStore):
        self.store = store
        self._cache: dict[tuple[str, str], float] = {}

    def __call__(self, a: str, b: str) -> float:
        key = (a, b) if a <= b else (b, a)
        value = self._cache.get(key)
        if value is None:
            value = cosine(self.store.vectors[key[0]], self.store.vectors[key[1]])
            self._cache[key] = value
        return value


def false_negative_candidates(store: EmbeddingStore, positive_label: str) -> list[str]:
    """Instances of the positive class that the agent misclassified, sorted."""
    return [
        iid
        for iid in store.ids()
        if store.meta[iid].true_label == positive_label
        and store.meta[iid].predicted_label != positive_label
    ]


@dataclass(frozen=True)
class CandidateEC:
    """A proposed EC: two exemplar instances plus the instances mapped to it."""

    id: str
    exemplars: tuple[str, str]
    mapped_instances: tuple[tuple[str, float], ...] = ()

    def __post_init__(self) -> None:
        if self.exemplars[0] == self.exemplars[1]:
            raise EcBuilderError(f"candidate EC {self.id!r}: exemplars must differ")


def build_candidate_ec(
    instance_id: str,
    candidates: Sequence[str],
    store: EmbeddingStore,
    ec_id: str | None = None,
    _cos: _CosineCache | None = None,
) -> CandidateEC:
    """Propose an EC for a seed instance from its two nearest candidates.

    The seed itself is excluded from the candidate pool; cosine ties break
    by ascending candidate id.
    """
    cos = _cos or _CosineCache(store)
    eligible = [c for c in candidates if c != instance_id]
    if len(eligible) < 2:
        raise EcBuilderError(
            f"instance {instance_id!r}: needs at least 2 candidates after"
            " self-exclusion"
        )
    ranked = sorted(eligible, key=lambda c: (-cos(instance_id, c), c))
    pair = tuple(sorted(ranked[:2]))
    return CandidateEC(id=ec_id or f"ec-{instance_id}", exemplars=pair)


def assign_ec(
    instance_id: str,
    ecs: Sequence[CandidateEC],
    store: EmbeddingStore,
    _cos: _CosineCache | None = None,
) -> tuple[str, float]:
    """Assign an instance to the EC with the best median exemplar cosine.

    The median of a two-value set is their mean. Score ties break by
    ascending EC id.
    """
    if not ecs:
        raise EcBuilderError("no candidate ECs to assign against")
    cos = _cos or _CosineCache(store)
    best_id = None
    best_score = None
    for ec in sorted(ecs, key=lambda e: e.id):
        a, b = ec.exemplars
        score = (cos(instance_id, a) + cos(instance_id, b)) / 2.0
        if best_score is None or score > best_score:
            best_id, best_score = ec.id, score
    return best_id, best_score


@dataclass(frozen=True)
class FinalizeParams:
    """Dedup/filter/rank/sample controls for the final case base."""

    target_ecs: int = 12
    per_ec: int = 10
    min_score_quantile: float = 0.25
    seed: int = 0
    allow_short: bool = False

    def __post_init__(self) -> None:
        if self.target_ecs < 1 or self.per_ec < 1:
            raise EcBuilderError("target_ecs and per_ec must be >= 1")
        if not (0.0 <= self.min_score_quantile <= 1.0):
            raise EcBuilderError("min_score_quantile must be in [0, 1]")


INSTANCE_FEATURE = "instance"
LABEL_FEATURE = "label"


def finalize(
    ecs: Sequence[CandidateEC],
    assignments: Mapping[str, tuple[str, float]],
    store: EmbeddingStore,
    params: FinalizeParams,
) -> CaseBase:
    """Deduplicate, filter, rank, sample, and emit the final case base.

    Steps: (1) merge ECs with identical exemplar pairs (keeping the smallest
    id); (2) drop ECs whose mean assignment score falls below the
    min_score_quantile quantile; (3) rank survivors by mapped-instance count
    (ties by EC id); (4) keep the top target_ecs; (5) sample per_ec mapped
    instances per EC with the seeded generator; (6) emit a case base whose
    problems are the instance id and the agent's predicted label.
    """
    # Dedup by unordered exemplar pair; assignment ties already favor the
    # smallest EC id, so the kept twin is the one holding the assignments.
    kept: dict[tuple[str, str], CandidateEC] = {}
    alias: dict[str, str] = {}
    for ec in sorted(ecs, key=lambda e: e.id):
        if ec.exemplars not in kept:
            kept[ec.exemplars] = ec
        alias[ec.id] = kept[ec.exemplars].id
    by_id = {ec.id: ec for ec in kept.values()}

    mapped: dict[str, list[tuple[str, float]]] = {ec_id: [] for ec_id in by_id}
    for iid in sorted(assignments):
        ec_id, score = assignments[iid]
        if ec_id not in alias:
            raise EcBuilderError(f"assignment references unknown EC {ec_id!r}")
        mapped[alias[ec_id]].append((iid, score))

    populated = {ec_id: rows for ec_id, rows in mapped.items() if rows}
    if not populated:
        raise EcBuilderError("no EC received any assignment")
    means = {
        ec_id: sum(score for _, score in rows) / len(rows)
        for ec_id, rows in populated.items()
    }
    threshold = float(
        np.quantile(
            np.array([means[ec_id] for ec_id in sorted(means)]),
            params.min_score_quantile,
        )
    )
    surviving = [ec_id for ec_id in sorted(populated) if means[ec_id] >= threshold]
    ranked = sorted(surviving, key=lambda ec_id: (-len(populated[ec_id]), ec_id))
    if len(ranked) < params.target_ecs:
        raise EcBuilderError(
            f"only {len(ranked)} explanation categories survive filtering,"
            f" need {params.target_ecs}"
        )
    final_ids = ranked[: params.target_ecs]

    rng = np.random.default_rng(params.seed)
    cases: list[Case] = []
    registry: list[ExplanationCategory] = []
    for ec_id in final_ids:
        ec = by_id[ec_id]
        pool = sorted(populated[ec_id], key=lambda row: (-row[1], row[0]))
        if len(pool) < params.per_ec:
            if not params.allow_short:
                raise EcBuilderError(
                    f"EC {ec_id!r} has only {len(pool)} mapped instances,"
                    f" need {params.per_ec}"
                )
            logger.warning(
                "EC %s is short: %d mapped instances, wanted %d; taking all",
                ec_id,
                len(pool),
                params.per_ec,
            )
            chosen = [iid for iid, _ in pool]
        else:
            picks = rng.choice(len(pool), size=params.per_ec, replace=False)
            chosen = [pool[int(i)][0] for i in picks]
        a, b = ec.exemplars
        registry.append(
            ExplanationCategory(
                id=ec_id,
                text=f"resembles misclassified exemplars {a} and {b}",
                exemplar_refs=(a, b),
            )
        )
        for iid in sorted(chosen):
            cases.append(
                Case(
                    id=iid,
                    problem={
                        INSTANCE_FEATURE: iid,
                        LABEL_FEATURE: store.meta[iid].predicted_label,
                    },
                    solution=ec_id,
                )
            )
    schemas = (
        FeatureSchema(name=INSTANCE_FEATURE, kind=NOMINAL, origin=AGENT_INPUT),
        FeatureSchema(name=LABEL_FEATURE, kind=NOMINAL, origin=AGENT_OUTPUT),
    )
    return CaseBase(schemas=schemas, cases=tuple(cases), ec_registry=tuple(registry))


def build_categories(
    store: EmbeddingStore,
    positive_label: str,
    params: FinalizeParams,
    seed_instances: Sequence[str] | None = None,
) -> tuple[CaseBase, dict]:
    """Run the whole pipeline: candidates, proposals, assignment, finalize.

    Returns the finalized case base plus a diagnostics dict (candidate
    count, proposed/surviving EC ids) for manifests and reports.
    """
    candidates = false_negative_candidates(store, positive_label)
    if len(candidates) < 2:
        raise EcBuilderError(
            f"need at least 2 false negatives for label {positive_label!r},"
            f" found {len(candidates)}"
        )
    cos = _CosineCache(store)
    seeds = list(seed_instances) if seed_instances is not None else store.ids()
    ecs = []
    for iid in seeds:
        eligible = [c for c in candidates if c != iid]
        if len(eligible) < 2:
            continue
        ecs.append(build_candidate_ec(iid, candidates, store, _cos=cos))
    if not ecs:
        raise EcBuilderError("no seed instance could propose an EC")
    assignments = {iid: assign_ec(iid, ecs, store, _cos=cos) for iid in store.ids()}
    case_base = finalize(ecs, assignments, store, params)
    diagnostics = {
        "false_negatives": len(candidates),
        "proposed_ecs": len(ecs),
        "final_ecs": [ec.id for ec in case_base.ec_registry],
    }
    return case_base, diagnostics


# --- embedding file format ---------------------------------------------------


def save_embeddings(store: EmbeddingStore, path) -> None:
    """Write the `id,true_label,predicted_label,v0..` CSV, sorted by id."""
    header = ["id", "true_label", "predicted_label"] + [
        f"v{i}" for i in range(store.dim)
    ]
    lines = [",".join(header)]
    for iid in store.ids():
        meta = store.meta[iid]
        fields = [iid, meta.true_label, meta.predicted_label]
        fields.extend(repr(float(x)) for x in store.vectors[iid])
        lines.append(",".join(fields))
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


def load_embeddings(path) -> EmbeddingStore:
    """Read the embedding CSV; the header is mandatory."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise EcBuilderError(f"{path}: empty embedding file")
    header = rows[0]
    if header[:3] != ["id", "true_label", "predicted_label"]:
        raise EcBuilderError(f"{path}: malformed header {header[:3]!r}")
    dim = len(header) - 3
    if dim < 1 or header[3:] != [f"v{i}" for i in range(dim)]:
        raise EcBuilderError(f"{path}: malformed vector columns")
    vectors: dict[str, np.ndarray] = {}
    meta: dict[str, InstanceMeta] = {}
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise EcBuilderError(f"{path}:{lineno}: expected {len(header)} fields")
        iid = row[0]
        if iid in vectors:
            raise EcBuilderError(f"{path}:{lineno}: duplicate instance id {iid!r}")
        vectors[iid] = np.array([float(x) for x in row[3:]], dtype=np.float64)
        meta[iid] = InstanceMeta(true_label=row[1], predicted_label=row[2])
    return EmbeddingStore(dim=dim, vectors=vectors, meta=meta)
