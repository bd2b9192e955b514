"""Shared fixtures: hand-traceable case bases and a synthetic embedding store."""

from __future__ import annotations

import numpy as np
import pytest

from kbxai.casebase import (
    AGENT_INPUT,
    AGENT_OUTPUT,
    BOOLEAN,
    NOMINAL,
    NUMERIC,
    SUPPLEMENTAL,
    Case,
    CaseBase,
    ExplanationCategory,
    FeatureSchema,
)
from kbxai.ecbuilder import EmbeddingStore, InstanceMeta


def make_case_base(schemas, rows, ec_ids):
    """rows: list of (id, problem dict, solution)."""
    cases = tuple(Case(id=i, problem=p, solution=s) for i, p, s in rows)
    ecs = tuple(ExplanationCategory(id=e, text=f"category {e}") for e in ec_ids)
    return CaseBase(schemas=tuple(schemas), cases=cases, ec_registry=ecs)


@pytest.fixture
def relieff_fixture_1():
    """4 cases, 2 features, 2 classes; weights hand-traced in the test."""
    schemas = (
        FeatureSchema("f1", NUMERIC, AGENT_INPUT, observed_range=(0.0, 2.0)),
        FeatureSchema("f2", NOMINAL, AGENT_INPUT),
        FeatureSchema("lab", NOMINAL, AGENT_OUTPUT),
    )
    rows = [
        ("c1", {"f1": 0.0, "f2": "x", "lab": "L"}, "e1"),
        ("c2", {"f1": 1.0, "f2": "x", "lab": "L"}, "e1"),
        ("c3", {"f1": 2.0, "f2": "y", "lab": "L"}, "e2"),
        ("c4", {"f1": 2.0, "f2": "x", "lab": "L"}, "e2"),
    ]
    return make_case_base(schemas, rows, ["e1", "e2"])


@pytest.fixture
def relieff_fixture_2():
    """5 cases, 3 features, 3 classes; exercises the zero-hit pass (e3)."""
    schemas = (
        FeatureSchema("g1", NUMERIC, AGENT_INPUT, observed_range=(0.0, 4.0)),
        FeatureSchema("g2", BOOLEAN, AGENT_INPUT),
        FeatureSchema("g3", NOMINAL, AGENT_INPUT),
        FeatureSchema("lab", NOMINAL, AGENT_OUTPUT),
    )
    rows = [
        ("c1", {"g1": 0.0, "g2": 1, "g3": "a", "lab": "L"}, "e1"),
        ("c2", {"g1": 1.0, "g2": 1, "g3": "b", "lab": "L"}, "e1"),
        ("c3", {"g1": 2.0, "g2": 0, "g3": "a", "lab": "L"}, "e2"),
        ("c4", {"g1": 3.0, "g2": 0, "g3": "b", "lab": "L"}, "e2"),
        ("c5", {"g1": 4.0, "g2": 1, "g3": "a", "lab": "L"}, "e3"),
    ]
    return make_case_base(schemas, rows, ["e1", "e2", "e3"])


@pytest.fixture
def relieff_fixture_3():
    """6 cases, unbalanced classes, a constant feature, and a missing value."""
    schemas = (
        FeatureSchema("h1", NUMERIC, AGENT_INPUT, observed_range=(7.0, 7.0)),
        FeatureSchema("h2", NUMERIC, AGENT_INPUT, observed_range=(0.0, 5.0)),
        FeatureSchema("h3", NUMERIC, SUPPLEMENTAL, observed_range=(0.0, 1.0)),
        FeatureSchema("lab", NOMINAL, AGENT_OUTPUT),
    )
    rows = [
        ("c1", {"h1": 7.0, "h2": 0.0, "h3": 1.0, "lab": "L"}, "e1"),
        ("c2", {"h1": 7.0, "h2": 1.0, "h3": 0.0, "lab": "L"}, "e1"),
        ("c3", {"h1": 7.0, "h2": 2.0, "h3": None, "lab": "L"}, "e1"),
        ("c4", {"h1": 7.0, "h2": 3.0, "h3": 1.0, "lab": "L"}, "e1"),
        ("c5", {"h1": 7.0, "h2": 4.0, "h3": 0.0, "lab": "L"}, "e2"),
        ("c6", {"h1": 7.0, "h2": 5.0, "h3": 1.0, "lab": "L"}, "e2"),
    ]
    return make_case_base(schemas, rows, ["e1", "e2"])


@pytest.fixture
def loocv_duplicates():
    """{A->e1, A->e1, B->e2, B->e2}: every fold retrieves its duplicate."""
    schemas = (
        FeatureSchema("sym", NOMINAL, AGENT_INPUT),
        FeatureSchema("lab", NOMINAL, AGENT_OUTPUT),
    )
    rows = [
        ("c1", {"sym": "A", "lab": "L"}, "e1"),
        ("c2", {"sym": "A", "lab": "L"}, "e1"),
        ("c3", {"sym": "B", "lab": "L"}, "e2"),
        ("c4", {"sym": "B", "lab": "L"}, "e2"),
    ]
    return make_case_base(schemas, rows, ["e1", "e2"])


@pytest.fixture
def loocv_contradiction():
    """{A->e1, A->e2}: each fold retrieves the contradicting case."""
    schemas = (
        FeatureSchema("sym", NOMINAL, AGENT_INPUT),
        FeatureSchema("lab", NOMINAL, AGENT_OUTPUT),
    )
    rows = [
        ("c1", {"sym": "A", "lab": "L"}, "e1"),
        ("c2", {"sym": "A", "lab": "L"}, "e2"),
    ]
    return make_case_base(schemas, rows, ["e1", "e2"])


@pytest.fixture
def loocv_unique_solutions():
    """Identical problems, every solution unique: accuracy must be 0."""
    schemas = (
        FeatureSchema("sym", NOMINAL, AGENT_INPUT),
        FeatureSchema("lab", NOMINAL, AGENT_OUTPUT),
    )
    rows = [
        (f"c{i}", {"sym": "A", "lab": "L"}, f"e{i}") for i in range(1, 5)
    ]
    return make_case_base(schemas, rows, [f"e{i}" for i in range(1, 5)])


@pytest.fixture
def loocv_eight():
    """8 cases, 3 classes, mixed kinds; oracle-enumerated in tests."""
    schemas = (
        FeatureSchema("x", NUMERIC, AGENT_INPUT, observed_range=(0.0, 7.0)),
        FeatureSchema("t", NOMINAL, AGENT_INPUT),
        FeatureSchema("lab", NOMINAL, AGENT_OUTPUT),
    )
    ecs = ["e1", "e2", "e3"]
    assignment = ["e1", "e1", "e2", "e2", "e2", "e3", "e3", "e1"]
    rows = []
    for i in range(8):
        rows.append(
            (
                f"d{i}",
                {
                    "x": float(i),
                    "t": "p" if i % 4 < 2 else "q",
                    "lab": "u" if i < 4 else "v",
                },
                assignment[i],
            )
        )
    return make_case_base(schemas, rows, ecs)


BIG_CLUSTERS = 12
SMALL_CLUSTERS = 8
BIG_SIZE = 13
SMALL_SIZES = (6, 6, 5, 5, 5, 6, 5, 6)
PREDICTED_WRONG = ("cat", "truck", "horse")


def build_synthetic_store(seed: int = 20240, dim: int = 8) -> EmbeddingStore:
    """200 instances in 20 cosine clusters; 40 false negatives (2 per cluster).

    Big clusters are tight (high assignment scores, ~13 members); small ones
    are loose, so the quantile filter and the popularity cut remove them.
    """
    rng = np.random.default_rng(seed)
    centers = []
    while len(centers) < BIG_CLUSTERS + SMALL_CLUSTERS:
        v = rng.normal(size=dim)
        v = v / np.linalg.norm(v)
        if all(abs(float(np.dot(v, c))) < 0.55 for c in centers):
            centers.append(v)
    sizes = [BIG_SIZE] * BIG_CLUSTERS + list(SMALL_SIZES)
    sigmas = [0.03] * BIG_CLUSTERS + [0.30] * SMALL_CLUSTERS
    vectors: dict[str, np.ndarray] = {}
    meta: dict[str, InstanceMeta] = {}
    idx = 0
    for cluster, (center, size, sigma) in enumerate(zip(centers, sizes, sigmas)):
        for member in range(size):
            iid = f"i{idx:03d}"
            vectors[iid] = center + rng.normal(scale=sigma, size=dim)
            if member < 2:
                # the cluster's two false negatives: dogs the agent missed
                meta[iid] = InstanceMeta("dog", PREDICTED_WRONG[cluster % 3])
            elif member % 2 == 0:
                meta[iid] = InstanceMeta("dog", "dog")
            else:
                wrong = PREDICTED_WRONG[(cluster + member) % 3]
                meta[iid] = InstanceMeta(wrong, wrong)
            idx += 1
    assert idx == 200
    return EmbeddingStore(dim=dim, vectors=vectors, meta=meta)


@pytest.fixture(scope="session")
def synthetic_store():
    return build_synthetic_store()
