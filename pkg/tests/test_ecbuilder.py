"""Cosine machinery and the EC construction pipeline."""

import math

import numpy as np
import pytest

from kbxai.casebase import save_case_base
from kbxai.ecbuilder import (
    CandidateEC,
    EcBuilderError,
    EmbeddingStore,
    FinalizeParams,
    InstanceMeta,
    assign_ec,
    build_candidate_ec,
    build_categories,
    cosine,
    false_negative_candidates,
    finalize,
    load_embeddings,
    save_embeddings,
)

from conftest import build_synthetic_store


class TestCosine:
    def test_identity(self):
        assert cosine(np.array([1.0, 0.0]), np.array([1.0, 0.0])) == 1.0

    def test_orthogonal(self):
        assert cosine(np.array([1.0, 0.0]), np.array([0.0, 1.0])) == 0.0

    def test_forty_five_degrees(self):
        value = cosine(np.array([1.0, 1.0]), np.array([1.0, 0.0]))
        assert value == pytest.approx(1.0 / math.sqrt(2.0), abs=1e-12)

    def test_scale_invariance_and_symmetry(self):
        u = np.array([0.3, -1.2, 0.5])
        v = np.array([1.0, 0.25, -2.0])
        assert cosine(u, v) == pytest.approx(cosine(v, u), abs=0)
        assert cosine(3.5 * u, v) == pytest.approx(cosine(u, v), abs=1e-12)

    def test_zero_vector_rejected(self):
        with pytest.raises(EcBuilderError):
            cosine(np.zeros(3), np.ones(3))

    def test_dim_mismatch_rejected(self):
        with pytest.raises(EcBuilderError):
            cosine(np.ones(3), np.ones(4))


def tiny_store():
    vectors = {
        "dog1": np.array([1.0, 0.0]),
        "dog2": np.array([0.9, 0.1]),
        "dog3": np.array([0.0, 1.0]),
        "cat1": np.array([0.5, 0.5]),
    }
    meta = {
        "dog1": InstanceMeta("dog", "cat"),
        "dog2": InstanceMeta("dog", "truck"),
        "dog3": InstanceMeta("dog", "dog"),
        "cat1": InstanceMeta("cat", "dog"),
    }
    return EmbeddingStore(dim=2, vectors=vectors, meta=meta)


class TestFalseNegatives:
    def test_definition(self):
        store = tiny_store()
        assert false_negative_candidates(store, "dog") == ["dog1", "dog2"]

    def test_all_correct_is_empty(self):
        vectors = {"a": np.array([1.0, 0.0]), "b": np.array([0.0, 1.0])}
        meta = {"a": InstanceMeta("dog", "dog"), "b": InstanceMeta("cat", "cat")}
        store = EmbeddingStore(dim=2, vectors=vectors, meta=meta)
        assert false_negative_candidates(store, "dog") == []

    def test_false_positive_excluded(self):
        # cat1 is predicted dog (a false positive): never a candidate
        assert "cat1" not in false_negative_candidates(tiny_store(), "dog")

    def test_large_count(self):
        # 1000 dogs, 150 misclassified: exactly the misclassified ones qualify
        rng = np.random.default_rng(3)
        vectors = {}
        meta = {}
        for i in range(1000):
            iid = f"d{i:04d}"
            vectors[iid] = rng.normal(size=4)
            predicted = "cat" if i % 20 < 3 else "dog"
            meta[iid] = InstanceMeta("dog", predicted)
        store = EmbeddingStore(dim=4, vectors=vectors, meta=meta)
        assert len(false_negative_candidates(store, "dog")) == 150


class TestBuildCandidate:
    def test_exact_match_is_exemplar(self):
        store = tiny_store()
        vectors = dict(store.vectors)
        vectors["probe"] = np.array([1.0, 0.0])  # equals dog1
        meta = dict(store.meta)
        meta["probe"] = InstanceMeta("dog", "dog")
        store = EmbeddingStore(dim=2, vectors=vectors, meta=meta)
        ec = build_candidate_ec("probe", ["dog1", "dog2"], store)
        assert "dog1" in ec.exemplars

    def test_self_excluded(self):
        store = tiny_store()
        with pytest.raises(EcBuilderError):
            build_candidate_ec("dog1", ["dog1", "dog2"], store)

    def test_top_two_by_cosine(self):
        # candidates at cosines 0.9, 0.8, 0.2 from the probe
        angles = [math.acos(0.9), math.acos(0.8), math.acos(0.2)]
        vectors = {"probe": np.array([1.0, 0.0])}
        meta = {"probe": InstanceMeta("dog", "dog")}
        for i, theta in enumerate(angles):
            iid = f"cand{i}"
            vectors[iid] = np.array([math.cos(theta), math.sin(theta)])
            meta[iid] = InstanceMeta("dog", "cat")
        store = EmbeddingStore(dim=2, vectors=vectors, meta=meta)
        ec = build_candidate_ec("probe", ["cand0", "cand1", "cand2"], store)
        assert ec.exemplars == ("cand0", "cand1")

    def test_exemplars_must_differ(self):
        with pytest.raises(EcBuilderError):
            CandidateEC(id="x", exemplars=("a", "a"))


class TestAssign:
    def test_median_of_two_is_mean(self):
        # exemplar cosines 0.8 and 0.6 -> score 0.7
        vectors = {
            "probe": np.array([1.0, 0.0]),
            "e1": np.array([0.8, math.sqrt(1 - 0.64)]),
            "e2": np.array([0.6, math.sqrt(1 - 0.36)]),
        }
        meta = {k: InstanceMeta("dog", "cat") for k in vectors}
        store = EmbeddingStore(dim=2, vectors=vectors, meta=meta)
        ec = CandidateEC(id="ecA", exemplars=("e1", "e2"))
        winner, score = assign_ec("probe", [ec], store)
        assert winner == "ecA"
        assert score == pytest.approx(0.7, abs=1e-12)

    def test_instance_equal_to_both_exemplars(self):
        vectors = {
            "probe": np.array([2.0, 0.0]),
            "e1": np.array([1.0, 0.0]),
            "e2": np.array([3.0, 0.0]),
            "other": np.array([0.0, 1.0]),
        }
        meta = {k: InstanceMeta("dog", "cat") for k in vectors}
        store = EmbeddingStore(dim=2, vectors=vectors, meta=meta)
        ecs = [
            CandidateEC(id="good", exemplars=("e1", "e2")),
            CandidateEC(id="bad", exemplars=("e1", "other")),
        ]
        winner, score = assign_ec("probe", ecs, store)
        assert winner == "good"
        assert score == 1.0

    def test_close_scores_pick_larger(self):
        vectors = {
            "probe": np.array([1.0, 0.0]),
            "a1": np.array([0.70, math.sqrt(1 - 0.49)]),
            "a2": np.array([0.70, -math.sqrt(1 - 0.49)]),
            "b1": np.array([0.69, math.sqrt(1 - 0.69 ** 2)]),
            "b2": np.array([0.69, -math.sqrt(1 - 0.69 ** 2)]),
        }
        meta = {k: InstanceMeta("dog", "cat") for k in vectors}
        store = EmbeddingStore(dim=2, vectors=vectors, meta=meta)
        ecs = [
            CandidateEC(id="b", exemplars=("b1", "b2")),
            CandidateEC(id="a", exemplars=("a1", "a2")),
        ]
        winner, score = assign_ec("probe", ecs, store)
        assert winner == "a"
        assert score == pytest.approx(0.70, abs=1e-12)

    def test_tie_breaks_to_smaller_ec_id(self):
        vectors = {
            "probe": np.array([1.0, 0.0]),
            "e1": np.array([1.0, 0.0]),
            "e2": np.array([0.0, 1.0]),
        }
        meta = {k: InstanceMeta("dog", "cat") for k in vectors}
        store = EmbeddingStore(dim=2, vectors=vectors, meta=meta)
        ecs = [
            CandidateEC(id="z", exemplars=("e1", "e2")),
            CandidateEC(id="a", exemplars=("e1", "e2")),
        ]
        winner, _ = assign_ec("probe", ecs, store)
        assert winner == "a"


class TestFinalize:
    def test_duplicate_exemplar_pairs_merge(self, synthetic_store):
        candidates = false_negative_candidates(synthetic_store, "dog")
        ec1 = build_candidate_ec("i002", candidates, synthetic_store, ec_id="ec-a")
        ec2 = CandidateEC(id="ec-b", exemplars=ec1.exemplars)
        assignments = {
            iid: assign_ec(iid, [ec1, ec2], synthetic_store)
            for iid in synthetic_store.ids()
        }
        params = FinalizeParams(target_ecs=1, per_ec=5, seed=1)
        case_base = finalize([ec1, ec2], assignments, synthetic_store, params)
        assert [e.id for e in case_base.ec_registry] == ["ec-a"]

    def test_pipeline_contract(self, synthetic_store):
        params = FinalizeParams(target_ecs=12, per_ec=10, seed=42)
        case_base, diagnostics = build_categories(synthetic_store, "dog", params)
        assert len(case_base.ec_registry) == 12
        assert len(case_base.cases) == 120
        assert diagnostics["false_negatives"] == 40
        sizes = case_base.class_sizes()
        assert all(size == 10 for size in sizes.values())
        fn = set(false_negative_candidates(synthetic_store, "dog"))
        for ec in case_base.ec_registry:
            assert set(ec.exemplar_refs) <= fn

    def test_seeded_determinism(self, synthetic_store, tmp_path):
        params = FinalizeParams(target_ecs=12, per_ec=10, seed=7)
        first, _ = build_categories(synthetic_store, "dog", params)
        second, _ = build_categories(synthetic_store, "dog", params)
        assert first == second
        save_case_base(first, tmp_path / "a.csv", tmp_path / "a.json")
        save_case_base(second, tmp_path / "b.csv", tmp_path / "b.json")
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()

    def test_supply_shortfall_raises(self, synthetic_store):
        params = FinalizeParams(target_ecs=12, per_ec=50, seed=1)
        with pytest.raises(EcBuilderError, match="mapped instances"):
            build_categories(synthetic_store, "dog", params)

    def test_allow_short_takes_all(self, synthetic_store, caplog):
        import logging

        params = FinalizeParams(target_ecs=12, per_ec=50, seed=1, allow_short=True)
        with caplog.at_level(logging.WARNING, logger="kbxai.ecbuilder"):
            case_base, _ = build_categories(synthetic_store, "dog", params)
        assert len(case_base.ec_registry) == 12
        assert any("short" in record.message for record in caplog.records)

    def test_too_few_surviving_ecs(self, synthetic_store):
        params = FinalizeParams(target_ecs=50, per_ec=2, seed=1)
        with pytest.raises(EcBuilderError, match="survive"):
            build_categories(synthetic_store, "dog", params)

    def test_no_false_negatives_is_an_error(self):
        vectors = {"a": np.array([1.0, 0.0]), "b": np.array([0.0, 1.0])}
        meta = {"a": InstanceMeta("dog", "dog"), "b": InstanceMeta("cat", "cat")}
        store = EmbeddingStore(dim=2, vectors=vectors, meta=meta)
        with pytest.raises(EcBuilderError, match="false negatives"):
            build_categories(store, "dog", FinalizeParams(target_ecs=1, per_ec=1))


class TestEmbeddingFile:
    def test_round_trip(self, tmp_path):
        store = build_synthetic_store(seed=5)
        path = tmp_path / "embeddings.csv"
        save_embeddings(store, path)
        loaded = load_embeddings(path)
        assert loaded.dim == store.dim
        assert loaded.meta == store.meta
        for iid in store.ids():
            assert np.array_equal(loaded.vectors[iid], store.vectors[iid])

    def test_header_mandatory(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,b,c\n")
        with pytest.raises(EcBuilderError):
            load_embeddings(path)

    def test_zero_vector_rejected(self, tmp_path):
        path = tmp_path / "zero.csv"
        path.write_text(
            "id,true_label,predicted_label,v0,v1\n"
            "a,dog,cat,0.0,0.0\n"
        )
        with pytest.raises(EcBuilderError, match="zero"):
            load_embeddings(path)

    def test_store_invariants(self):
        with pytest.raises(EcBuilderError):
            EmbeddingStore(
                dim=2,
                vectors={"a": np.ones(2)},
                meta={},
            )
        with pytest.raises(EcBuilderError):
            EmbeddingStore(
                dim=3,
                vectors={"a": np.ones(2)},
                meta={"a": InstanceMeta("x", "y")},
            )
