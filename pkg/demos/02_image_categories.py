"""Walkthrough: building explanation categories from embeddings.

Uses a synthetic embedding store shaped like an image study: instances in
cosine clusters, some of them false negatives of a binary classifier. The
pipeline proposes candidate categories from misclassified exemplars,
assigns every instance by median cosine, and finalizes a 12 x 10 case base.
A supplemental similarity column then lifts LOOCV accuracy over baseline.
"""

import sys
import pathlib

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parent.parent / "tests"))
from conftest import build_synthetic_store

from kbxai.casebase import NUMERIC, attach_feature
from kbxai.ecbuilder import (
    FinalizeParams,
    build_categories,
    cosine,
    false_negative_candidates,
)
from kbxai.engine import EvalConfig, loocv_accuracy

store = build_synthetic_store()
print(f"embedding store: {len(store.ids())} instances, dim {store.dim}")

candidates = false_negative_candidates(store, "dog")
print(f"false negatives of the positive class: {len(candidates)}")

params = FinalizeParams(target_ecs=12, per_ec=10, min_score_quantile=0.25, seed=42)
case_base, diagnostics = build_categories(store, "dog", params)
print(f"proposed categories: {diagnostics['proposed_ecs']}")
print(f"final case base: {len(case_base.cases)} cases,"
      f" {len(case_base.ec_registry)} categories")
for ec in case_base.ec_registry[:3]:
    print(f"  {ec.id}: exemplars {ec.exemplar_refs}")
print("  ...")

print("\nbaseline over (instance id, predicted label):")
config = EvalConfig(active_features=case_base.agent_feature_names(), knn_k=1)
base = loocv_accuracy(case_base, config)
print(f"  LOOCV accuracy {base:.4f}")

print("\nattach a typical-exemplar similarity column and re-evaluate:")
typical = store.vectors[candidates[0]]
column = {c.id: cosine(store.vectors[c.id], typical) for c in case_base.cases}
extended = attach_feature(case_base, "typical_sim", column, NUMERIC)
config = EvalConfig(
    active_features=extended.agent_feature_names() + ("typical_sim",), knn_k=1
)
lifted = loocv_accuracy(extended, config)
print(f"  with typical_sim: {lifted:.4f} (baseline {base:.4f})")
