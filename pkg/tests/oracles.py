"""Independent brute-force oracles for the retrieval engine.

These deliberately re-implement local similarity, the ReliefF update rule,
EC voting, and LOOCV fold enumeration from scratch, sharing no code with
kbxai.engine. Tests freeze values computed here and also compare the two
implementations live.
"""

from __future__ import annotations

from kbxai.casebase import CaseBase


def oracle_local_sim(schema, a, b) -> float:
    if a is None or b is None:
        return 0.0
    if schema.kind == "nominal":
        return 1.0 if a == b else 0.0
    if schema.kind == "boolean":
        return 1.0 if int(a) == int(b) else 0.0
    rng = schema.observed_range
    if rng is None or rng[0] == rng[1]:
        return 1.0
    sim = 1.0 - abs(float(a) - float(b)) / (rng[1] - rng[0])
    return min(1.0, max(0.0, sim))


def oracle_relieff(case_base: CaseBase, active, k: int, cases=None) -> dict[str, float]:
    """Literal ReliefF update trace: every case is a pass, ties by case id."""
    schema = case_base.schema_index()
    cases = sorted(cases if cases is not None else case_base.cases, key=lambda c: c.id)
    m = len(cases)
    by_class: dict[str, list] = {}
    for case in cases:
        by_class.setdefault(case.solution, []).append(case)
    freq = {cls: len(members) / m for cls, members in by_class.items()}

    def diff(name, x, y):
        return 1.0 - oracle_local_sim(schema[name], x.problem[name], y.problem[name])

    def distance(x, y):
        d = 0.0
        for name in active:
            d += diff(name, x, y)
        return d

    weights = {name: 0.0 for name in active}
    for r in cases:
        hits = [c for c in by_class[r.solution] if c.id != r.id]
        hits.sort(key=lambda c: (distance(r, c), c.id))
        k_h = min(k, len(hits))
        if k_h:
            for name in active:
                total = 0.0
                for h in hits[:k_h]:
                    total += diff(name, r, h)
                weights[name] -= total / (m * k_h)
        for other in sorted(by_class):
            if other == r.solution:
                continue
            misses = sorted(by_class[other], key=lambda c: (distance(r, c), c.id))
            k_c = min(k, len(misses))
            scale = freq[other] / (1.0 - freq[r.solution])
            for name in active:
                total = 0.0
                for miss in misses[:k_c]:
                    total += diff(name, r, miss)
                weights[name] += scale * total / (m * k_c)
    return weights


def oracle_retrieval_weights(raw: dict[str, float]) -> dict[str, float]:
    clamped = {f: max(0.0, w) for f, w in raw.items()}
    if all(w == 0.0 for w in clamped.values()):
        return {f: 1.0 / len(clamped) for f in clamped}
    return clamped


def oracle_classify(query, cases, retrieval, schema, active, knn_k) -> str:
    """Weighted-kNN vote: neighbor ties by case id, EC ties by smallest id."""
    scored = []
    for case in sorted(cases, key=lambda c: c.id):
        num = 0.0
        den = 0.0
        for name in active:
            w = retrieval[name]
            num += w * oracle_local_sim(schema[name], query[name], case.problem[name])
            den += w
        scored.append((num / den, case))
    scored.sort(key=lambda item: (-item[0], item[1].id))
    votes: dict[str, float] = {}
    for sim, case in scored[:knn_k]:
        votes[case.solution] = votes.get(case.solution, 0.0) + sim
    return min(votes, key=lambda ec: (-votes[ec], ec))


def _fold_weights(case_base, cases, active, relieff_k):
    classes = {c.solution for c in cases}
    if len(classes) < 2:
        return oracle_retrieval_weights({name: 0.0 for name in active})
    return oracle_retrieval_weights(
        oracle_relieff(case_base, active, relieff_k, cases=cases)
    )


def oracle_loocv(
    case_base: CaseBase,
    active,
    knn_k: int,
    relieff_k: int,
    strict: bool = False,
) -> float:
    """Exhaustive fold-by-fold enumeration of LOOCV accuracy."""
    schema = case_base.schema_index()
    cases = sorted(case_base.cases, key=lambda c: c.id)
    if not strict:
        retrieval = _fold_weights(case_base, cases, active, relieff_k)
    correct = 0
    for held in cases:
        rest = [c for c in cases if c.id != held.id]
        fold_retrieval = (
            _fold_weights(case_base, rest, active, relieff_k) if strict else retrieval
        )
        predicted = oracle_classify(
            held.problem, rest, fold_retrieval, schema, active, knn_k
        )
        if predicted == held.solution:
            correct += 1
    return correct / len(cases)
