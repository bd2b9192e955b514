"""Walkthrough: the declarative rule language for derived features.

Rules are JSON objects: a name plus one expression node. Atoms compare a
base feature against a constant or test the agent's label; all / any / not
combine them. A derived feature reads 1 where the rule holds, else 0.
"""

import json

import kbxai
from kbxai.extension import compile_rule, derive_feature

case_base = kbxai.gen_credit_cases()
schemas = case_base.schemas

examples = [
    {
        "name": "low_debt_accept",
        "all": [{"feat": "X3", "op": "==", "value": 0}, {"label": "accept"}],
    },
    {
        "name": "weak_or_no_credit",
        "any": [
            {"feat": "X2", "op": "<=", "value": 0},
            {"not": {"feat": "X1", "op": ">=", "value": 3}},
        ],
    },
    {
        "name": "never_true",
        "any": [],
    },
]

for source in examples:
    print(json.dumps(source))
    rule = compile_rule(source, schemas)
    derived = derive_feature(case_base, rule)
    values = [c.problem[rule.name] for c in derived.cases]
    print(f"  -> attached boolean column {rule.name!r},"
          f" {sum(values)} of {len(values)} cases set\n")

print("type errors are caught at compile time:")
try:
    compile_rule(
        {"name": "bad", "feat": "label_text", "op": "<", "value": "x"}, schemas
    )
except Exception as exc:
    print(f"  {type(exc).__name__}: {exc}")
try:
    compile_rule({"name": "bad", "feat": "X1", "op": "~", "value": 1}, schemas)
except Exception as exc:
    print(f"  {type(exc).__name__}: {exc}")
