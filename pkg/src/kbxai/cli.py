"""Command-line entry point wiring dataset generation, EC construction,
baseline and ablation evaluation, and single-query explanation.

Every command is deterministic given its flags, input bytes, and seed; a
manifest with resolved parameters and input digests is written next to
every file output. Exit codes: 0 success, 1 domain error, 2 usage or I/O
error. KBXAI_THREADS caps internal parallelism without changing output.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .casebase import (
    CaseBaseError,
    NUMERIC,
    attach_feature,
    load_case_base,
    load_feature_column,
    nominalize_input,
    save_case_base,
)
from .credit import CreditError, default_rule_table, gen_credit_cases, load_rule_table
from .ecbuilder import (
    EcBuilderError,
    FinalizeParams,
    build_categories,
    load_embeddings,
)
from .engine import (
    EngineError,
    EvalConfig,
    baseline_accuracy,
    default_relieff_params,
    relieff_weights,
    select_ec,
    WeightVector,
)
from .extension import (
    AblationConfig,
    AblationError,
    RuleError,
    ablate,
    default_jobs,
    derive_features,
    render_markdown,
    report_to_json,
)

DOMAIN_ERRORS = (
    CaseBaseError,
    EngineError,
    RuleError,
    AblationError,
    CreditError,
    EcBuilderError,
)


class UsageError(Exception):
    """Malformed invocation discovered after argument parsing."""


def _sha256(path: Path) -> str:
    return "sha256:" + hashlib.sha256(path.read_bytes()).hexdigest()


def _manifest_doc(command: str, parameters: dict, inputs: list[Path], seed) -> dict:
    return {
        "command": command,
        "parameters": parameters,
        "inputs": {str(p): _sha256(p) for p in inputs},
        "seed": seed,
        "version": __version__,
        "timestamp": datetime.now(timezone.utc).isoformat(),
    }


def _write_manifest(
    out_dir: Path, command: str, parameters: dict, inputs: list[Path], seed
) -> None:
    with open(out_dir / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(_manifest_doc(command, parameters, inputs, seed), fh, indent=2)
        fh.write("\n")


def _write_json(path: Path, doc) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def _load_case_base(args):
    return load_case_base(args.case_base, args.schema)


def _prepare(case_base, args):
    if getattr(args, "nominal_input", False):
        case_base = nominalize_input(case_base)
    return case_base


def cmd_gen_credit(args) -> int:
    table = load_rule_table(args.table) if args.table else default_rule_table()
    case_base = gen_credit_cases(table, take=args.take, seed=args.seed)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    save_case_base(case_base, out_dir / "cases.csv", out_dir / "schema.json")
    _write_manifest(
        out_dir,
        "gen-credit",
        {"take": args.take, "table": args.table or "builtin"},
        [Path(args.table)] if args.table else [],
        args.seed,
    )
    print(f"wrote {len(case_base.cases)} cases, {len(case_base.ec_registry)} ECs"
          f" to {out_dir}")
    return 0


def cmd_baseline(args) -> int:
    case_base = _prepare(_load_case_base(args), args)
    config = EvalConfig(
        active_features=case_base.agent_feature_names(),
        knn_k=args.k,
        strict_folds=args.strict_folds,
    )
    accuracy = baseline_accuracy(case_base, config)
    params = default_relieff_params(case_base)
    weights = relieff_weights(case_base, params, case_base.agent_feature_names())
    print(f"baseline_accuracy {accuracy:.4f}")
    for name in weights.weights:
        print(f"weight {name} {weights.weights[name]:.6f}"
              f" retrieval {weights.retrieval_weights[name]:.6f}")
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        _write_json(out, {"baseline_accuracy": accuracy, **weights.to_json()})
        _write_json(
            out.with_suffix(".manifest.json"),
            _manifest_doc(
                "baseline",
                {"k": args.k, "strict_folds": args.strict_folds,
                 "nominal_input": args.nominal_input},
                [Path(args.case_base), Path(args.schema)],
                None,
            ),
        )
    return 0


def _attach_candidates(case_base, args) -> tuple:
    candidates = []
    if args.rules:
        with open(args.rules, "r", encoding="utf-8") as fh:
            sources = json.load(fh)
        case_base = derive_features(case_base, sources)
        candidates.extend(source["name"] for source in sources)
    for entry in args.column or []:
        name, _, path = entry.partition("=")
        if not path:
            raise AblationError(f"--column expects NAME=PATH, got {entry!r}")
        values = load_feature_column(path, kind=args.column_kind)
        case_base = attach_feature(case_base, name, values, args.column_kind)
        candidates.append(name)
    if not candidates:
        raise AblationError("no candidate features: pass --rules and/or --column")
    return case_base, tuple(candidates)


def cmd_ablate(args) -> int:
    # Rules read the agent's base features, so candidates attach before any
    # nominal-input collapse; supplemental columns survive it.
    case_base, candidates = _attach_candidates(_load_case_base(args), args)
    case_base = _prepare(case_base, args)
    max_subset = args.max_subset if args.max_subset is not None else len(candidates)
    config = AblationConfig(
        candidates=candidates,
        max_subset_size=max_subset,
        knn_k=args.k,
        strict_folds=args.strict_folds,
        force=args.force,
    )
    report = ablate(case_base, config, n_jobs=default_jobs())
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_json(out_dir / "ablation.json", report_to_json(report))
    with open(out_dir / "ablation.md", "w", encoding="utf-8") as fh:
        fh.write(render_markdown(report))
    inputs = [Path(args.case_base), Path(args.schema)]
    if args.rules:
        inputs.append(Path(args.rules))
    for entry in args.column or []:
        inputs.append(Path(entry.partition("=")[2]))
    _write_manifest(
        out_dir,
        "ablate",
        {
            "candidates": list(candidates),
            "max_subset": max_subset,
            "k": args.k,
            "strict_folds": args.strict_folds,
            "nominal_input": args.nominal_input,
        },
        inputs,
        None,
    )
    print(f"baseline {report.baseline:.4f} best {report.rows[0].accuracy:.4f}"
          f" with {'+'.join(report.best) or '(none)'}")
    return 0


def cmd_build_ec(args) -> int:
    store = load_embeddings(args.embeddings)
    params = FinalizeParams(
        target_ecs=args.target,
        per_ec=args.per_ec,
        min_score_quantile=args.quantile,
        seed=args.seed,
        allow_short=args.allow_short,
    )
    case_base, diagnostics = build_categories(store, args.positive_label, params)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    save_case_base(case_base, out_dir / "cases.csv", out_dir / "schema.json")
    _write_manifest(
        out_dir,
        "build-ec",
        {
            "positive_label": args.positive_label,
            "target": args.target,
            "per_ec": args.per_ec,
            "quantile": args.quantile,
            "allow_short": args.allow_short,
            "diagnostics": diagnostics,
        },
        [Path(args.embeddings)],
        args.seed,
    )
    print(f"wrote {len(case_base.cases)} cases, {len(case_base.ec_registry)} ECs"
          f" to {out_dir}")
    return 0


def cmd_explain(args) -> int:
    case_base = _prepare(_load_case_base(args), args)
    query = json.loads(args.query)
    if not isinstance(query, dict):
        raise UsageError("--query must be a JSON object of feature values")
    schema_index = case_base.schema_index()
    for name in query:
        if name not in schema_index:
            raise UsageError(f"query has unknown feature {name!r}")
    if args.weights:
        with open(args.weights, "r", encoding="utf-8") as fh:
            weights = WeightVector.from_json(json.load(fh))
    else:
        weights = relieff_weights(case_base)
    selection = select_ec(query, case_base, weights, knn_k=args.k)
    ec = case_base.ec(selection.ec_id)
    print(f"selected {ec.id}: {ec.text}")
    for nb in selection.neighbors:
        print(f"neighbor {nb.case_id} sim {nb.similarity:.4f} ec {nb.ec_id}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kbxai",
        description="Case-based selection of explanation categories.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-credit", help="generate the synthetic credit case base")
    group = p.add_mutually_exclusive_group()
    group.add_argument("--all", action="store_true", help="emit all 64 grid points")
    group.add_argument("--take", type=int, default=None, help="subsample N points")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--table", default=None, help="rule table JSON (default: builtin)")
    p.add_argument("--out-dir", default=".", help="output directory")
    p.set_defaults(func=cmd_gen_credit)

    p = sub.add_parser("baseline", help="LOOCV accuracy over the agent's features")
    p.add_argument("case_base", help="case-base CSV")
    p.add_argument("schema", help="schema JSON")
    p.add_argument("--nominal-input", action="store_true")
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--strict-folds", action="store_true")
    p.add_argument("--out", default=None, help="also write a JSON report here")
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("ablate", help="feature-subset ablation study")
    p.add_argument("case_base")
    p.add_argument("schema")
    p.add_argument("--rules", default=None, help="JSON array of feature rules")
    p.add_argument(
        "--column",
        action="append",
        metavar="NAME=PATH",
        help="attach an id,value column as a candidate (repeatable)",
    )
    p.add_argument("--column-kind", default=NUMERIC,
                   choices=("numeric", "nominal", "boolean"))
    p.add_argument("--max-subset", type=int, default=None)
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--strict-folds", action="store_true")
    p.add_argument("--nominal-input", action="store_true")
    p.add_argument("--force", action="store_true",
                   help="override the combinatorial budget guard")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("build-ec", help="build ECs from an embedding file")
    p.add_argument("embeddings", help="id,true_label,predicted_label,v0.. CSV")
    p.add_argument("--positive-label", required=True)
    p.add_argument("--target", type=int, default=12)
    p.add_argument("--per-ec", type=int, default=10)
    p.add_argument("--quantile", type=float, default=0.25)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--allow-short", action="store_true")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_build_ec)

    p = sub.add_parser("explain", help="select an EC for one query pair")
    p.add_argument("case_base")
    p.add_argument("schema")
    p.add_argument("--query", required=True, help="JSON object of feature values")
    p.add_argument("--weights", default=None, help="weight-vector JSON file")
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--nominal-input", action="store_true")
    p.set_defaults(func=cmd_explain)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "ablate" and args.max_subset is not None and args.max_subset < 1:
        parser.error("--max-subset must be >= 1")
    if args.command == "gen-credit" and args.take is not None and args.take < 1:
        parser.error("--take must be >= 1")
    try:
        return args.func(args)
    except DOMAIN_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except json.JSONDecodeError as exc:
        print(f"error: invalid JSON: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
