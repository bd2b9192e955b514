"""Case-based selection of explanation categories for classifier agents.

The library maps an agent's input-output pairs to explanation categories
through weighted k-nearest-neighbor retrieval, learns feature weights with
ReliefF, measures configurations with leave-one-out cross-validation, and
searches supplemental-feature subsets for the ones that raise accuracy
over the agent-only baseline.
"""

__version__ = "0.1.0"

from .casebase import (
    AGENT_INPUT,
    AGENT_OUTPUT,
    BOOLEAN,
    NOMINAL,
    NUMERIC,
    SUPPLEMENTAL,
    Case,
    CaseBase,
    CaseBaseError,
    ExplanationCategory,
    FeatureSchema,
    attach_feature,
    build_from_log,
    load_case_base,
    load_feature_column,
    nominalize_input,
    save_case_base,
    save_feature_column,
)
from .engine import (
    EngineError,
    EvalConfig,
    Neighbor,
    ReliefFParams,
    Selection,
    WeightVector,
    baseline_accuracy,
    default_relieff_params,
    global_sim,
    local_sim,
    loocv_accuracy,
    relieff_weights,
    select_ec,
)
from .extension import (
    AblationConfig,
    AblationError,
    AblationReport,
    AblationRow,
    FeatureRule,
    RuleError,
    ablate,
    compile_rule,
    derive_feature,
    derive_features,
    redundancy_index,
    render_markdown,
    report_to_json,
)
from .credit import (
    CreditError,
    CreditRule,
    CreditRuleTable,
    default_rule_table,
    default_supplemental_rules,
    gen_credit_cases,
)
from .ecbuilder import (
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

__all__ = [name for name in dir() if not name.startswith("_")]
