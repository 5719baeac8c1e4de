"""errforge: taxonomy-targeted synthetic student-error generation.

A two-agent loop (drafting agent + judging agent) produces wrong
answers that exemplify a requested cognitive failure mode, records
every (question, class) cell as an auditable dataset row, and
recomputes the process metrics (targeted-error rate, acceptance@k,
retry statistics, cost shape, cascade agreement) from those rows.
"""

from .backends import (
    CallUsage,
    CellUsageTotal,
    CompletionRequest,
    CompletionResult,
    OpenAIBackend,
    PricingTable,
    ScriptedBackend,
    UsageLedger,
    cost_of,
    ledger_percentiles,
)
from .examination import (
    ClassifierJudge,
    Judgment,
    PromptedJudge,
    assemble_ea_prompt,
    encode_classifier_input,
)
from .generation import Draft, GroundingBundle, assemble_ga_prompt, build_grounding
from .loop import CascadeReport, LoopEngine, cascade_rejudge
from .pipelines import PipelineConfig, RunPlan, config_for, validate
from .questions import Question, SubjectMap, ingest, slice_pool
from .refusal import RefusalRuleSet, is_refusal
from .store import (
    CellRecord,
    EffectiveRecord,
    LabelEvent,
    apply_label,
    append_record,
    effective_records,
    export_training_set,
    read_records,
)
from .taxonomy import ErrorClass, Exemplar, ExemplarStore, class_of

__all__ = [
    "CallUsage",
    "CellUsageTotal",
    "CompletionRequest",
    "CompletionResult",
    "OpenAIBackend",
    "PricingTable",
    "ScriptedBackend",
    "UsageLedger",
    "cost_of",
    "ledger_percentiles",
    "ClassifierJudge",
    "Judgment",
    "PromptedJudge",
    "assemble_ea_prompt",
    "encode_classifier_input",
    "Draft",
    "GroundingBundle",
    "assemble_ga_prompt",
    "build_grounding",
    "CascadeReport",
    "LoopEngine",
    "cascade_rejudge",
    "PipelineConfig",
    "RunPlan",
    "config_for",
    "validate",
    "Question",
    "SubjectMap",
    "ingest",
    "slice_pool",
    "RefusalRuleSet",
    "is_refusal",
    "CellRecord",
    "EffectiveRecord",
    "LabelEvent",
    "apply_label",
    "append_record",
    "effective_records",
    "export_training_set",
    "read_records",
    "ErrorClass",
    "Exemplar",
    "ExemplarStore",
    "class_of",
]

__version__ = "0.1.0"
