"""Instruction-tuning dataset curation toolkit.

Corpus ingestion and keyword filtering, exact/near duplicate removal,
benchmark contamination audit with human triage, LoRA adapter merge
arithmetic, and benchmark delta reporting.
"""

__version__ = "0.1.0"

from .corpus import (
    ALPACA_TEMPLATE_NO_INPUT,
    ALPACA_TEMPLATE_WITH_INPUT,
    ConfigError,
    DatasetManifest,
    IngestResult,
    KeywordFilterSpec,
    ManifestEntry,
    QuestionRecord,
    format_alpaca,
    ingest,
    keyword_filter,
    normalize_text,
    serialize,
)
from .similarity import (
    EmbedderSpec,
    LexicalEmbedder,
    SimilarPair,
    cosine,
    embed,
    exact_duplicates,
    near_duplicates,
    resolve_duplicates,
)
from .decontam import (
    BenchmarkQuestion,
    BenchmarkSet,
    ContaminationFlag,
    DecisionLog,
    LeakReport,
    TriageDecision,
    TriageState,
    apply_removal_policy,
    audit,
    leak_report,
    record_decision,
    replay,
    suggest_category,
)
from .adapterlab import (
    FinetuneConfig,
    LoraAdapter,
    WeightMatrix,
    adapter_forward,
    merge_adapter,
    merge_recipe,
    validate_config,
)
from .report import (
    DeltaTable,
    EvalScores,
    average,
    averages_table,
    change_in_percent,
    delta_table,
    percent_change,
    render,
)
from .pipeline import PipelineConfig, run_pipeline
