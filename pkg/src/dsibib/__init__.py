"""dsibib: divergent semantic integration scoring and citation analysis.

The package scores scholarly abstracts by the semantic distance between
their sentences (DSI), then relates those scores to citation outcomes with
a small, fully reproducible statistics toolkit. See the README for the CLI.
"""

from .corpus import (
    CorpusRecord,
    IngestResult,
    ScoredRecord,
    citation_window_filter,
    filter_records,
    ingest,
    load_field_mapping,
    load_scores,
    map_fields,
    persist_scores,
    sample_per_subject,
    score_record_to_line,
    top_subjects,
    write_records,
)
from .dsi import (
    DEFAULT_LAYERS,
    MEAN_OF_PAIRS,
    SUM_OVER_4N,
    DsiConfig,
    DsiScore,
    cosine_distance,
    dsi,
    pairwise_distance_sum,
)
from .embeddings import (
    EmbeddingProvider,
    EmbeddingSet,
    MockEmbeddingProvider,
    OnnxEmbeddingProvider,
    PrecomputedEmbeddingProvider,
    load_precomputed,
    mock_sentence_vector,
    pool_tokens,
    save_precomputed,
)
from .estimators import DsiOlsRegressor, DsiScorer, SentenceSegmenter
from .pipeline import (
    PipelineConfig,
    RunReport,
    benchmark,
    load_checkpoint,
    resume,
    run_scoring,
    synthesize_records,
)
from .segmentation import (
    PROTECTED_ABBREVIATIONS,
    SentenceList,
    compose_narrative,
    count_spaces,
    passes_length_filter,
    segment,
)
from .stats import (
    AnovaResult,
    CoefficientStats,
    DescriptiveStats,
    DummyEncoding,
    FieldLine,
    OlsResult,
    TrendPoint,
    anova_oneway,
    describe_groups,
    dummy_encode,
    f_tail_probability,
    jarque_bera,
    log10_plus_one,
    ols_fit,
    regression_line_per_field,
    t_quantile,
    t_tail_probability,
    trend_by_year,
)

__version__ = "0.1.0"

__all__ = [
    "AnovaResult",
    "CoefficientStats",
    "CorpusRecord",
    "DEFAULT_LAYERS",
    "DescriptiveStats",
    "DsiConfig",
    "DsiOlsRegressor",
    "DsiScore",
    "DsiScorer",
    "DummyEncoding",
    "EmbeddingProvider",
    "EmbeddingSet",
    "FieldLine",
    "IngestResult",
    "MEAN_OF_PAIRS",
    "MockEmbeddingProvider",
    "OlsResult",
    "OnnxEmbeddingProvider",
    "PROTECTED_ABBREVIATIONS",
    "PipelineConfig",
    "PrecomputedEmbeddingProvider",
    "RunReport",
    "SUM_OVER_4N",
    "ScoredRecord",
    "SentenceList",
    "SentenceSegmenter",
    "TrendPoint",
    "anova_oneway",
    "benchmark",
    "citation_window_filter",
    "compose_narrative",
    "cosine_distance",
    "count_spaces",
    "describe_groups",
    "dsi",
    "dummy_encode",
    "f_tail_probability",
    "filter_records",
    "ingest",
    "jarque_bera",
    "load_checkpoint",
    "load_field_mapping",
    "load_precomputed",
    "load_scores",
    "log10_plus_one",
    "map_fields",
    "mock_sentence_vector",
    "ols_fit",
    "pairwise_distance_sum",
    "passes_length_filter",
    "persist_scores",
    "pool_tokens",
    "regression_line_per_field",
    "resume",
    "run_scoring",
    "sample_per_subject",
    "save_precomputed",
    "score_record_to_line",
    "segment",
    "synthesize_records",
    "t_quantile",
    "t_tail_probability",
    "top_subjects",
    "trend_by_year",
    "write_records",
]
