"""Proximity full-text search over three-component stop-lemma key indexes."""

from .builder import (
    GroupTask,
    IterationReport,
    UtilizationLog,
    build_iteration,
    extract_first,
    flush_queues,
    process_group_optimized,
    process_group_simplified,
    utilization,
)
from .ingest import DocumentRegistry, Occurrence, OccurrenceArray, ingest_iteration, prune_occurrences
from .layout import Layout, Span, TripleKey, canonicalize, plan_layout, route
from .lexicon import (
    BuildConfig,
    DictionaryLemmatizer,
    FrequencyList,
    IdentityLemmatizer,
    LemmaClass,
    build_frequency_list,
    classify,
    tokenize,
)
from .oracle import reference_postings
from .query import SearchHit, evaluate, proximity_score, roundtrip_check
from .store import IndexStore, TriplePosting, resolve_positions

__version__ = "0.1.0"

__all__ = [
    "BuildConfig",
    "DictionaryLemmatizer",
    "DocumentRegistry",
    "FrequencyList",
    "GroupTask",
    "IdentityLemmatizer",
    "IndexStore",
    "IterationReport",
    "Layout",
    "LemmaClass",
    "Occurrence",
    "OccurrenceArray",
    "SearchHit",
    "Span",
    "TripleKey",
    "TriplePosting",
    "UtilizationLog",
    "build_frequency_list",
    "build_iteration",
    "canonicalize",
    "classify",
    "evaluate",
    "extract_first",
    "flush_queues",
    "ingest_iteration",
    "plan_layout",
    "process_group_optimized",
    "process_group_simplified",
    "proximity_score",
    "prune_occurrences",
    "reference_postings",
    "resolve_positions",
    "roundtrip_check",
    "route",
    "tokenize",
    "utilization",
]
