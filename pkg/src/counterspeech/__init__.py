"""Counter-speech intervention engine.

Detects topic-specific hate speech in a post stream, generates fact-grounded
replies from a verified-article store, gates them through mandatory human
review, runs a randomized two-arm intervention experiment, and computes the
engagement and reply-ratio statistics with significance tests.
"""

from .analysis import (
    build_observations,
    compare_groups,
    engagement,
    filter_observations,
    first_reply_share,
    link_impact,
    percentile_table,
    reply_ratio,
)
from .classifier import HateSpeechClassifier, LabeledExample, predict, train
from .clock import SimulatedClock, SystemClock
from .embeddings import LocalHashEmbedder, cosine_similarity, embed
from .experiment import ArmAssigner, ExperimentRunner, ScheduleConfig, saturation_check
from .ingest import build_query, fetch_recent, matches_query, persist, read_corpus
from .models import (
    AnalysisFilter,
    Article,
    CandidateReply,
    ExperimentAssignment,
    MetricsSnapshot,
    Observation,
    PostRecord,
    QuerySpec,
    ReviewItem,
    TestResult,
)
from .responder import (
    PromptAssembly,
    ResponderConfig,
    assemble_prompt,
    estimate_cost,
    generate_reply,
    rank_articles,
)
from .review import RejectionReason, ReviewQueue, audit_postings
from .stats import bootstrap_p, nearest_rank_percentiles, welch_t
from .store import Store

__version__ = "0.1.0"

__all__ = [
    "AnalysisFilter",
    "ArmAssigner",
    "Article",
    "CandidateReply",
    "ExperimentAssignment",
    "ExperimentRunner",
    "HateSpeechClassifier",
    "LabeledExample",
    "LocalHashEmbedder",
    "MetricsSnapshot",
    "Observation",
    "PostRecord",
    "PromptAssembly",
    "QuerySpec",
    "RejectionReason",
    "ResponderConfig",
    "ReviewItem",
    "ReviewQueue",
    "ScheduleConfig",
    "SimulatedClock",
    "Store",
    "SystemClock",
    "TestResult",
    "assemble_prompt",
    "audit_postings",
    "bootstrap_p",
    "build_observations",
    "build_query",
    "compare_groups",
    "cosine_similarity",
    "embed",
    "engagement",
    "estimate_cost",
    "fetch_recent",
    "filter_observations",
    "first_reply_share",
    "generate_reply",
    "link_impact",
    "matches_query",
    "nearest_rank_percentiles",
    "percentile_table",
    "persist",
    "predict",
    "rank_articles",
    "read_corpus",
    "reply_ratio",
    "saturation_check",
    "train",
    "welch_t",
]
