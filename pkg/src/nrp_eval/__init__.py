"""Rank-based evaluation of generated answers inside judged document pools.

A generated answer is injected, one at a time, into the pool of
human-written documents judged for its query; the pool is ranked by a
validated pointwise retrieval model and the answer's normalized rank
position (1 - rank / pool size) scores its quality.
"""

from .answers import GeneratedAnswer, answer_item_id, load_answers, save_answers
from .corpus import (
    CorpusError,
    Document,
    DocumentPool,
    JudgmentSet,
    Query,
    filter_short_documents,
    load_documents,
    load_qrels,
    load_queries,
    parse_documents,
    parse_qrels,
    parse_queries,
    pool_for_query,
)
from .genclient import GenParams, PROMPT_TEMPLATES, generate_answers, render_prompt
from .metrics import (
    NrpRecord,
    NrpSummary,
    aggregate_nrp,
    kendall_tau,
    ndcg_at_k,
    nrp,
    rbo,
)
from .pipeline import (
    AgreementResult,
    ExperimentData,
    PipelineError,
    ValidationReport,
    agreement,
    emit_reports,
    evaluate_answers,
    load_experiment,
    select_study_sample,
    validate_rankers,
)
from .protocol import ScorerProtocolError
from .scorers import (
    CollectionStats,
    DphScorer,
    EchoScorer,
    ExternalScorer,
    Ranking,
    TfidfScorer,
    build_stats,
    make_scorer,
    rank_pool,
    score_dph,
    score_tfidf,
    tokenize,
)
from .textextract import extract_text

__version__ = "0.1.0"

__all__ = [
    "AgreementResult",
    "CollectionStats",
    "CorpusError",
    "Document",
    "DocumentPool",
    "DphScorer",
    "EchoScorer",
    "ExperimentData",
    "ExternalScorer",
    "GenParams",
    "GeneratedAnswer",
    "JudgmentSet",
    "NrpRecord",
    "NrpSummary",
    "PROMPT_TEMPLATES",
    "PipelineError",
    "Query",
    "Ranking",
    "ScorerProtocolError",
    "TfidfScorer",
    "ValidationReport",
    "aggregate_nrp",
    "agreement",
    "answer_item_id",
    "build_stats",
    "emit_reports",
    "evaluate_answers",
    "extract_text",
    "filter_short_documents",
    "generate_answers",
    "kendall_tau",
    "load_answers",
    "load_documents",
    "load_experiment",
    "load_qrels",
    "load_queries",
    "make_scorer",
    "ndcg_at_k",
    "nrp",
    "parse_documents",
    "parse_qrels",
    "parse_queries",
    "pool_for_query",
    "rank_pool",
    "rbo",
    "render_prompt",
    "save_answers",
    "score_dph",
    "score_tfidf",
    "select_study_sample",
    "tokenize",
    "validate_rankers",
]
