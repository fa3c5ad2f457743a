"""Pointwise query-document scorers and pool ranking.

Scorers follow the scikit-learn estimator convention: construct with
parameters, ``fit`` on the document collection (which builds the collection
statistics), then score query-text pairs.  Scoring is strictly pointwise --
the score of a pair never depends on other pool members -- which is what
makes injected answers rank without disturbing the documents around them.
"""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

ANSWER_ID_PREFIX = "ANSWER::"

_TOKEN = re.compile(r"[^\W_]+")


def tokenize(text: str) -> list[str]:
    """Lowercase and split on every non-alphanumeric character.

    No stemming, no stopword removal; empty fragments are discarded.
    """
    return _TOKEN.findall(text.lower())


def is_answer_id(item_id: str) -> bool:
    return item_id.startswith(ANSWER_ID_PREFIX)


@dataclass(frozen=True)
class CollectionStats:
    """Immutable counts over a tokenized document collection."""

    doc_count: int
    total_tokens: int
    avg_doc_len: float
    doc_freq: Mapping[str, int]
    coll_term_freq: Mapping[str, int]


def build_stats(docs: Iterable) -> CollectionStats:
    """Token statistics for a document collection.

    Accepts strings or objects with a ``text`` attribute.  Generated answers
    must never be passed here: keeping them out of the statistics is what
    keeps document scores injection-invariant.
    """
    doc_count = 0
    total = 0
    doc_freq: Counter[str] = Counter()
    coll_tf: Counter[str] = Counter()
    for doc in docs:
        text = doc if isinstance(doc, str) else doc.text
        tokens = tokenize(text)
        doc_count += 1
        total += len(tokens)
        counts = Counter(tokens)
        coll_tf.update(counts)
        doc_freq.update(counts.keys())
    if doc_count == 0:
        raise ValueError("cannot build collection statistics from zero documents")
    return CollectionStats(
        doc_count=doc_count,
        total_tokens=total,
        avg_doc_len=total / doc_count,
        doc_freq=dict(doc_freq),
        coll_term_freq=dict(coll_tf),
    )


def score_tfidf(
    query_tokens: Sequence[str],
    doc_tokens: Sequence[str],
    stats: CollectionStats,
) -> float:
    """Raw term frequency times smoothed idf, summed over distinct query terms.

    score = sum over distinct query terms t present in the doc of
    tf(t, doc) * ln(1 + N / df(t)); terms unseen in the collection add 0.
    There is no length normalization.
    """
    if stats.doc_count <= 0:
        raise ValueError("collection statistics are empty")
    counts = Counter(doc_tokens)
    score = 0.0
    # sorted iteration keeps float summation order stable across runs
    for term in sorted(set(query_tokens)):
        tf = counts.get(term, 0)
        if tf == 0:
            continue
        df = stats.doc_freq.get(term, 0)
        if df == 0:
            continue
        score += tf * math.log(1.0 + stats.doc_count / df)
    return score


def score_dph(
    query_tokens: Sequence[str],
    doc_tokens: Sequence[str],
    stats: CollectionStats,
) -> float:
    """Parameter-free DPH hypergeometric divergence-from-randomness score.

    Per distinct query term with tf > 0 in the doc and f = tf / doclen:

        qtf * ((1-f)^2 / (tf+1)) * (tf * log2((tf * avgdl / doclen) * (N / ctf))
                                    + 0.5 * log2(2 pi tf (1-f)))

    Guards keep the score finite on any input: an empty doc scores 0, terms
    absent from the collection (ctf = 0, e.g. terms of an injected answer)
    are skipped, and f is clamped to 1 - 1/(doclen+1) when a term fills the
    whole document.
    """
    if stats.doc_count <= 0:
        raise ValueError("collection statistics are empty")
    doc_len = len(doc_tokens)
    if doc_len == 0:
        return 0.0
    counts = Counter(doc_tokens)
    qtf = Counter(query_tokens)
    score = 0.0
    for term in sorted(qtf):
        tf = counts.get(term, 0)
        if tf == 0:
            continue
        ctf = stats.coll_term_freq.get(term, 0)
        if ctf == 0:
            continue
        f = tf / doc_len
        f = min(f, 1.0 - 1.0 / (doc_len + 1.0))
        norm = (1.0 - f) * (1.0 - f) / (tf + 1.0)
        info = tf * math.log2(
            (tf * stats.avg_doc_len / doc_len) * (stats.doc_count / ctf)
        )
        info += 0.5 * math.log2(2.0 * math.pi * tf * (1.0 - f))
        score += qtf[term] * norm * info
    return score


def echo_score(query: str, text: str) -> float:
    """Deterministic stand-in score: distinct shared tokens over 1 + doc length."""
    overlap = len(set(tokenize(query)) & set(tokenize(text)))
    return overlap / (1.0 + len(tokenize(text)))


class PointwiseScorer(BaseEstimator):
    """Base class for scorers usable with :func:`rank_pool`."""

    kind = "base"

    @property
    def identity(self) -> str:
        return self.kind

    def fit(self, X, y=None):
        """Fit on the document collection; stateless scorers return self."""
        return self

    def score_one(self, query: str, text: str) -> float:
        raise NotImplementedError

    def score_batch(
        self, query: str, items: Sequence[tuple[str, str]]
    ) -> list[tuple[str, float]]:
        """Score (item_id, text) pairs; output order mirrors the input."""
        return [(item_id, self.score_one(query, text)) for item_id, text in items]

    def predict(self, X: Iterable[tuple[str, str]]) -> np.ndarray:
        """Score an iterable of (query, text) pairs; sklearn-style entry point."""
        return np.asarray([self.score_one(q, t) for q, t in X], dtype=float)

    def close(self) -> None:
        """Release external resources; a no-op for in-process scorers."""


class _FittedLexicalScorer(PointwiseScorer):
    """Shared fit/validation plumbing for the statistics-backed scorers."""

    def fit(self, X, y=None):
        self.stats_ = X if isinstance(X, CollectionStats) else build_stats(X)
        return self

    def _stats(self) -> CollectionStats:
        if not hasattr(self, "stats_"):
            raise NotFittedError(
                f"{type(self).__name__} must be fitted on the document "
                "collection before scoring"
            )
        return self.stats_


class TfidfScorer(_FittedLexicalScorer):
    kind = "tfidf"

    def score_one(self, query: str, text: str) -> float:
        return score_tfidf(tokenize(query), tokenize(text), self._stats())

    def score_batch(self, query, items):
        stats = self._stats()
        query_tokens = tokenize(query)
        return [
            (item_id, score_tfidf(query_tokens, tokenize(text), stats))
            for item_id, text in items
        ]


class DphScorer(_FittedLexicalScorer):
    kind = "dph"

    def score_one(self, query: str, text: str) -> float:
        return score_dph(tokenize(query), tokenize(text), self._stats())

    def score_batch(self, query, items):
        stats = self._stats()
        query_tokens = tokenize(query)
        return [
            (item_id, score_dph(query_tokens, tokenize(text), stats))
            for item_id, text in items
        ]


class EchoScorer(PointwiseScorer):
    """In-process twin of the protocol echo adapter; needs no fitting."""

    kind = "echo"

    def score_one(self, query: str, text: str) -> float:
        return echo_score(query, text)


class ExternalScorer(PointwiseScorer):
    """Pointwise scorer backed by an ``nrp-scorer/1`` adapter.

    ``spec`` is either ``cmd:<command line>`` (line-delimited JSON over a
    child process' standard streams) or ``http:<URL>`` / ``https:<URL>``
    (one POST per batch).  Sessions are pooled and bounded by the adapter's
    advertised ``max_connections``.
    """

    kind = "external"

    def __init__(self, spec: str, timeout: float = 60.0, max_sessions: int | None = None):
        self.spec = spec
        self.timeout = timeout
        self.max_sessions = max_sessions

    @property
    def identity(self) -> str:
        pool = getattr(self, "_pool", None)
        if pool is not None and pool.adapter_name:
            return pool.adapter_name
        return self.spec

    def _sessions(self):
        from .protocol import SessionPool

        if not hasattr(self, "_pool"):
            self._pool = SessionPool(self.spec, self.timeout, self.max_sessions)
        return self._pool

    def score_batch(self, query, items):
        with self._sessions().acquire() as session:
            return session.score_batch(query, items)

    def score_one(self, query: str, text: str) -> float:
        return self.score_batch(query, [("item", text)])[0][1]

    def close(self) -> None:
        if hasattr(self, "_pool"):
            self._pool.close()
            del self._pool

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


_NATIVE_SCORERS = {
    "tfidf": TfidfScorer,
    "dph": DphScorer,
    "echo": EchoScorer,
}


def make_scorer(spec: str, timeout: float = 60.0, max_sessions: int | None = None) -> PointwiseScorer:
    """Build a scorer from a spec string.

    Native: ``tfidf``, ``dph``, ``echo``.  External: ``cmd:<command line>``
    or ``http(s):<URL>``.
    """
    if spec in _NATIVE_SCORERS:
        return _NATIVE_SCORERS[spec]()
    if spec.startswith(("cmd:", "http:", "https:")):
        return ExternalScorer(spec, timeout=timeout, max_sessions=max_sessions)
    raise ValueError(
        f"unknown scorer spec {spec!r}; expected one of "
        f"{sorted(_NATIVE_SCORERS)} or a cmd:/http: spec"
    )


@dataclass(frozen=True)
class Ranking:
    """Items of one pool ordered by descending score."""

    query_id: str
    entries: tuple[tuple[str, float], ...]

    def ids(self) -> list[str]:
        return [item_id for item_id, _ in self.entries]

    def position_of(self, item_id: str) -> int:
        for position, (candidate, _) in enumerate(self.entries):
            if candidate == item_id:
                return position
        raise KeyError(item_id)


def rank_pool(scorer: PointwiseScorer, query, items: Sequence[tuple[str, str]]) -> Ranking:
    """Score every item pointwise and sort into a full ranking.

    Ties are broken with documents above injected answers, then ascending
    item id, so the ordering is a pure function of the inputs.
    """
    if not items:
        raise ValueError(f"cannot rank an empty pool for query {query.id}")
    ids = [item_id for item_id, _ in items]
    if len(set(ids)) != len(ids):
        duplicate = next(i for i in ids if ids.count(i) > 1)
        raise ValueError(f"duplicate item id {duplicate} in pool for query {query.id}")
    scored = scorer.score_batch(query.text, items)
    for item_id, score in scored:
        if not math.isfinite(score):
            raise ValueError(f"non-finite score {score!r} for item {item_id}")
    entries = sorted(scored, key=lambda e: (-e[1], is_answer_id(e[0]), e[0]))
    return Ranking(query_id=query.id, entries=tuple(entries))
