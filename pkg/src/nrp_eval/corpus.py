"""Queries, documents, multi-dimension judgments and per-query pools.

File formats:
  queries.tsv            ``id<TAB>text``, UTF-8, one query per line
  qrels.<dimension>.txt  TREC 4-column qrels (``qid 0 docid grade``)
  docs.jsonl             one JSON object per line: ``doc_id``, ``text``,
                         optional ``url``

All structures are immutable after loading and safe to share across
evaluation workers.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Iterable

logger = logging.getLogger(__name__)

RELEVANCE = "relevance"
READABILITY = "readability"
CREDIBILITY = "credibility"


class CorpusError(ValueError):
    """Malformed or inconsistent corpus input."""


@dataclass(frozen=True)
class Query:
    id: str
    text: str


@dataclass(frozen=True)
class Document:
    id: str
    text: str
    url: str | None = None


@dataclass(frozen=True)
class DocumentPool:
    """Doc ids judged for one query, sorted for determinism."""

    query_id: str
    members: tuple[str, ...]


@dataclass
class JudgmentSet:
    """Integer grades for one quality dimension, keyed by (query, doc)."""

    dimension: str
    grades: dict[tuple[str, str], int] = field(default_factory=dict)

    def grade(self, query_id: str, doc_id: str, default: int = 0) -> int:
        return self.grades.get((query_id, doc_id), default)

    def grades_for_query(self, query_id: str) -> dict[str, int]:
        return {
            doc_id: grade
            for (qid, doc_id), grade in self.grades.items()
            if qid == query_id
        }

    def query_ids(self) -> set[str]:
        return {qid for qid, _ in self.grades}


def parse_queries(lines: Iterable[str]) -> list[Query]:
    """Parse ``id<TAB>text`` lines; blank lines are skipped.

    Raises CorpusError on a duplicate id or a malformed line, naming the
    line number.
    """
    queries: list[Query] = []
    seen: set[str] = set()
    for lineno, raw in enumerate(lines, start=1):
        line = raw.rstrip("\n").rstrip("\r")
        if not line.strip():
            continue
        qid, sep, text = line.partition("\t")
        qid = qid.strip()
        text = text.strip()
        if not sep or not qid or not text:
            raise CorpusError(f"line {lineno}: expected 'id<TAB>text', got {line!r}")
        if qid in seen:
            raise CorpusError(f"line {lineno}: duplicate query id {qid}")
        seen.add(qid)
        queries.append(Query(qid, text))
    return queries


def serialize_queries(queries: Iterable[Query]) -> str:
    return "".join(f"{q.id}\t{q.text}\n" for q in queries)


def load_queries(path: str) -> list[Query]:
    with open(path, encoding="utf-8") as fh:
        return parse_queries(fh)


def parse_qrels(lines: Iterable[str], dimension: str) -> JudgmentSet:
    """Parse TREC 4-column qrels into a JudgmentSet.

    The second column is ignored.  A repeated (query, doc) key overrides the
    earlier grade with a logged warning; a non-integer or negative grade is
    a hard error.
    """
    judgments = JudgmentSet(dimension)
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 4:
            raise CorpusError(
                f"line {lineno}: expected 4 qrels columns, got {len(parts)}"
            )
        qid, _, doc_id, grade_str = parts
        try:
            grade = int(grade_str)
        except ValueError:
            raise CorpusError(
                f"line {lineno}: grade {grade_str!r} is not an integer"
            ) from None
        if grade < 0:
            raise CorpusError(f"line {lineno}: negative grade {grade}")
        key = (qid, doc_id)
        if key in judgments.grades:
            logger.warning(
                "qrels line %d: duplicate key (%s, %s), overriding grade %d with %d",
                lineno, qid, doc_id, judgments.grades[key], grade,
            )
        judgments.grades[key] = grade
    return judgments


def load_qrels(path: str, dimension: str) -> JudgmentSet:
    with open(path, encoding="utf-8") as fh:
        return parse_qrels(fh, dimension)


def parse_documents(lines: Iterable[str]) -> list[Document]:
    """Parse docs.jsonl lines; duplicate doc ids are a hard error."""
    docs: list[Document] = []
    seen: set[str] = set()
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise CorpusError(f"line {lineno}: invalid JSON ({exc})") from None
        if not isinstance(obj, dict) or "doc_id" not in obj or "text" not in obj:
            raise CorpusError(f"line {lineno}: expected doc_id and text fields")
        doc_id = str(obj["doc_id"])
        if doc_id in seen:
            raise CorpusError(f"line {lineno}: duplicate doc id {doc_id}")
        seen.add(doc_id)
        docs.append(Document(doc_id, str(obj["text"]), obj.get("url")))
    return docs


def load_documents(path: str) -> list[Document]:
    with open(path, encoding="utf-8") as fh:
        return parse_documents(fh)


def save_documents(docs: Iterable[Document], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for doc in docs:
            obj = {"doc_id": doc.id, "text": doc.text}
            if doc.url is not None:
                obj["url"] = doc.url
            fh.write(json.dumps(obj, ensure_ascii=False) + "\n")


def filter_short_documents(
    docs: list[Document], min_chars: int = 50
) -> list[Document]:
    """Keep documents whose text has at least ``min_chars`` characters.

    Characters are Unicode scalar values of the extracted text.  The number
    of dropped documents is logged.
    """
    if min_chars < 0:
        raise ValueError("min_chars must be >= 0")
    kept = [doc for doc in docs if len(doc.text) >= min_chars]
    dropped = len(docs) - len(kept)
    if dropped:
        logger.info(
            "dropped %d of %d documents shorter than %d characters",
            dropped, len(docs), min_chars,
        )
    return kept


def pool_for_query(judgments: Iterable[JudgmentSet], query_id: str) -> DocumentPool:
    """Union of doc ids graded for the query across all dimensions."""
    members: set[str] = set()
    for judgment_set in judgments:
        for (qid, doc_id) in judgment_set.grades:
            if qid == query_id:
                members.add(doc_id)
    if not members:
        raise CorpusError(f"query {query_id} has no judged documents")
    return DocumentPool(query_id, tuple(sorted(members)))


def pools_by_query(judgments: Iterable[JudgmentSet]) -> dict[str, DocumentPool]:
    """One pool per query that has at least one grade in any dimension."""
    members: dict[str, set[str]] = {}
    for judgment_set in judgments:
        for (qid, doc_id) in judgment_set.grades:
            members.setdefault(qid, set()).add(doc_id)
    return {
        qid: DocumentPool(qid, tuple(sorted(docs)))
        for qid, docs in members.items()
    }


def prune_orphan_grades(
    judgments: Iterable[JudgmentSet],
    known_queries: set[str],
    known_docs: set[str],
) -> tuple[list[JudgmentSet], int]:
    """Drop grades whose query or document is not in the loaded sets.

    Returns the pruned judgment sets and the number of grades removed.
    Orphans are routine after the short-document filter, so they are
    warnings, not errors.
    """
    pruned: list[JudgmentSet] = []
    removed = 0
    for judgment_set in judgments:
        kept: dict[tuple[str, str], int] = {}
        for (qid, doc_id), grade in judgment_set.grades.items():
            if qid in known_queries and doc_id in known_docs:
                kept[(qid, doc_id)] = grade
            else:
                removed += 1
        pruned.append(JudgmentSet(judgment_set.dimension, kept))
    if removed:
        logger.warning("pruned %d grades referencing unknown queries or documents", removed)
    return pruned, removed


def validate_joins(
    judgments: Iterable[JudgmentSet],
    known_queries: set[str],
    known_docs: set[str],
) -> None:
    """Strict variant of join validation: any orphan grade is an error."""
    for judgment_set in judgments:
        for (qid, doc_id) in judgment_set.grades:
            if qid not in known_queries:
                raise CorpusError(
                    f"qrels ({judgment_set.dimension}) reference unknown query {qid}"
                )
            if doc_id not in known_docs:
                raise CorpusError(
                    f"qrels ({judgment_set.dimension}) reference unknown document {doc_id}"
                )
