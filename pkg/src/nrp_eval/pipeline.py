"""Experiment orchestration: ranker validation, answer evaluation, the
study sample, agreement analysis and report emission."""

from __future__ import annotations

import csv
import json
import logging
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Mapping, Sequence

from .answers import GeneratedAnswer, answer_item_id
from .corpus import (
    Document,
    DocumentPool,
    JudgmentSet,
    Query,
    RELEVANCE,
    filter_short_documents,
    load_documents,
    load_qrels,
    load_queries,
    pools_by_query,
    prune_orphan_grades,
    validate_joins,
)
from .metrics import (
    NrpRecord,
    NrpSummary,
    aggregate_nrp,
    kendall_tau,
    ndcg_at_k,
    rbo,
)
from .scorers import (
    ANSWER_ID_PREFIX,
    PointwiseScorer,
    is_answer_id,
    rank_pool,
)

logger = logging.getLogger(__name__)


class PipelineError(RuntimeError):
    """Unrecoverable inconsistency between the configured inputs."""


@dataclass
class ExperimentData:
    """Loaded, join-validated corpus shared by all pipeline operations."""

    queries: list[Query]
    documents: dict[str, Document]
    judgments: list[JudgmentSet]
    pools: dict[str, DocumentPool]

    def query(self, query_id: str) -> Query | None:
        return self._by_id.get(query_id)

    def __post_init__(self):
        self._by_id = {q.id: q for q in self.queries}

    def judgment_set(self, dimension: str) -> JudgmentSet | None:
        for judgment_set in self.judgments:
            if judgment_set.dimension == dimension:
                return judgment_set
        return None

    def sorted_documents(self) -> list[Document]:
        return [self.documents[doc_id] for doc_id in sorted(self.documents)]

    def pool_items(self, query_id: str) -> list[tuple[str, str]]:
        pool = self.pools[query_id]
        return [(doc_id, self.documents[doc_id].text) for doc_id in pool.members]


def load_experiment(
    queries_path: str,
    docs_path: str,
    qrels_paths: Mapping[str, str],
    min_chars: int = 50,
    strict: bool = False,
) -> ExperimentData:
    """Load and join queries, documents and per-dimension judgments.

    Documents shorter than ``min_chars`` are dropped first.  Grades whose
    query or document is then unknown are pruned with a warning, or raise
    when ``strict`` is set.
    """
    queries = load_queries(queries_path)
    documents = filter_short_documents(load_documents(docs_path), min_chars)
    judgments = [
        load_qrels(path, dimension) for dimension, path in sorted(qrels_paths.items())
    ]
    if not judgments:
        raise PipelineError("no qrels files given; need at least one dimension")
    doc_ids = {doc.id for doc in documents}
    query_ids = {query.id for query in queries}
    if strict:
        validate_joins(judgments, query_ids, doc_ids)
    else:
        judgments, _ = prune_orphan_grades(judgments, query_ids, doc_ids)
    data = ExperimentData(
        queries=queries,
        documents={doc.id: doc for doc in documents},
        judgments=judgments,
        pools=pools_by_query(judgments),
    )
    unjudged = [q.id for q in queries if q.id not in data.pools]
    if unjudged:
        logger.warning(
            "%d queries have no judged documents and will be skipped: %s",
            len(unjudged), ", ".join(sorted(unjudged)[:10]),
        )
    return data


@dataclass(frozen=True)
class ValidationRow:
    scorer: str
    dimension: str
    ndcg: float


@dataclass(frozen=True)
class ValidationReport:
    rows: tuple[ValidationRow, ...]
    winner: str
    k: int

    def mean_by_scorer(self) -> dict[str, float]:
        totals: dict[str, list[float]] = {}
        for row in self.rows:
            totals.setdefault(row.scorer, []).append(row.ndcg)
        return {scorer: sum(v) / len(v) for scorer, v in totals.items()}


def build_validation_report(rows: Sequence[ValidationRow], k: int) -> ValidationReport:
    """Assemble a report, picking the winner by mean nDCG across dimensions.

    Ties prefer the higher relevance-dimension score, then the smaller
    scorer name.
    """
    if not rows:
        raise PipelineError("cannot build a validation report without rows")
    mean: dict[str, list[float]] = {}
    relevance: dict[str, float] = {}
    for row in rows:
        mean.setdefault(row.scorer, []).append(row.ndcg)
        if row.dimension == RELEVANCE:
            relevance[row.scorer] = row.ndcg
    winner = min(
        mean,
        key=lambda s: (-sum(mean[s]) / len(mean[s]), -relevance.get(s, 0.0), s),
    )
    return ValidationReport(rows=tuple(rows), winner=winner, k=k)


def _fit(scorer: PointwiseScorer, data: ExperimentData) -> PointwiseScorer:
    return scorer.fit(data.sorted_documents())


def validate_rankers(
    scorers: Sequence[PointwiseScorer],
    data: ExperimentData,
    k: int = 10,
) -> ValidationReport:
    """nDCG@k of every candidate scorer on every quality dimension.

    Per scorer and dimension the pool of each judged query is fully ranked
    and nDCG@k macro-averaged over queries.  The winner is the scorer with
    the highest mean across dimensions; ties prefer the higher relevance
    score, then the lexicographically smaller name.
    """
    if not scorers:
        raise PipelineError("need at least one scorer to validate")
    if not data.judgments:
        raise PipelineError("need at least one judgment dimension")
    query_ids = sorted(data.pools)
    queries = [data.query(qid) for qid in query_ids if data.query(qid) is not None]
    if not queries:
        raise PipelineError("no judged queries to validate on")

    rows: list[ValidationRow] = []
    for scorer in scorers:
        identity = scorer.identity
        try:
            _fit(scorer, data)
            sums = {js.dimension: 0.0 for js in data.judgments}
            for query in queries:
                ranking = rank_pool(scorer, query, data.pool_items(query.id))
                for judgment_set in data.judgments:
                    grades = judgment_set.grades_for_query(query.id)
                    sums[judgment_set.dimension] += ndcg_at_k(ranking, grades, k)
        except Exception as exc:
            logger.error("scorer %s failed validation and is excluded: %s", identity, exc)
            continue
        identity = scorer.identity  # external adapters learn their name on first use
        dim_means = {dim: total / len(queries) for dim, total in sums.items()}
        for judgment_set in data.judgments:
            rows.append(
                ValidationRow(identity, judgment_set.dimension, dim_means[judgment_set.dimension])
            )
    if not rows:
        raise PipelineError("every candidate scorer failed validation")
    return build_validation_report(rows, k)


def evaluate_answers(
    scorer: PointwiseScorer,
    answers: Sequence[GeneratedAnswer],
    data: ExperimentData,
    workers: int = 1,
) -> list[NrpRecord]:
    """Rank each answer inside its query's pool and compute its NRP.

    Answers are injected one at a time, never together.  Because scoring is
    pointwise, the pool's documents are scored once per query and each
    answer's rank is the number of documents scoring >= its own score
    (score ties place documents above answers); this equals its position in
    a full :func:`rank_pool` run with the answer included.

    Output is sorted by (query_id, model, prompt_id, sample) so it does not
    depend on input order or on ``workers``.
    """
    _fit(scorer, data)
    by_query: dict[str, list[GeneratedAnswer]] = {}
    skipped = 0
    for answer in answers:
        if data.query(answer.query_id) is None or answer.query_id not in data.pools:
            logger.warning(
                "skipping answer %s/%s/%d: unknown or unjudged query %s",
                answer.model, answer.prompt_id, answer.sample, answer.query_id,
            )
            skipped += 1
            continue
        by_query.setdefault(answer.query_id, []).append(answer)
    if skipped:
        logger.warning("skipped %d answers for unknown queries", skipped)

    def evaluate_query(query_id: str) -> list[NrpRecord]:
        query = data.query(query_id)
        doc_items = data.pool_items(query_id)
        doc_scores = [score for _, score in scorer.score_batch(query.text, doc_items)]
        pool_size = len(doc_items) + 1
        group = sorted(
            by_query[query_id], key=lambda a: (a.model, a.prompt_id, a.sample)
        )
        batch = [(f"{ANSWER_ID_PREFIX}{i}", answer.text) for i, answer in enumerate(group)]
        answer_scores = [score for _, score in scorer.score_batch(query.text, batch)]
        records = []
        for answer, answer_score in zip(group, answer_scores):
            rank_r = sum(1 for doc_score in doc_scores if doc_score >= answer_score)
            records.append(
                NrpRecord.from_rank(
                    query_id=query_id,
                    model=answer.model,
                    prompt_id=answer.prompt_id,
                    sample=answer.sample,
                    rank_r=rank_r,
                    pool_size=pool_size,
                )
            )
        return records

    query_ids = sorted(by_query)
    records: list[NrpRecord] = []
    if workers > 1 and len(query_ids) > 1:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            for group_records in executor.map(evaluate_query, query_ids):
                records.extend(group_records)
    else:
        for query_id in query_ids:
            records.extend(evaluate_query(query_id))
    records.sort(key=lambda r: (r.query_id, r.model, r.prompt_id, r.sample))
    return records


@dataclass(frozen=True)
class StudyTopic:
    """Items chosen for expert annotation of one topic: the listed models'
    best answers plus the best-ranked relevant document."""

    query_id: str
    items: tuple[str, ...]


def select_study_sample(
    records: Sequence[NrpRecord],
    data: ExperimentData,
    scorer: PointwiseScorer,
    models: Sequence[str],
    n_topics: int = 20,
    seed: int = 0,
    prompt_id: str | None = None,
    relevance_dimension: str = RELEVANCE,
) -> list[StudyTopic]:
    """Seeded sample of topics, each with one item per model plus a document.

    Per topic and model the highest-NRP answer is chosen (ties: lowest
    sample index, then prompt id).  The document is the best-ranked pool
    member with a grade >= 1 in the relevance dimension.  Topics missing a
    record for any model, or without a relevant document, leave the
    sampling frame.
    """
    relevance = data.judgment_set(relevance_dimension)
    if relevance is None:
        raise PipelineError(f"no {relevance_dimension!r} judgments loaded")
    _fit(scorer, data)

    candidates: dict[tuple[str, str], list[NrpRecord]] = {}
    for record in records:
        if prompt_id is not None and record.prompt_id != prompt_id:
            continue
        candidates.setdefault((record.query_id, record.model), []).append(record)

    doc_choice: dict[str, str] = {}
    eligible = []
    for query_id in sorted(data.pools):
        query = data.query(query_id)
        if query is None:
            continue
        if any((query_id, model) not in candidates for model in models):
            continue
        grades = relevance.grades_for_query(query_id)
        ranking = rank_pool(scorer, query, data.pool_items(query_id))
        relevant = [i for i in ranking.ids() if grades.get(i, 0) >= 1]
        if not relevant:
            continue
        doc_choice[query_id] = relevant[0]
        eligible.append(query_id)
    if len(eligible) < n_topics:
        raise PipelineError(
            f"only {len(eligible)} topics are eligible, need {n_topics}"
        )
    rng = random.Random(seed)
    chosen = sorted(rng.sample(eligible, n_topics))

    topics = []
    for query_id in chosen:
        items = []
        for model in models:
            best = min(
                candidates[(query_id, model)],
                key=lambda r: (-r.nrp, r.sample, r.prompt_id),
            )
            items.append(answer_item_id(model, query_id, best.sample))
        items.append(doc_choice[query_id])
        topics.append(StudyTopic(query_id=query_id, items=tuple(items)))
    return topics


def rank_study_items(
    topics: Sequence[StudyTopic],
    answers: Sequence[GeneratedAnswer],
    data: ExperimentData,
    scorer: PointwiseScorer,
    prompt_id: str | None = None,
) -> dict[str, list[str]]:
    """The scorer's own ordering of each topic's study items.

    This is the system side of the agreement analysis; the expert side
    comes from ``expert_rankings.jsonl``.
    """
    _fit(scorer, data)
    texts: dict[str, str] = {}
    for answer in answers:
        if prompt_id is not None and answer.prompt_id != prompt_id:
            continue
        key = answer.item_id()
        if key in texts and texts[key] != answer.text:
            raise PipelineError(
                f"ambiguous text for {key}: multiple prompts match; "
                "pass prompt_id to disambiguate"
            )
        texts[key] = answer.text
    rankings: dict[str, list[str]] = {}
    for topic in topics:
        query = data.query(topic.query_id)
        if query is None:
            raise PipelineError(f"study topic {topic.query_id} is not a known query")
        items = []
        for item_id in topic.items:
            if is_answer_id(item_id):
                if item_id not in texts:
                    raise PipelineError(f"no answer text found for {item_id}")
                items.append((item_id, texts[item_id]))
            elif item_id in data.documents:
                items.append((item_id, data.documents[item_id].text))
            else:
                raise PipelineError(
                    f"study item {item_id} of topic {topic.query_id} "
                    "is not in the document store"
                )
        rankings[topic.query_id] = rank_pool(scorer, query, items).ids()
    return rankings


@dataclass(frozen=True)
class AgreementRow:
    query_id: str
    rbo: float
    tau: float


@dataclass(frozen=True)
class AgreementResult:
    mean_rbo: float
    mean_tau: float
    rows: tuple[AgreementRow, ...]


def agreement(
    system: Mapping[str, Sequence[str]],
    expert: Mapping[str, Sequence[str]],
) -> AgreementResult:
    """Per-topic RBO (p = 1) and Kendall's tau plus their means.

    Both sides must cover the same topics and, per topic, the same items.
    """
    if set(system) != set(expert):
        difference = sorted(set(system) ^ set(expert))
        raise PipelineError(f"system and expert topics differ: {difference}")
    if not system:
        raise PipelineError("agreement needs at least one topic")
    rows = []
    for query_id in sorted(system):
        a, b = list(system[query_id]), list(expert[query_id])
        if set(a) != set(b):
            raise PipelineError(
                f"topic {query_id}: system and expert rank different items: "
                f"{sorted(set(a) ^ set(b))}"
            )
        rows.append(
            AgreementRow(query_id=query_id, rbo=rbo(a, b, p=1.0), tau=kendall_tau(a, b))
        )
    mean_rbo = sum(r.rbo for r in rows) / len(rows)
    mean_tau = sum(r.tau for r in rows) / len(rows)
    return AgreementResult(mean_rbo=mean_rbo, mean_tau=mean_tau, rows=tuple(rows))


def item_label(item_id: str) -> str:
    """Grouping label for rank-flow rows: the model name, or 'document'."""
    if is_answer_id(item_id):
        return item_id[len(ANSWER_ID_PREFIX):].split("::", 1)[0]
    return "document"


@dataclass(frozen=True)
class RankFlowRow:
    query_id: str
    source: str
    position: int
    item_id: str
    label: str


def rank_flow_rows(
    rankings_by_source: Mapping[str, Mapping[str, Sequence[str]]],
) -> list[RankFlowRow]:
    """Flatten named ranking sets into per-position rows for flow diagrams."""
    rows = []
    for source in sorted(rankings_by_source):
        per_topic = rankings_by_source[source]
        for query_id in sorted(per_topic):
            for position, item_id in enumerate(per_topic[query_id]):
                rows.append(
                    RankFlowRow(
                        query_id=query_id,
                        source=source,
                        position=position,
                        item_id=item_id,
                        label=item_label(item_id),
                    )
                )
    return rows


def discover_qrels(directory) -> dict[str, str]:
    """Map dimension -> path for every ``qrels.<dimension>.txt`` in a directory."""
    paths = {}
    for path in sorted(Path(directory).glob("qrels.*.txt")):
        dimension = path.name[len("qrels."):-len(".txt")]
        if dimension:
            paths[dimension] = str(path)
    if not paths:
        raise PipelineError(f"no qrels.<dimension>.txt files found in {directory}")
    return paths


def load_rankings_jsonl(path) -> dict[str, list[str]]:
    """Read ``{"query_id", "ranking": [...]}`` lines into a topic map."""
    rankings: dict[str, list[str]] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                query_id = str(obj["query_id"])
                ranking = [str(item) for item in obj["ranking"]]
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise PipelineError(f"{path}: line {lineno}: {exc}") from None
            if query_id in rankings:
                raise PipelineError(f"{path}: line {lineno}: duplicate topic {query_id}")
            rankings[query_id] = ranking
    return rankings


def save_rankings_jsonl(rankings: Mapping[str, Sequence[str]], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for query_id in sorted(rankings):
            fh.write(json.dumps(
                {"query_id": query_id, "ranking": list(rankings[query_id])}
            ) + "\n")


def save_study_topics(topics: Sequence[StudyTopic], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for topic in topics:
            fh.write(json.dumps(
                {"query_id": topic.query_id, "items": list(topic.items)}
            ) + "\n")


@dataclass(frozen=True)
class ModelSizeRow:
    """Mean NRP of one model next to its parameter count (trend-plot data)."""

    model: str
    parameters: int
    mean_nrp: float
    count: int


def model_size_rows(
    records: Sequence[NrpRecord],
    parameters: Mapping[str, int],
    prompt_id: str | None = None,
) -> list[ModelSizeRow]:
    """Join per-model mean NRP with parameter counts, sorted by size.

    Records of other prompts are excluded when ``prompt_id`` is given;
    models without a known parameter count are skipped with a warning.
    """
    values: dict[str, list[float]] = {}
    for record in records:
        if prompt_id is not None and record.prompt_id != prompt_id:
            continue
        values.setdefault(record.model, []).append(record.nrp)
    rows = []
    for model in sorted(values):
        if model not in parameters:
            logger.warning("no parameter count for model %s; skipping", model)
            continue
        rows.append(
            ModelSizeRow(
                model=model,
                parameters=int(parameters[model]),
                mean_nrp=sum(values[model]) / len(values[model]),
                count=len(values[model]),
            )
        )
    rows.sort(key=lambda r: (r.parameters, r.model))
    return rows


RECORD_FIELDS = ["query_id", "model", "prompt_id", "sample", "rank_r", "pool_size", "nrp"]
SUMMARY_FIELDS = ["model", "prompt_id", "count", "mean", "min", "q1", "median", "q3", "max"]
VALIDATION_FIELDS = ["scorer", "dimension", "ndcg"]
AGREEMENT_FIELDS = ["query_id", "rbo", "tau"]
RANK_FLOW_FIELDS = ["query_id", "source", "position", "item_id", "label"]
MODEL_SIZE_FIELDS = ["model", "parameters", "mean_nrp", "count"]


def write_records_csv(records: Sequence[NrpRecord], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(RECORD_FIELDS)
        for r in records:
            writer.writerow(
                [r.query_id, r.model, r.prompt_id, r.sample, r.rank_r, r.pool_size, r.nrp]
            )


def read_records_csv(path) -> list[NrpRecord]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        return [
            NrpRecord(
                query_id=row["query_id"],
                model=row["model"],
                prompt_id=row["prompt_id"],
                sample=int(row["sample"]),
                rank_r=int(row["rank_r"]),
                pool_size=int(row["pool_size"]),
                nrp=float(row["nrp"]),
            )
            for row in reader
        ]


def read_validation_csv(path, k: int) -> ValidationReport:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        rows = [
            ValidationRow(row["scorer"], row["dimension"], float(row["ndcg"]))
            for row in reader
        ]
    return build_validation_report(rows, k)


def _write_rows_csv(path, fields, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(fields)
        writer.writerows(rows)


def write_summary_csv(summaries: Sequence[NrpSummary], path) -> None:
    _write_rows_csv(path, SUMMARY_FIELDS,
                    [[s.model, s.prompt_id, s.count, s.mean, s.min, s.q1,
                      s.median, s.q3, s.max] for s in summaries])


def write_validation_csv(report: ValidationReport, path) -> None:
    _write_rows_csv(path, VALIDATION_FIELDS,
                    [[row.scorer, row.dimension, row.ndcg] for row in report.rows])


def write_agreement_csv(result: AgreementResult, path) -> None:
    _write_rows_csv(path, AGREEMENT_FIELDS,
                    [[row.query_id, row.rbo, row.tau] for row in result.rows])


def write_rank_flow_csv(rows: Sequence[RankFlowRow], path) -> None:
    _write_rows_csv(path, RANK_FLOW_FIELDS,
                    [[row.query_id, row.source, row.position, row.item_id, row.label]
                     for row in rows])


def emit_reports(
    out_dir,
    records: Sequence[NrpRecord] = (),
    validation: ValidationReport | None = None,
    agreement_result: AgreementResult | None = None,
    rank_flow: Sequence[RankFlowRow] = (),
    model_size: Sequence[ModelSizeRow] = (),
) -> dict[str, Path]:
    """Write the full report bundle; absent sections become header-only CSVs.

    Emits records.csv, summary.csv, validation.csv, agreement.csv,
    rank_flow.csv, model_size.csv and a report.json bundling every table.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {name: out / f"{name}.csv" for name in
             ("records", "summary", "validation", "agreement", "rank_flow",
              "model_size")}

    summaries = aggregate_nrp(records)
    write_records_csv(records, paths["records"])
    _write_rows_csv(
        paths["summary"], SUMMARY_FIELDS,
        [[s.model, s.prompt_id, s.count, s.mean, s.min, s.q1, s.median, s.q3, s.max]
         for s in summaries],
    )
    _write_rows_csv(
        paths["validation"], VALIDATION_FIELDS,
        [[row.scorer, row.dimension, row.ndcg] for row in (validation.rows if validation else ())],
    )
    _write_rows_csv(
        paths["agreement"], AGREEMENT_FIELDS,
        [[row.query_id, row.rbo, row.tau]
         for row in (agreement_result.rows if agreement_result else ())],
    )
    _write_rows_csv(
        paths["rank_flow"], RANK_FLOW_FIELDS,
        [[row.query_id, row.source, row.position, row.item_id, row.label]
         for row in rank_flow],
    )
    _write_rows_csv(
        paths["model_size"], MODEL_SIZE_FIELDS,
        [[row.model, row.parameters, row.mean_nrp, row.count] for row in model_size],
    )

    report = {
        "records": [asdict(r) for r in records],
        "summary": [asdict(s) for s in summaries],
        "validation": (
            {"k": validation.k, "winner": validation.winner,
             "rows": [asdict(row) for row in validation.rows]}
            if validation else None
        ),
        "agreement": (
            {"mean_rbo": agreement_result.mean_rbo,
             "mean_tau": agreement_result.mean_tau,
             "rows": [asdict(row) for row in agreement_result.rows]}
            if agreement_result else None
        ),
        "rank_flow": [asdict(row) for row in rank_flow],
        "model_size": [asdict(row) for row in model_size],
    }
    report_path = out / "report.json"
    with open(report_path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, ensure_ascii=False)
        fh.write("\n")
    paths["report"] = report_path
    return paths
