"""Deterministic synthetic corpora for end-to-end tests.

The separation corpus plants graded judgments that track query-term
density, so a sound evaluation pipeline must separate three synthetic
answer tiers:

  tier-a  copies the top-graded document's text,
  tier-b  copies the first half of that text,
  tier-c  emits out-of-vocabulary tokens.

Every construction is a pure function of its arguments; no global RNG.
"""

import json
import random
from pathlib import Path

FILLERS = [
    "health", "advice", "guide", "page", "info", "common", "general",
    "care", "note", "fact", "daily", "basics",
]

N_QUERIES = 50
POOL_SIZE = 100
UNITS_TOP = 100  # units in the j=0 document; doc j has UNITS_TOP - j units


def query_terms(i: int) -> list[str]:
    return [f"q{i:02d}topica", f"q{i:02d}topicb", f"q{i:02d}topicc"]


def doc_tokens(i: int, j: int) -> list[str]:
    """Document j of query i: repeated 6-token units, half topical.

    Query-term counts fall linearly with j while the per-term density stays
    fixed, so the planted grades (also falling with j) agree with any sane
    density-driven scorer.
    """
    t0, t1, t2 = query_terms(i)
    tokens = []
    for unit in range(UNITS_TOP - j):
        f = FILLERS[(i + j + unit) % len(FILLERS)]
        g = FILLERS[(i + j + unit + 5) % len(FILLERS)]
        h = FILLERS[(i + j + unit + 9) % len(FILLERS)]
        tokens.extend([t0, f, t1, g, t2, h])
    return tokens


def grade(j: int) -> int:
    return max(0, 4 - j // 20)


def write_separation_corpus(root, n_queries: int = N_QUERIES) -> dict:
    """Write queries.tsv, docs.jsonl and qrels for the separation corpus."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    queries_path = root / "queries.tsv"
    docs_path = root / "docs.jsonl"
    qrels_dir = root / "qrels"
    qrels_dir.mkdir(exist_ok=True)
    qrels_path = qrels_dir / "qrels.relevance.txt"

    with open(queries_path, "w", encoding="utf-8") as qf, \
         open(docs_path, "w", encoding="utf-8") as df, \
         open(qrels_path, "w", encoding="utf-8") as rf:
        for i in range(1, n_queries + 1):
            qid = f"q{i:02d}"
            qf.write(f"{qid}\t{' '.join(query_terms(i))}\n")
            for j in range(POOL_SIZE):
                doc_id = f"{qid}_d{j:03d}"
                df.write(json.dumps(
                    {"doc_id": doc_id, "text": " ".join(doc_tokens(i, j))}
                ) + "\n")
                rf.write(f"{qid} 0 {doc_id} {grade(j)}\n")
    return {
        "queries": str(queries_path),
        "docs": str(docs_path),
        "qrels_dir": str(qrels_dir),
    }


def tier_answer_text(i: int, tier: str, sample: int) -> str:
    if tier == "tier-a":
        return " ".join(doc_tokens(i, 0))
    if tier == "tier-b":
        tokens = doc_tokens(i, 0)
        return " ".join(tokens[: len(tokens) // 2])
    if tier == "tier-c":
        rng = random.Random(10_000 * i + sample)
        return " ".join(
            f"zzoov{rng.randrange(100_000):05d}" for _ in range(12)
        )
    raise ValueError(tier)


def write_separation_answers(path, n_queries: int = N_QUERIES, n_samples: int = 10) -> int:
    path = Path(path)
    count = 0
    with open(path, "w", encoding="utf-8") as fh:
        for i in range(1, n_queries + 1):
            for tier in ("tier-a", "tier-b", "tier-c"):
                for sample in range(n_samples):
                    fh.write(json.dumps({
                        "query_id": f"q{i:02d}",
                        "model": tier,
                        "prompt_id": "multimedqa",
                        "sample": sample,
                        "text": tier_answer_text(i, tier, sample),
                    }) + "\n")
                    count += 1
    return count


GRID_MODELS = [f"model{m}" for m in range(8)]
GRID_PROMPTS = ["none", "short_qa", "long_qa", "multimedqa"]


def write_grid_corpus(root, n_queries: int = 50, pool: int = 10) -> dict:
    """Small judged corpus for the record-count grid run."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    queries_path = root / "queries.tsv"
    docs_path = root / "docs.jsonl"
    qrels_dir = root / "qrels"
    qrels_dir.mkdir(exist_ok=True)
    qrels_path = qrels_dir / "qrels.relevance.txt"
    with open(queries_path, "w", encoding="utf-8") as qf, \
         open(docs_path, "w", encoding="utf-8") as df, \
         open(qrels_path, "w", encoding="utf-8") as rf:
        for i in range(1, n_queries + 1):
            qid = f"g{i:02d}"
            terms = [f"g{i:02d}term{t}" for t in range(3)]
            qf.write(f"{qid}\t{' '.join(terms)}\n")
            for j in range(pool):
                doc_id = f"{qid}_d{j:02d}"
                text = " ".join(terms * (pool - j) + FILLERS[: 1 + j % 4])
                df.write(json.dumps({"doc_id": doc_id, "text": text}) + "\n")
                rf.write(f"{qid} 0 {doc_id} {max(0, 3 - j // 3)}\n")
    return {
        "queries": str(queries_path),
        "docs": str(docs_path),
        "qrels_dir": str(qrels_dir),
    }


def write_grid_answers(path, n_queries: int = 50, n_samples: int = 10) -> int:
    path = Path(path)
    count = 0
    with open(path, "w", encoding="utf-8") as fh:
        for i in range(1, n_queries + 1):
            qid = f"g{i:02d}"
            for model in GRID_MODELS:
                for prompt in GRID_PROMPTS:
                    for sample in range(n_samples):
                        rng = random.Random(f"{qid}:{model}:{prompt}:{sample}")
                        words = [f"g{i:02d}term{rng.randrange(3)}"] * rng.randrange(0, 4)
                        words += [FILLERS[rng.randrange(len(FILLERS))] for _ in range(4)]
                        fh.write(json.dumps({
                            "query_id": qid,
                            "model": model,
                            "prompt_id": prompt,
                            "sample": sample,
                            "text": " ".join(words),
                        }) + "\n")
                        count += 1
    return count
