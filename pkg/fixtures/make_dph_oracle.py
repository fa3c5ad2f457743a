#!/usr/bin/env python3
"""Regenerate dph_oracle.csv from dph_corpus.jsonl.

Standalone reference computation, deliberately independent of the nrp_eval
package: every per-term contribution is assembled step by step below so the
frozen CSV can serve as an oracle for the production scorer.

Usage: python fixtures/make_dph_oracle.py
"""

import csv
import json
import math
import re
from pathlib import Path

HERE = Path(__file__).parent

QUERIES = [
    "flu shot",
    "flu flu virus",
    "unknownterm",
]


def toks(text):
    return re.findall(r"[^\W_]+", text.lower())


def dph_contribution(qtf, tf, doc_len, avg_doc_len, n_docs, coll_tf):
    # guards: tf == 0 and coll_tf == 0 handled by the caller; doc_len > 0 here
    f = tf / doc_len
    f = min(f, 1.0 - 1.0 / (doc_len + 1.0))
    norm = (1.0 - f) * (1.0 - f) / (tf + 1.0)
    info = tf * math.log2((tf * avg_doc_len / doc_len) * (n_docs / coll_tf))
    info += 0.5 * math.log2(2.0 * math.pi * tf * (1.0 - f))
    return qtf * norm * info


def main():
    docs = []
    with open(HERE / "dph_corpus.jsonl", encoding="utf-8") as fh:
        for line in fh:
            obj = json.loads(line)
            docs.append((obj["doc_id"], toks(obj["text"])))

    n_docs = len(docs)
    total = sum(len(tokens) for _, tokens in docs)
    avg_doc_len = total / n_docs
    coll_tf = {}
    for _, tokens in docs:
        for t in tokens:
            coll_tf[t] = coll_tf.get(t, 0) + 1

    rows = []
    for query in QUERIES:
        q_tokens = toks(query)
        qtf = {t: q_tokens.count(t) for t in q_tokens}
        for doc_id, tokens in docs:
            doc_len = len(tokens)
            score = 0.0
            if doc_len > 0:
                for term in sorted(qtf):
                    tf = tokens.count(term)
                    if tf == 0:
                        continue
                    ctf = coll_tf.get(term, 0)
                    if ctf == 0:
                        continue
                    score += dph_contribution(
                        qtf[term], tf, doc_len, avg_doc_len, n_docs, ctf
                    )
            rows.append((query, doc_id, repr(score)))

    with open(HERE / "dph_oracle.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["query", "doc_id", "dph"])
        writer.writerows(rows)
    print(f"wrote {len(rows)} oracle rows")


if __name__ == "__main__":
    main()
