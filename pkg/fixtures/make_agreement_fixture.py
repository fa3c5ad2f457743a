#!/usr/bin/env python3
"""Regenerate agreement_20topics.json.

Twenty topics of five study items each, with a seeded system and expert
permutation per topic.  The expected per-topic and mean statistics are
computed right here with direct pair enumeration (tau) and depth-wise
prefix overlap (average overlap), independently of the nrp_eval package,
and frozen into the fixture.

Usage: python fixtures/make_agreement_fixture.py
"""

import json
import random
from pathlib import Path

HERE = Path(__file__).parent

MODELS = ["chatgpt", "llama-2-13b", "gpt2-xl", "gpt2"]


def tau_by_pairs(a, b):
    pos_a = {x: i for i, x in enumerate(a)}
    pos_b = {x: i for i, x in enumerate(b)}
    concordant = discordant = 0
    items = sorted(pos_a)
    for i, x in enumerate(items):
        for y in items[i + 1:]:
            if (pos_a[x] - pos_a[y]) * (pos_b[x] - pos_b[y]) > 0:
                concordant += 1
            else:
                discordant += 1
    n = len(items)
    return (concordant - discordant) / (n * (n - 1) / 2)


def average_overlap(a, b):
    n = min(len(a), len(b))
    return sum(
        len(set(a[:d]) & set(b[:d])) / d for d in range(1, n + 1)
    ) / n


def main():
    rng = random.Random(20240)
    system = {}
    expert = {}
    per_topic = {}
    for t in range(20):
        qid = f"t{t:02d}"
        items = [f"ANSWER::{m}::{qid}::0" for m in MODELS] + [f"web{t:03d}"]
        a, b = items[:], items[:]
        rng.shuffle(a)
        rng.shuffle(b)
        system[qid] = a
        expert[qid] = b
        per_topic[qid] = {"rbo": average_overlap(a, b), "tau": tau_by_pairs(a, b)}

    expected = {
        "mean_rbo": sum(v["rbo"] for v in per_topic.values()) / len(per_topic),
        "mean_tau": sum(v["tau"] for v in per_topic.values()) / len(per_topic),
        "per_topic": per_topic,
    }
    fixture = {"system": system, "expert": expert, "expected": expected}
    out = HERE / "agreement_20topics.json"
    with open(out, "w", encoding="utf-8") as fh:
        json.dump(fixture, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
