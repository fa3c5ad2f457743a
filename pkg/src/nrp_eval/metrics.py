"""Evaluation measures: nDCG@k, normalized rank position, RBO, Kendall's tau.

All functions are pure and safe to call concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np


@dataclass(frozen=True)
class NrpRecord:
    """Outcome of ranking one generated answer inside its document pool.

    ``rank_r`` is the 0-based number of items above the answer and
    ``pool_size`` counts the documents plus the injected answer, so
    ``nrp = 1 - rank_r / pool_size`` lies in (0, 1].
    """

    query_id: str
    model: str
    prompt_id: str
    sample: int
    rank_r: int
    pool_size: int
    nrp: float

    def __post_init__(self):
        if self.sample < 0:
            raise ValueError(f"sample index must be >= 0, got {self.sample}")
        expected = nrp(self.rank_r, self.pool_size)
        if self.nrp != expected:
            raise ValueError(
                f"inconsistent record: nrp={self.nrp!r} but "
                f"1 - {self.rank_r}/{self.pool_size} = {expected!r}"
            )

    @classmethod
    def from_rank(cls, query_id, model, prompt_id, sample, rank_r, pool_size):
        return cls(
            query_id=query_id,
            model=model,
            prompt_id=prompt_id,
            sample=sample,
            rank_r=rank_r,
            pool_size=pool_size,
            nrp=nrp(rank_r, pool_size),
        )


def nrp(rank_r: int, pool_size: int) -> float:
    """Normalized rank position: 1 - rank_r / pool_size.

    ``rank_r`` is 0-based, so an answer at the top of its pool scores 1.0
    and the value is strictly positive even in last place.
    """
    if pool_size < 2:
        raise ValueError(f"pool_size must be >= 2, got {pool_size}")
    if not 0 <= rank_r < pool_size:
        raise ValueError(
            f"rank_r must be in [0, {pool_size}), got {rank_r}"
        )
    return 1.0 - rank_r / pool_size


def ndcg_at_k(ranking, grades: Mapping[str, int], k: int) -> float:
    """Normalized discounted cumulative gain at cutoff ``k``.

    Linear gain (gain = grade) with a log2(position + 1) discount; items
    without a grade gain 0.  The ideal ranking is the judged grades sorted
    descending.  Returns 0.0 when there is no relevant item at all.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    ids = ranking.ids() if hasattr(ranking, "ids") else list(ranking)
    dcg = 0.0
    for position, item_id in enumerate(ids[:k], start=1):
        gain = grades.get(item_id, 0)
        if gain:
            dcg += gain / math.log2(position + 1)
    idcg = 0.0
    for position, gain in enumerate(sorted(grades.values(), reverse=True)[:k], start=1):
        if gain:
            idcg += gain / math.log2(position + 1)
    if idcg == 0.0:
        return 0.0
    return dcg / idcg


def _check_permutations(a: Sequence, b: Sequence) -> None:
    set_a, set_b = set(a), set(b)
    if len(set_a) != len(a) or len(set_b) != len(b):
        raise ValueError("ranked lists must not contain duplicate items")
    if set_a != set_b:
        raise ValueError(
            "ranked lists must cover the same item set; "
            f"difference: {sorted(set_a ^ set_b)}"
        )


def kendall_tau(a: Sequence, b: Sequence) -> float:
    """Kendall's tau between two total orders of the same items.

    tau = (concordant - discordant) / (n (n - 1) / 2).  Ties are not
    supported; the inputs must be permutations of one another.
    """
    n = len(a)
    if n < 2:
        raise ValueError("kendall_tau needs at least 2 items")
    _check_permutations(a, b)
    position_in_b = {item: i for i, item in enumerate(b)}
    sequence = [position_in_b[item] for item in a]
    discordant = 0
    for i in range(n):
        for j in range(i + 1, n):
            if sequence[i] > sequence[j]:
                discordant += 1
    total = n * (n - 1) // 2
    return (total - 2 * discordant) / total


def rbo(a: Sequence, b: Sequence, p: float = 1.0) -> float:
    """Rank-biased overlap over the shared prefix depth of two lists.

    With A_d the fraction of shared items in the two depth-d prefixes and
    n = min(len(a), len(b)), the value is the p-weighted mean of the A_d:
    sum(p^(d-1) A_d) / sum(p^(d-1)).  At p = 1 the weights are uniform and
    the measure degenerates to the average overlap (1/n) sum(A_d).  Equal
    item sets are not required; only prefix overlap matters.
    """
    if not 0.0 < p <= 1.0:
        raise ValueError(f"p must be in (0, 1], got {p}")
    n = min(len(a), len(b))
    if n == 0:
        raise ValueError("rbo needs non-empty rankings")
    if len(set(a)) != len(a) or len(set(b)) != len(b):
        raise ValueError("ranked lists must not contain duplicate items")
    seen_a: set = set()
    seen_b: set = set()
    overlap = 0
    weighted = 0.0
    weight_sum = 0.0
    weight = 1.0
    for depth in range(1, n + 1):
        x, y = a[depth - 1], b[depth - 1]
        if x == y:
            overlap += 1
        else:
            if x in seen_b:
                overlap += 1
            if y in seen_a:
                overlap += 1
        seen_a.add(x)
        seen_b.add(y)
        weighted += weight * (overlap / depth)
        weight_sum += weight
        weight *= p
    return weighted / weight_sum


@dataclass(frozen=True)
class NrpSummary:
    """Distribution summary of NRP values for one (model, prompt) group."""

    model: str
    prompt_id: str
    count: int
    mean: float
    min: float
    q1: float
    median: float
    q3: float
    max: float


def aggregate_nrp(records: Sequence[NrpRecord]) -> list[NrpSummary]:
    """Per (model, prompt) summaries over all (query, sample) records.

    Quartiles use linear interpolation between closest ranks.  Groups are
    returned sorted by (model, prompt_id); an empty input yields an empty
    list.
    """
    groups: dict[tuple[str, str], list[float]] = {}
    for record in records:
        groups.setdefault((record.model, record.prompt_id), []).append(record.nrp)
    summaries = []
    for (model, prompt_id), values in sorted(groups.items()):
        data = np.asarray(values, dtype=float)
        q1, median, q3 = np.quantile(data, [0.25, 0.5, 0.75], method="linear")
        summaries.append(
            NrpSummary(
                model=model,
                prompt_id=prompt_id,
                count=len(values),
                mean=float(np.mean(data)),
                min=float(np.min(data)),
                q1=float(q1),
                median=float(median),
                q3=float(q3),
                max=float(np.max(data)),
            )
        )
    return summaries
