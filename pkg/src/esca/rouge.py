"""ROUGE-1/2/L over lowercased token lists.

Summary-level scores: candidates and references are flat token lists
(concatenate sentences before calling).  No stemming or stopword removal.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Sequence


@dataclass(frozen=True)
class RougeScore:
    recall: float
    precision: float
    f1: float

    def as_dict(self) -> dict:
        return {"recall": self.recall, "precision": self.precision, "f1": self.f1}


def _score(match: float, cand_total: int, ref_total: int) -> RougeScore:
    recall = match / ref_total if ref_total > 0 else 0.0
    precision = match / cand_total if cand_total > 0 else 0.0
    f1 = (2 * precision * recall / (precision + recall)) if precision + recall > 0 else 0.0
    return RougeScore(recall, precision, f1)


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def rouge_n(candidate: Sequence[str], reference: Sequence[str], n: int) -> RougeScore:
    """Clipped n-gram overlap; empty denominators yield 0."""
    if n < 1:
        raise ValueError(f"rouge_n needs n >= 1, got {n}")
    cand = _ngrams(candidate, n)
    ref = _ngrams(reference, n)
    match = sum(min(count, ref[g]) for g, count in cand.items())
    return _score(match, sum(cand.values()), sum(ref.values()))


def lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    """Longest common subsequence length by dynamic programming."""
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0] * (len(b) + 1)
        for j, y in enumerate(b, start=1):
            if x == y:
                cur[j] = prev[j - 1] + 1
            else:
                cur[j] = max(prev[j], cur[j - 1])
        prev = cur
    return prev[-1]


def rouge_l(candidate: Sequence[str], reference: Sequence[str]) -> RougeScore:
    """LCS-based score; empty inputs yield 0."""
    length = lcs_length(candidate, reference)
    return _score(length, len(candidate), len(reference))
