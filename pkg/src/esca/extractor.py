"""Pairwise ranking over centrality, the point-wise ablation, and selection."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .tensor import Tensor, add, log, matmul, mul, scale, sigmoid, sub, sum_all

DEFAULT_TOP_K = 3


@dataclass
class SelectionResult:
    indices: list[int]   # descending centrality, ties to the lower index
    scores: list[float]  # centrality of each selected sentence
    k: int


def pair_prob(c_i: float, c_j: float) -> float:
    """Co-occurrence probability that sentence i outranks sentence j."""
    diff = c_i - c_j
    if diff >= 0:
        return 1.0 / (1.0 + math.exp(-diff))
    e = math.exp(diff)
    return e / (1.0 + e)


def _centrality_column(c) -> Tensor:
    if isinstance(c, Tensor):
        if len(c.shape) != 2 or c.shape[1] != 1:
            raise ValueError(f"centrality must be a column, got {c.shape}")
        return c
    return Tensor(np.asarray(c, dtype=np.float64).reshape(-1, 1))


def pairwise_loss(c, pairs: Sequence[tuple[int, int, int]]) -> Tensor:
    """Binary cross-entropy over ordered sentence pairs with differing labels.

    Differentiable back to the centrality column (and everything upstream).
    Empty pair lists contribute a constant zero and emit a warning.
    """
    c = _centrality_column(c)
    if not pairs:
        warnings.warn("pairwise_loss called with no pairs; loss is 0")
        return Tensor([[0.0]])
    s = c.shape[0]
    n = len(pairs)
    pick_i = np.zeros((n, s))
    pick_j = np.zeros((n, s))
    labels = np.zeros((n, 1))
    for row, (i, j, p) in enumerate(pairs):
        pick_i[row, i] = 1.0
        pick_j[row, j] = 1.0
        labels[row, 0] = p
    r = sigmoid(sub(matmul(Tensor(pick_i), c), matmul(Tensor(pick_j), c)))
    labels_t = Tensor(labels)
    ll = add(mul(labels_t, log(r)),
             mul(Tensor(1.0 - labels), log(sub(1.0, r))))
    return scale(sum_all(ll), -1.0)


def pointwise_loss(c, labels: Iterable[int]) -> Tensor:
    """Per-sentence binary cross-entropy of sigmoid(centrality) vs membership."""
    c = _centrality_column(c)
    s = c.shape[0]
    y = np.zeros((s, 1))
    for i in labels:
        y[int(i), 0] = 1.0
    p = sigmoid(c)
    ll = add(mul(Tensor(y), log(p)), mul(Tensor(1.0 - y), log(sub(1.0, p))))
    return scale(sum_all(ll), -1.0)


def _trigrams(tokens: Sequence[str]) -> set[tuple[str, str, str]]:
    return {tuple(tokens[i:i + 3]) for i in range(len(tokens) - 2)}


def select(c, k: int, sentences: Sequence[Sequence[str]],
           trigram_block: bool = False) -> SelectionResult:
    """Top-k sentences by centrality with optional trigram de-duplication."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    values = (c.values if isinstance(c, Tensor)
              else np.asarray(c, dtype=np.float64).reshape(-1))
    order = sorted(range(len(values)), key=lambda i: (-values[i], i))
    chosen: list[int] = []
    seen: set[tuple[str, str, str]] = set()
    for i in order:
        if len(chosen) >= k:
            break
        if trigram_block:
            grams = _trigrams(sentences[i])
            if grams & seen:
                continue
            seen |= grams
        chosen.append(i)
    return SelectionResult(indices=chosen,
                           scores=[float(values[i]) for i in chosen], k=k)
