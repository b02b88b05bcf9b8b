"""Sentence interaction matrix, centrality, and threshold-mask control.

Each directional influence score combines three stored attributes:
informativeness of the row sentence, its relevance to the document vector,
and its novelty against the running summary accumulator.  Masks threshold
the sigmoid of the novelty or relevance attribute; informativeness is not
maskable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import S_MAX
from .tensor import (
    ShapeError,
    Tensor,
    add,
    concat_rows,
    gather_rows,
    matmul,
    mul,
    scale,
    sigmoid,
    sub,
    tanh,
    transpose,
)
from .tensor import _sigmoid_arr  # stable scalar/array sigmoid for mask math

MASKABLE_ATTRIBUTES = ("novelty", "relevance")


@dataclass
class InteractionParams:
    w_info: Tensor             # d_m x 1: informativeness projection
    w_rel: Tensor              # d_m x d_m: relevance bilinear vs document vector
    w_nov_pair: Tensor         # d_m x d_m: novelty bilinear between sentences
    w_nov_memory: Tensor       # d_m x d_m: novelty penalty vs accumulated summary
    bias: Tensor               # 1 x 1
    w_centrality: Tensor       # S_MAX x 1, sliced to the first s rows per doc


@dataclass
class InteractionMatrix:
    q: Tensor                  # s x s, entries strictly in (0, 1)
    info: np.ndarray           # s: informativeness term per row sentence
    rel: np.ndarray            # s: relevance term per row sentence
    nov: np.ndarray            # s x s: novelty term per cell
    accumulated: np.ndarray    # s x d_m: summary accumulator entering each row
    bias: float

    @property
    def num_sentences(self) -> int:
        return self.q.shape[0]


@dataclass
class ControlSpec:
    eps_novelty: float = 0.0
    eps_relevance: float = 0.0

    def __post_init__(self):
        for name, val in (("eps_novelty", self.eps_novelty),
                          ("eps_relevance", self.eps_relevance)):
            if not 0.0 <= val <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {val}")

    @property
    def is_active(self) -> bool:
        return self.eps_novelty > 0.0 or self.eps_relevance > 0.0


@dataclass
class MaskMatrix:
    m: np.ndarray  # s x s of {0.0, 1.0}


def build_matrix(sentence_reprs: Tensor, doc_vector: Tensor,
                 params: InteractionParams) -> InteractionMatrix:
    """Assemble the influence matrix row by row, in sentence order.

    The summary accumulator for row i is (1/s) * sum over earlier rows t of
    h_t times row t's total outgoing influence; row 1 sees a zero
    accumulator.  Rows must therefore be computed strictly in order.
    """
    s, d_m = sentence_reprs.shape
    if doc_vector.shape != (1, d_m):
        raise ShapeError(
            f"doc_vector must be (1, {d_m}), got {doc_vector.shape}")
    if s > S_MAX:
        raise ShapeError(f"at most {S_MAX} sentences supported, got {s}")
    reprs_t = transpose(sentence_reprs)          # d_m x s
    doc_col = transpose(doc_vector)              # d_m x 1
    ones_col = Tensor(np.ones((s, 1)))
    accumulator = Tensor(np.zeros((1, d_m)))

    rows = []
    info_vals = np.zeros(s)
    rel_vals = np.zeros(s)
    nov_vals = np.zeros((s, s))
    acc_rows = np.zeros((s, d_m))
    for i in range(s):
        acc_rows[i] = accumulator.data[0]
        h_i = gather_rows(sentence_reprs, [i])                    # 1 x d_m
        info_i = matmul(h_i, params.w_info)                       # 1 x 1
        rel_i = matmul(matmul(h_i, params.w_rel), doc_col)        # 1 x 1
        pair_i = matmul(matmul(h_i, params.w_nov_pair), reprs_t)  # 1 x s
        memory_i = matmul(matmul(h_i, params.w_nov_memory),
                          transpose(tanh(accumulator)))           # 1 x 1
        nov_i = sub(pair_i, memory_i)
        logits_i = add(add(nov_i, add(info_i, rel_i)), params.bias)
        q_i = sigmoid(logits_i)
        rows.append(q_i)

        info_vals[i] = info_i.item()
        rel_vals[i] = rel_i.item()
        nov_vals[i] = nov_i.data[0]

        out_flow = matmul(q_i, ones_col)                          # 1 x 1
        accumulator = add(accumulator, scale(scale(h_i, out_flow), 1.0 / s))

    return InteractionMatrix(
        q=concat_rows(rows),
        info=info_vals,
        rel=rel_vals,
        nov=nov_vals,
        accumulated=acc_rows,
        bias=params.bias.item(),
    )


def _as_q(matrix) -> Tensor:
    return matrix.q if isinstance(matrix, InteractionMatrix) else matrix


def centrality(matrix, w_centrality: Tensor) -> Tensor:
    """Project the (possibly masked) influence matrix to per-sentence scores.

    Uses the first s rows of the fixed-size projection for an s-sentence
    document; returns an s x 1 tensor.
    """
    q = _as_q(matrix)
    s = q.shape[0]
    if w_centrality.shape[0] < s:
        raise ShapeError(
            f"centrality projection has {w_centrality.shape[0]} rows, need {s}")
    return matmul(q, gather_rows(w_centrality, range(s)))


def build_mask(matrix: InteractionMatrix, attribute: str, eps: float) -> MaskMatrix:
    """Binary keep/drop mask: keep cells whose sigmoid(term) >= eps."""
    if attribute not in MASKABLE_ATTRIBUTES:
        raise ValueError(
            f"attribute must be one of {MASKABLE_ATTRIBUTES}, got {attribute!r}")
    if not 0.0 <= eps <= 1.0:
        raise ValueError(f"eps must be in [0, 1], got {eps}")
    s = matrix.num_sentences
    if attribute == "novelty":
        vals = _sigmoid_arr(matrix.nov)
    else:
        # Relevance is a row attribute: masks keep or zero whole rows.
        vals = np.repeat(_sigmoid_arr(matrix.rel)[:, None], s, axis=1)
    return MaskMatrix((vals >= eps).astype(np.float64))


def control_mask(matrix: InteractionMatrix, control: ControlSpec) -> MaskMatrix:
    """Combined novelty/relevance mask (elementwise conjunction)."""
    nov = build_mask(matrix, "novelty", control.eps_novelty)
    rel = build_mask(matrix, "relevance", control.eps_relevance)
    return MaskMatrix(nov.m * rel.m)


def apply_mask(matrix, mask: MaskMatrix) -> Tensor:
    """Elementwise product; centrality downstream is recomputed, not retrained."""
    q = _as_q(matrix)
    if q.shape != mask.m.shape:
        raise ShapeError(f"mask shape {mask.m.shape} != matrix shape {q.shape}")
    return mul(q, Tensor(mask.m))


def export_heatmap(matrix: InteractionMatrix, masked_q: Tensor = None) -> dict:
    """JSON-ready heatmap payload for the control panel and plot scripts."""
    q = matrix.q if masked_q is None else masked_q
    return {
        "n": matrix.num_sentences,
        "cells": q.values.tolist(),
        "terms": {
            "info": matrix.info.tolist(),
            "rel": matrix.rel.tolist(),
            "nov": matrix.nov.reshape(-1).tolist(),
        },
    }
