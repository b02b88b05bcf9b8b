"""Transformer encoder: word states, sentence representations, document vector.

Sentence representations pool the word states of each sentence (mean by
default, or the sentence's first-word state); the document vector is the
mean of sentence representations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .corpus import Document, Vocab
from .tensor import (
    ContractViolation,
    ShapeError,
    Tensor,
    add,
    concat_cols,
    gather_rows,
    layer_norm,
    matmul,
    relu,
    scale,
    softmax_rows,
    tensor,
    transpose,
)

SENTENCE_REPR_MODES = ("mean", "first")


@dataclass
class EncoderConfig:
    layers: int = 2
    model_dim: int = 64
    heads: int = 4
    ff_dim: int = 128
    dropout: float = 0.2
    use_layer_norm: bool = True
    use_positions: bool = True
    sentence_repr: str = "mean"

    def __post_init__(self):
        if self.model_dim % self.heads != 0:
            raise ValueError(
                f"model_dim {self.model_dim} not divisible by heads {self.heads}")
        if min(self.layers, self.model_dim, self.heads, self.ff_dim) < 1:
            raise ValueError("all encoder dimensions must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.sentence_repr not in SENTENCE_REPR_MODES:
            raise ValueError(f"unknown sentence_repr {self.sentence_repr!r}")

    @property
    def head_dim(self) -> int:
        return self.model_dim // self.heads


@dataclass
class HeadParams:
    wq: Tensor
    wk: Tensor
    wv: Tensor


@dataclass
class AttentionParams:
    heads: list[HeadParams]
    wo: Tensor


@dataclass
class LayerParams:
    attn: AttentionParams
    ln1_gain: Tensor
    ln1_bias: Tensor
    ff_w1: Tensor
    ff_b1: Tensor
    ff_w2: Tensor
    ff_b2: Tensor
    ln2_gain: Tensor
    ln2_bias: Tensor


@dataclass
class EncoderParams:
    embed: Tensor  # vocab x model_dim
    layers: list[LayerParams] = field(default_factory=list)


@dataclass
class EncodedDocument:
    word_states: Tensor       # n x d_m
    sentence_reprs: Tensor    # s x d_m
    doc_vector: Tensor        # 1 x d_m
    sentence_map: list[int]   # word position -> sentence index
    token_ids: list[int]

    @property
    def num_sentences(self) -> int:
        return self.sentence_reprs.shape[0]

    @property
    def num_tokens(self) -> int:
        return self.word_states.shape[0]


def attention(q: Tensor, k: Tensor, v: Tensor,
              additive_mask: Optional[Tensor] = None) -> tuple[Tensor, Tensor]:
    """Scaled dot-product attention; returns (weights, context).

    Scores are scaled by sqrt of the key width; rows of the weight matrix
    sum to 1.
    """
    q, k, v = tensor(q), tensor(k), tensor(v)
    if k.shape[0] != v.shape[0]:
        raise ShapeError(f"attention: K rows {k.shape} != V rows {v.shape}")
    if q.shape[1] != k.shape[1]:
        raise ShapeError(f"attention: Q cols {q.shape} != K cols {k.shape}")
    scores = scale(matmul(q, transpose(k)), 1.0 / math.sqrt(q.shape[1]))
    if additive_mask is not None:
        scores = add(scores, additive_mask)
    weights = softmax_rows(scores)
    return weights, matmul(weights, v)


def multi_head(q_in: Tensor, kv_in: Tensor, params: AttentionParams,
               additive_mask: Optional[Tensor] = None) -> tuple[Tensor, list[Tensor]]:
    """Per-head projected attention, concatenated and output-projected."""
    contexts, weights = [], []
    for head in params.heads:
        w, ctx = attention(matmul(q_in, head.wq), matmul(kv_in, head.wk),
                           matmul(kv_in, head.wv), additive_mask)
        contexts.append(ctx)
        weights.append(w)
    return matmul(concat_cols(contexts), params.wo), weights


def affine(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """x @ w + b with the (1 x n) bias tiled over rows."""
    out = matmul(x, w)
    return add(out, matmul(Tensor(np.ones((out.shape[0], 1))), b))


def dropout(x: Tensor, rate: float, rng: np.random.Generator) -> Tensor:
    """Inverted dropout via a sampled constant mask."""
    if rate <= 0.0:
        return x
    mask = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return x * Tensor(mask)


def sinusoid_positions(n: int, dim: int) -> Tensor:
    pos = np.arange(n)[:, None]
    i = np.arange(dim)[None, :]
    angles = pos / np.power(10000.0, (2 * (i // 2)) / dim)
    enc = np.where(i % 2 == 0, np.sin(angles), np.cos(angles))
    return Tensor(enc)


def _pooling_matrix(doc: Document, mode: str) -> np.ndarray:
    s = doc.num_sentences
    n = len(doc.source_tokens())
    pool = np.zeros((s, n))
    start = 0
    for i, sent in enumerate(doc.sentences):
        width = len(sent)
        if mode == "mean":
            pool[i, start:start + width] = 1.0 / width
        else:  # first-word state stands in for a per-sentence begin token
            pool[i, start] = 1.0
        start += width
    return pool


def encoder_layer(x: Tensor, layer: LayerParams, cfg: EncoderConfig,
                  train_mode: bool, rng: Optional[np.random.Generator]) -> Tensor:
    a_in = dropout(x, cfg.dropout, rng) if train_mode else x
    att, _ = multi_head(a_in, a_in, layer.attn)
    x = add(x, att)
    if cfg.use_layer_norm:
        x = layer_norm(x, layer.ln1_gain, layer.ln1_bias)
    f_in = dropout(x, cfg.dropout, rng) if train_mode else x
    ff = affine(relu(affine(f_in, layer.ff_w1, layer.ff_b1)),
                layer.ff_w2, layer.ff_b2)
    x = add(x, ff)
    if cfg.use_layer_norm:
        x = layer_norm(x, layer.ln2_gain, layer.ln2_bias)
    return x


def encode(doc: Document, params: EncoderParams, cfg: EncoderConfig,
           vocab: Vocab, train_mode: bool = False,
           rng: Optional[np.random.Generator] = None) -> EncodedDocument:
    """Run the encoder stack over a tokenized document."""
    if doc.num_sentences == 0:
        raise ContractViolation(f"document {doc.id!r} has no sentences")
    if train_mode and cfg.dropout > 0.0 and rng is None:
        raise ContractViolation("train_mode with dropout needs an rng")
    ids = vocab.encode(doc.source_tokens())
    x = gather_rows(params.embed, ids)
    if cfg.use_positions:
        x = add(x, sinusoid_positions(len(ids), cfg.model_dim))
    for layer in params.layers:
        x = encoder_layer(x, layer, cfg, train_mode, rng)
    pool = Tensor(_pooling_matrix(doc, cfg.sentence_repr))
    sentence_reprs = matmul(pool, x)
    s = doc.num_sentences
    doc_vector = matmul(Tensor(np.full((1, s), 1.0 / s)), sentence_reprs)
    return EncodedDocument(
        word_states=x,
        sentence_reprs=sentence_reprs,
        doc_vector=doc_vector,
        sentence_map=doc.sentence_map(),
        token_ids=ids,
    )
