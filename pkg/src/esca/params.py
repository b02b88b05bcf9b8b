"""Parameter initialization and generic traversal over parameter trees.

Parameter groups are plain dataclasses holding Tensors (possibly nested in
lists).  ``iter_tensors`` walks them in a stable field order, which fixes
the layout for checkpoints, gradient lookups, and optimizer state.
"""

from __future__ import annotations

import dataclasses
from typing import Iterator

import numpy as np

from .abstractor import DecoderConfig, DecoderLayerParams, DecoderParams
from .corpus import S_MAX
from .encoder import (
    AttentionParams,
    EncoderConfig,
    EncoderParams,
    HeadParams,
    LayerParams,
)
from .interaction import InteractionParams
from .tensor import Tensor


def iter_tensors(obj, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
    """Yield (dotted_name, tensor) over a dataclass/list tree of Tensors."""
    if isinstance(obj, Tensor):
        yield prefix, obj
    elif dataclasses.is_dataclass(obj):
        for f in dataclasses.fields(obj):
            name = f"{prefix}.{f.name}" if prefix else f.name
            yield from iter_tensors(getattr(obj, f.name), name)
    elif isinstance(obj, (list, tuple)):
        for i, item in enumerate(obj):
            yield from iter_tensors(item, f"{prefix}.{i}")
    # other field types (ints, strings) carry no tensors


def set_tensor(root, dotted: str, value: Tensor) -> None:
    """Replace the tensor at a dotted path produced by iter_tensors."""
    parts = dotted.split(".")
    obj = root
    for part in parts[:-1]:
        obj = obj[int(part)] if part.isdigit() else getattr(obj, part)
    last = parts[-1]
    if last.isdigit():
        obj[int(last)] = value
    else:
        setattr(obj, last, value)


def glorot(rng: np.random.Generator, rows: int, cols: int) -> Tensor:
    limit = np.sqrt(6.0 / (rows + cols))
    return Tensor(rng.uniform(-limit, limit, size=(rows, cols)))


def _attention_params(rng, d_m: int, heads: int) -> AttentionParams:
    head_dim = d_m // heads
    return AttentionParams(
        heads=[HeadParams(wq=glorot(rng, d_m, head_dim),
                          wk=glorot(rng, d_m, head_dim),
                          wv=glorot(rng, d_m, head_dim))
               for _ in range(heads)],
        wo=glorot(rng, d_m, d_m),
    )


def _encoder_layer(rng, cfg: EncoderConfig) -> LayerParams:
    d_m, ff = cfg.model_dim, cfg.ff_dim
    return LayerParams(
        attn=_attention_params(rng, d_m, cfg.heads),
        ln1_gain=Tensor(np.ones((1, d_m))), ln1_bias=Tensor(np.zeros((1, d_m))),
        ff_w1=glorot(rng, d_m, ff), ff_b1=Tensor(np.zeros((1, ff))),
        ff_w2=glorot(rng, ff, d_m), ff_b2=Tensor(np.zeros((1, d_m))),
        ln2_gain=Tensor(np.ones((1, d_m))), ln2_bias=Tensor(np.zeros((1, d_m))),
    )


def init_encoder_params(vocab_size: int, cfg: EncoderConfig,
                        rng: np.random.Generator) -> EncoderParams:
    return EncoderParams(
        embed=Tensor(rng.normal(0.0, 0.1, size=(vocab_size, cfg.model_dim))),
        layers=[_encoder_layer(rng, cfg) for _ in range(cfg.layers)],
    )


def init_interaction_params(cfg: EncoderConfig,
                            rng: np.random.Generator) -> InteractionParams:
    # Bilinear terms contract over d_m^2 entries of ~unit-scale states, so
    # weights start at std 1/d_m to keep initial influence logits O(1);
    # larger inits saturate the sigmoid and stall the extractor.
    d_m = cfg.model_dim
    bilinear_std = 1.0 / d_m
    return InteractionParams(
        w_info=Tensor(rng.normal(0.0, 1.0 / np.sqrt(d_m), size=(d_m, 1))),
        w_rel=Tensor(rng.normal(0.0, bilinear_std, size=(d_m, d_m))),
        w_nov_pair=Tensor(rng.normal(0.0, bilinear_std, size=(d_m, d_m))),
        w_nov_memory=Tensor(rng.normal(0.0, bilinear_std, size=(d_m, d_m))),
        bias=Tensor(np.zeros((1, 1))),
        w_centrality=glorot(rng, S_MAX, 1),
    )


def _decoder_layer(rng, cfg: EncoderConfig) -> DecoderLayerParams:
    d_m, ff = cfg.model_dim, cfg.ff_dim
    return DecoderLayerParams(
        self_attn=_attention_params(rng, d_m, cfg.heads),
        ln1_gain=Tensor(np.ones((1, d_m))), ln1_bias=Tensor(np.zeros((1, d_m))),
        cross_attn=_attention_params(rng, d_m, cfg.heads),
        ln2_gain=Tensor(np.ones((1, d_m))), ln2_bias=Tensor(np.zeros((1, d_m))),
        ff_w1=glorot(rng, d_m, ff), ff_b1=Tensor(np.zeros((1, ff))),
        ff_w2=glorot(rng, ff, d_m), ff_b2=Tensor(np.zeros((1, d_m))),
        ln3_gain=Tensor(np.ones((1, d_m))), ln3_bias=Tensor(np.zeros((1, d_m))),
    )


def init_decoder_params(vocab_size: int, cfg: EncoderConfig,
                        dec_cfg: DecoderConfig,
                        rng: np.random.Generator) -> DecoderParams:
    d_m = cfg.model_dim
    return DecoderParams(
        layers=[_decoder_layer(rng, cfg) for _ in range(dec_cfg.layers)],
        w_select=glorot(rng, d_m, 1),
        b_select=Tensor(np.zeros((1, 1))),
        w_context_gate=glorot(rng, d_m, 1),
        w_state_gate=glorot(rng, d_m, 1),
        b_gate=Tensor(np.zeros((1, 1))),
        out_w1=glorot(rng, 2 * d_m, d_m),
        out_b1=Tensor(np.zeros((1, d_m))),
        out_w2=glorot(rng, d_m, vocab_size),
        out_b2=Tensor(np.zeros((1, vocab_size))),
    )


def zero_like_tree(root) -> None:
    """Zero every tensor in a parameter tree in place (test configurations)."""
    for name, t in list(iter_tensors(root)):
        set_tensor(root, name, Tensor(np.zeros(t.shape)))
