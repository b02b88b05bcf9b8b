"""Decoder with copy attention re-weighted by sentence centrality.

The decoder processes a whole teacher-forced prefix in one causally masked
pass; per-step decoding reuses the same path and reads the last position.
Copy attention comes from the final decoder layer's cross-attention,
averaged over heads, and the deployed re-weighting multiplies each source
position's attention by (1 + p_sen * centrality of its sentence) before
renormalizing.  The context vector and the copy distribution both use the
deployed attention.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .corpus import BOS, EOS, PAD, UNK, Vocab
from .encoder import (
    AttentionParams,
    EncodedDocument,
    EncoderConfig,
    affine,
    dropout,
    multi_head,
    sinusoid_positions,
)
from .extractor import SelectionResult
from .tensor import (
    ContractViolation,
    Tensor,
    add,
    concat_cols,
    div,
    gather_rows,
    layer_norm,
    log,
    matmul,
    mul,
    relu,
    scale,
    sigmoid,
    softmax_rows,
    sub,
    sum_all,
    transpose,
)

NEG_INF = -1e9


@dataclass
class DecoderConfig:
    layers: int = 2

    def __post_init__(self):
        if self.layers < 1:
            raise ValueError("decoder needs at least one layer")


@dataclass
class DecoderLayerParams:
    self_attn: AttentionParams
    ln1_gain: Tensor
    ln1_bias: Tensor
    cross_attn: AttentionParams
    ln2_gain: Tensor
    ln2_bias: Tensor
    ff_w1: Tensor
    ff_b1: Tensor
    ff_w2: Tensor
    ff_b2: Tensor
    ln3_gain: Tensor
    ln3_bias: Tensor


@dataclass
class DecoderParams:
    layers: list[DecoderLayerParams]
    w_select: Tensor        # d_m x 1: gate input from the selected-content repr
    b_select: Tensor        # 1 x 1
    w_context_gate: Tensor  # d_m x 1: generation-gate input from the context
    w_state_gate: Tensor    # d_m x 1: generation-gate input from the state
    b_gate: Tensor          # 1 x 1
    out_w1: Tensor          # 2*d_m x d_m
    out_b1: Tensor          # 1 x d_m
    out_w2: Tensor          # d_m x vocab
    out_b2: Tensor          # 1 x vocab


class ExtendedVocab:
    """Base vocabulary extended with this document's out-of-vocab source words."""

    def __init__(self, source_tokens: Sequence[str], vocab: Vocab):
        self.base_size = len(vocab)
        self.oov_tokens: list[str] = []
        oov_ids: dict[str, int] = {}
        self.source_ext_ids: list[int] = []
        for tok in source_tokens:
            if tok in vocab:
                self.source_ext_ids.append(vocab.id_of(tok))
            else:
                if tok not in oov_ids:
                    oov_ids[tok] = self.base_size + len(self.oov_tokens)
                    self.oov_tokens.append(tok)
                self.source_ext_ids.append(oov_ids[tok])
        self._oov_ids = oov_ids

    @property
    def size(self) -> int:
        return self.base_size + len(self.oov_tokens)

    def ext_id_of(self, token: str, vocab: Vocab) -> Optional[int]:
        if token in vocab:
            return vocab.id_of(token)
        return self._oov_ids.get(token)

    def token_of(self, ext_id: int, vocab: Vocab) -> str:
        if ext_id < self.base_size:
            return vocab.token_of(ext_id)
        return self.oov_tokens[ext_id - self.base_size]


@dataclass
class DecodeContext:
    encoded: EncodedDocument
    centrality: Tensor        # s x 1, post-mask when control is active
    selected: SelectionResult
    selected_repr: Tensor     # 1 x d_m, fixed across decoding steps
    word_centrality: Tensor   # 1 x n, centrality of each word's sentence
    ext: ExtendedVocab
    copy_scatter: Tensor      # n x ext size, routes copy mass to token slots


def make_decode_context(encoded: EncodedDocument, centrality_t: Tensor,
                        selection: SelectionResult, doc_tokens: Sequence[str],
                        vocab: Vocab) -> DecodeContext:
    s = encoded.num_sentences
    n = encoded.num_tokens
    if selection.indices:
        pick = np.zeros((1, s))
        pick[0, selection.indices] = 1.0 / len(selection.indices)
        selected_repr = matmul(Tensor(pick), encoded.sentence_reprs)
    else:
        selected_repr = encoded.doc_vector
    word_map = np.zeros((n, s))
    for pos, sent in enumerate(encoded.sentence_map):
        word_map[pos, sent] = 1.0
    word_centrality = transpose(matmul(Tensor(word_map), centrality_t))
    ext = ExtendedVocab(doc_tokens, vocab)
    scatter = np.zeros((n, ext.size))
    for pos, ext_id in enumerate(ext.source_ext_ids):
        scatter[pos, ext_id] = 1.0
    return DecodeContext(
        encoded=encoded,
        centrality=centrality_t,
        selected=selection,
        selected_repr=selected_repr,
        word_centrality=word_centrality,
        ext=ext,
        copy_scatter=Tensor(scatter),
    )


@dataclass
class StepOutput:
    alpha: Tensor       # 1 x n base attention over source positions
    alpha_hat: Tensor   # 1 x n deployed attention
    p_sen: float
    p_gen: float
    p_vocab: Tensor     # 1 x vocab
    p_final: Tensor     # 1 x extended vocab


@dataclass
class SequenceOutput:
    """Per-position decode results for a whole causally masked prefix."""
    states: Tensor      # m x d_m
    alpha: Tensor       # m x n
    alpha_hat: Tensor   # m x n
    p_sen: Tensor       # 1 x 1
    p_gen: Tensor       # m x 1
    p_vocab: Tensor     # m x vocab
    p_final: Tensor     # m x extended vocab


def deploy_attention(alpha: Tensor, word_centrality: Tensor,
                     p_sen) -> Tensor:
    """Re-weight attention rows by 1 + p_sen * per-word sentence centrality."""
    m = alpha.shape[0]
    n = alpha.shape[1]
    weights = add(1.0, scale(word_centrality, p_sen))            # 1 x n
    tiled = matmul(Tensor(np.ones((m, 1))), weights)             # m x n
    raw = mul(alpha, tiled)
    row_sums = matmul(raw, Tensor(np.ones((n, 1))))              # m x 1
    return div(raw, matmul(row_sums, Tensor(np.ones((1, n)))))


def _causal_mask(m: int) -> Tensor:
    return Tensor(np.triu(np.full((m, m), NEG_INF), k=1))


def _tile_rows(row: Tensor, m: int) -> Tensor:
    return matmul(Tensor(np.ones((m, 1))), row)


def _tile_cols(col: Tensor, n: int) -> Tensor:
    return matmul(col, Tensor(np.ones((1, n))))


def decode_sequence(prefix_ids: Sequence[int], ctx: DecodeContext,
                    dec_params: DecoderParams, embed: Tensor,
                    cfg: EncoderConfig, dec_cfg: DecoderConfig,
                    train_mode: bool = False,
                    rng: Optional[np.random.Generator] = None,
                    p_gen_override: Optional[float] = None,
                    p_sen_override: Optional[float] = None) -> SequenceOutput:
    """One causally masked decoder pass over the whole prefix."""
    if len(prefix_ids) == 0:
        raise ContractViolation("decode needs a non-empty prefix")
    if prefix_ids[0] != BOS:
        raise ContractViolation("prefix must start with BOS")
    if all(i == PAD for i in ctx.encoded.token_ids):
        raise ContractViolation("source contains only PAD tokens")
    m = len(prefix_ids)
    mask = _causal_mask(m)
    x = gather_rows(embed, prefix_ids)
    x = add(x, sinusoid_positions(m, cfg.model_dim))
    cross_weights = None
    for layer in dec_params.layers:
        a_in = dropout(x, cfg.dropout, rng) if train_mode else x
        att, _ = multi_head(a_in, a_in, layer.self_attn, additive_mask=mask)
        x = add(x, att)
        if cfg.use_layer_norm:
            x = layer_norm(x, layer.ln1_gain, layer.ln1_bias)
        c_in = dropout(x, cfg.dropout, rng) if train_mode else x
        cross, cross_weights = multi_head(c_in, ctx.encoded.word_states,
                                          layer.cross_attn)
        x = add(x, cross)
        if cfg.use_layer_norm:
            x = layer_norm(x, layer.ln2_gain, layer.ln2_bias)
        f_in = dropout(x, cfg.dropout, rng) if train_mode else x
        ff = affine(relu(affine(f_in, layer.ff_w1, layer.ff_b1)),
                    layer.ff_w2, layer.ff_b2)
        x = add(x, ff)
        if cfg.use_layer_norm:
            x = layer_norm(x, layer.ln3_gain, layer.ln3_bias)

    # Copy attention: final layer's cross-attention, averaged over heads.
    alpha = scale(cross_weights[0], 1.0 / len(cross_weights))
    for w in cross_weights[1:]:
        alpha = add(alpha, scale(w, 1.0 / len(cross_weights)))

    if p_sen_override is not None:
        p_sen = Tensor([[float(p_sen_override)]])
    else:
        p_sen = sigmoid(add(matmul(ctx.selected_repr, dec_params.w_select),
                            dec_params.b_select))
    alpha_hat = deploy_attention(alpha, ctx.word_centrality, p_sen)
    context = matmul(alpha_hat, ctx.encoded.word_states)          # m x d_m

    if p_gen_override is not None:
        p_gen = Tensor(np.full((m, 1), float(p_gen_override)))
    else:
        p_gen = sigmoid(add(add(matmul(context, dec_params.w_context_gate),
                                matmul(x, dec_params.w_state_gate)),
                            _tile_rows(dec_params.b_gate, m)))

    p_vocab = softmax_rows(affine(affine(concat_cols([x, context]),
                                         dec_params.out_w1, dec_params.out_b1),
                                  dec_params.out_w2, dec_params.out_b2))
    n_oov = ctx.ext.size - ctx.ext.base_size
    if n_oov > 0:
        p_vocab_ext = concat_cols([p_vocab, Tensor(np.zeros((m, n_oov)))])
    else:
        p_vocab_ext = p_vocab
    p_copy = matmul(alpha_hat, ctx.copy_scatter)                  # m x ext
    gen_w = _tile_cols(p_gen, ctx.ext.size)
    copy_w = _tile_cols(sub(1.0, p_gen), ctx.ext.size)
    p_final = add(mul(p_vocab_ext, gen_w), mul(p_copy, copy_w))
    return SequenceOutput(states=x, alpha=alpha, alpha_hat=alpha_hat,
                          p_sen=p_sen, p_gen=p_gen, p_vocab=p_vocab,
                          p_final=p_final)


def decode_step(prefix_ids: Sequence[int], ctx: DecodeContext,
                dec_params: DecoderParams, embed: Tensor, cfg: EncoderConfig,
                dec_cfg: DecoderConfig,
                p_gen_override: Optional[float] = None,
                p_sen_override: Optional[float] = None) -> StepOutput:
    """Distributions for the next token after the given prefix."""
    seq = decode_sequence(prefix_ids, ctx, dec_params, embed, cfg, dec_cfg,
                          p_gen_override=p_gen_override,
                          p_sen_override=p_sen_override)
    last = [len(prefix_ids) - 1]
    return StepOutput(
        alpha=gather_rows(seq.alpha, last),
        alpha_hat=gather_rows(seq.alpha_hat, last),
        p_sen=seq.p_sen.item(),
        p_gen=float(seq.p_gen.data[-1, 0]),
        p_vocab=gather_rows(seq.p_vocab, last),
        p_final=gather_rows(seq.p_final, last),
    )


def _base_id(token: str, vocab: Vocab) -> int:
    return vocab.id_of(token) if token in vocab else UNK


def sequence_nll(reference_tokens: Sequence[str], ctx: DecodeContext,
                 dec_params: DecoderParams, embed: Tensor, cfg: EncoderConfig,
                 dec_cfg: DecoderConfig, vocab: Vocab,
                 train_mode: bool = False,
                 rng: Optional[np.random.Generator] = None) -> tuple[Tensor, dict]:
    """Teacher-forced negative log-likelihood of the reference plus EOS.

    Reference words absent from both the vocabulary and the source get the
    probability floor and are reported in the diagnostics.
    """
    tokens = list(reference_tokens)
    prefix = [BOS] + [_base_id(t, vocab) for t in tokens]
    targets = []
    misses = []
    for step, tok in enumerate(tokens):
        ext_id = ctx.ext.ext_id_of(tok, vocab)
        if ext_id is None:
            misses.append(step)
        targets.append(ext_id)
    targets.append(EOS)
    seq = decode_sequence(prefix, ctx, dec_params, embed, cfg, dec_cfg,
                          train_mode=train_mode, rng=rng)
    m = len(targets)
    onehot = np.zeros((m, ctx.ext.size))
    for row, t in enumerate(targets):
        if t is not None:
            onehot[row, t] = 1.0
    picked = matmul(mul(seq.p_final, Tensor(onehot)),
                    Tensor(np.ones((ctx.ext.size, 1))))
    loss = scale(sum_all(log(picked)), -1.0)
    diagnostics = {
        "unrepresentable_steps": misses,
        "p_gen_mean": float(seq.p_gen.data.mean()),
    }
    return loss, diagnostics


def joint_loss(l_ext: Tensor, l_abs: Tensor) -> Tensor:
    """Unweighted sum of the extractor and abstractor objectives."""
    for name, t in (("l_ext", l_ext), ("l_abs", l_abs)):
        if not math.isfinite(t.item()):
            raise ContractViolation(f"{name} is not finite")
    return add(l_ext, l_abs)


@dataclass
class _Hypothesis:
    emitted: list[int] = field(default_factory=list)  # extended-vocab ids
    logprob: float = 0.0
    p_gen_sum: float = 0.0
    trigrams: set = field(default_factory=set)


def _hyp_prefix(hyp: _Hypothesis, base_size: int) -> list[int]:
    # Copied OOV tokens have no embedding row; feed UNK back in.
    return [BOS] + [e if e < base_size else UNK for e in hyp.emitted]


def beam_search(ctx: DecodeContext, dec_params: DecoderParams, embed: Tensor,
                cfg: EncoderConfig, dec_cfg: DecoderConfig, vocab: Vocab,
                beam: int = 4, max_len: int = 120,
                length_penalty: float = 1.0,
                trigram_block: bool = True) -> tuple[list[str], dict]:
    """Beam decoding over the extended vocabulary with trigram blocking.

    Finished hypotheses are scored by logprob / length**penalty; returns the
    decoded tokens (no BOS/EOS) and per-run stats.
    """
    if beam < 1:
        raise ValueError(f"beam must be >= 1, got {beam}")

    def ranked_score(hyp: _Hypothesis, length: int) -> float:
        return hyp.logprob / (max(length, 1) ** length_penalty)

    live = [_Hypothesis()]
    finished: list[tuple[float, _Hypothesis]] = []
    for _ in range(max_len):
        if not live:
            break
        expansions: list[tuple[float, _Hypothesis]] = []
        for hyp in live:
            out = decode_step(_hyp_prefix(hyp, ctx.ext.base_size), ctx,
                              dec_params, embed, cfg, dec_cfg)
            logp = np.log(np.maximum(out.p_final.values, 1e-300))
            top = np.argsort(-logp)[: 2 * beam + 1]
            for ext_id in top:
                ext_id = int(ext_id)
                if ext_id in (PAD, BOS):
                    continue
                cand_logprob = hyp.logprob + float(logp[ext_id])
                if ext_id == EOS:
                    done = _Hypothesis(list(hyp.emitted), cand_logprob,
                                       hyp.p_gen_sum + out.p_gen,
                                       set(hyp.trigrams))
                    finished.append(
                        (ranked_score(done, len(done.emitted) + 1), done))
                    continue
                gram = None
                if trigram_block and len(hyp.emitted) >= 2:
                    gram = (hyp.emitted[-2], hyp.emitted[-1], ext_id)
                    if gram in hyp.trigrams:
                        continue
                nxt = _Hypothesis(hyp.emitted + [ext_id], cand_logprob,
                                  hyp.p_gen_sum + out.p_gen,
                                  set(hyp.trigrams))
                if gram is not None:
                    nxt.trigrams.add(gram)
                expansions.append((cand_logprob, nxt))
        expansions.sort(key=lambda pair: -pair[0])
        live = [hyp for _, hyp in expansions[:beam]]
    for hyp in live:  # partials at max_len compete on the same score
        finished.append((ranked_score(hyp, len(hyp.emitted)), hyp))
    if not finished:
        return [], {"p_gen_mean": 0.0, "score": float("-inf")}
    score, best = max(finished, key=lambda pair: pair[0])
    tokens = [ctx.ext.token_of(e, vocab) for e in best.emitted]
    steps = len(best.emitted) + 1
    return tokens, {"p_gen_mean": best.p_gen_sum / steps if steps else 0.0,
                    "score": score}
