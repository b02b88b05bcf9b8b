"""Shared helpers: a small wired-up model over a toy document."""

from dataclasses import dataclass

import numpy as np
import pytest

from esca.abstractor import DecoderConfig, DecodeContext, make_decode_context
from esca.corpus import Document, Vocab, build_vocab
from esca.encoder import EncodedDocument, EncoderConfig, encode
from esca.extractor import select
from esca.interaction import InteractionMatrix, build_matrix, centrality
from esca.params import (
    init_decoder_params,
    init_encoder_params,
    init_interaction_params,
)


@dataclass
class Setup:
    doc: Document
    vocab: Vocab
    cfg: EncoderConfig
    dec_cfg: DecoderConfig
    enc_params: object
    int_params: object
    dec_params: object
    encoded: EncodedDocument
    matrix: InteractionMatrix
    centrality: object
    selection: object
    ctx: DecodeContext


def build_setup(text="the cat sat down. a dog ran far away. birds fly south now.",
                summary="the cat sat down.", seed=0, d_m=8, heads=2,
                enc_layers=1, dec_layers=1, ff_dim=16, k=2,
                extra_docs=()) -> Setup:
    doc = Document.from_raw("d", text, summary=summary)
    docs = [doc] + [Document.from_raw(f"x{i}", t) for i, t in enumerate(extra_docs)]
    vocab = build_vocab(docs)
    cfg = EncoderConfig(layers=enc_layers, model_dim=d_m, heads=heads,
                        ff_dim=ff_dim, dropout=0.0)
    dec_cfg = DecoderConfig(layers=dec_layers)
    rng = np.random.default_rng(seed)
    enc_params = init_encoder_params(len(vocab), cfg, rng)
    int_params = init_interaction_params(cfg, rng)
    dec_params = init_decoder_params(len(vocab), cfg, dec_cfg, rng)
    encoded = encode(doc, enc_params, cfg, vocab)
    matrix = build_matrix(encoded.sentence_reprs, encoded.doc_vector, int_params)
    c = centrality(matrix, int_params.w_centrality)
    selection = select(c, k, doc.sentences)
    ctx = make_decode_context(encoded, c, selection, doc.source_tokens(), vocab)
    return Setup(doc=doc, vocab=vocab, cfg=cfg, dec_cfg=dec_cfg,
                 enc_params=enc_params, int_params=int_params,
                 dec_params=dec_params, encoded=encoded, matrix=matrix,
                 centrality=c, selection=selection, ctx=ctx)


@pytest.fixture
def setup():
    return build_setup()
