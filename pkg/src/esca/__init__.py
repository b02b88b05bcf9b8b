"""Explainable select-and-generate summarization with controllable inference."""

__version__ = "0.1.0"

from .corpus import Document, Vocab, build_vocab, load_corpus, oracle_label
from .encoder import EncoderConfig, encode
from .extractor import select
from .interaction import (
    ControlSpec,
    apply_mask,
    build_mask,
    build_matrix,
    centrality,
    export_heatmap,
)
from .pipeline import (
    ModelParams,
    TrainConfig,
    evaluate,
    init_model,
    load_checkpoint,
    save_checkpoint,
    summarize_abstract,
    summarize_extract,
    train,
)
from .rouge import RougeScore, rouge_l, rouge_n

__all__ = [
    "ControlSpec",
    "Document",
    "EncoderConfig",
    "ModelParams",
    "RougeScore",
    "TrainConfig",
    "Vocab",
    "apply_mask",
    "build_mask",
    "build_matrix",
    "build_vocab",
    "centrality",
    "encode",
    "evaluate",
    "export_heatmap",
    "init_model",
    "load_checkpoint",
    "load_corpus",
    "oracle_label",
    "rouge_l",
    "rouge_n",
    "save_checkpoint",
    "select",
    "summarize_abstract",
    "summarize_extract",
    "train",
]
