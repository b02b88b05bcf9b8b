"""Training loop, evaluation, checkpoint persistence, and summarization entry points."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .abstractor import (
    DecoderConfig,
    DecoderParams,
    beam_search,
    joint_loss,
    make_decode_context,
    sequence_nll,
)
from .corpus import (
    Document,
    ExtractLabels,
    Vocab,
    build_vocab,
    detokenize,
    label_corpus,
    load_corpus,
)
from .encoder import EncodedDocument, EncoderConfig, EncoderParams, encode
from .extractor import DEFAULT_TOP_K, pairwise_loss, pointwise_loss, select
from .interaction import (
    ControlSpec,
    InteractionMatrix,
    InteractionParams,
    apply_mask,
    build_matrix,
    centrality,
    control_mask,
    export_heatmap,
)
from .params import (
    init_decoder_params,
    init_encoder_params,
    init_interaction_params,
    iter_tensors,
    set_tensor,
)
from .rouge import rouge_l, rouge_n
from .tensor import ContractViolation, Graph, Tensor, add, backward, scale

FORMAT_VERSION = 1


class CheckpointError(RuntimeError):
    """A checkpoint file could not be written or read back faithfully."""


class TrainingError(RuntimeError):
    """Training aborted (non-finite loss or unusable corpus)."""


@dataclass
class TrainConfig:
    lr: float = 0.15
    optimizer: str = "adagrad"
    batch_size: int = 8
    max_steps: int = 100
    grad_clip: float = 2.0
    seed: int = 0
    eval_every: int = 0
    early_stop_patience: int = 0
    top_k: int = DEFAULT_TOP_K
    min_freq: int = 1
    extractor_only: bool = False
    ranking: str = "pairwise"  # or "pointwise" (ablation)

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError(f"lr must be > 0, got {self.lr}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.optimizer not in ("adagrad", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.ranking not in ("pairwise", "pointwise"):
            raise ValueError(f"unknown ranking {self.ranking!r}")


@dataclass
class ModelParams:
    version: int
    vocab: Vocab
    enc_cfg: EncoderConfig
    dec_cfg: DecoderConfig
    encoder: EncoderParams
    interaction: InteractionParams
    decoder: DecoderParams

    def named_tensors(self):
        yield from iter_tensors(self.encoder, "encoder")
        yield from iter_tensors(self.interaction, "interaction")
        yield from iter_tensors(self.decoder, "decoder")

    def set_named(self, name: str, value: Tensor) -> None:
        group, _, rest = name.partition(".")
        root = {"encoder": self.encoder, "interaction": self.interaction,
                "decoder": self.decoder}[group]
        set_tensor(root, rest, value)


def init_model(vocab: Vocab, enc_cfg: EncoderConfig, dec_cfg: DecoderConfig,
               seed: int) -> ModelParams:
    rng = np.random.default_rng(seed)
    return ModelParams(
        version=FORMAT_VERSION,
        vocab=vocab,
        enc_cfg=enc_cfg,
        dec_cfg=dec_cfg,
        encoder=init_encoder_params(len(vocab), enc_cfg, rng),
        interaction=init_interaction_params(enc_cfg, rng),
        decoder=init_decoder_params(len(vocab), enc_cfg, dec_cfg, rng),
    )


def params_checksum(model: ModelParams) -> str:
    """SHA-256 over all parameter payloads, in walk order."""
    digest = hashlib.sha256()
    for name, t in model.named_tensors():
        digest.update(name.encode())
        digest.update(t.data.astype("<f8").tobytes())
    return digest.hexdigest()


def save_checkpoint(model: ModelParams, path) -> Path:
    """Header JSON line + little-endian float64 payload, in walk order."""
    path = Path(path)
    names, shapes, payloads = [], [], []
    for name, t in model.named_tensors():
        names.append(name)
        shapes.append(list(t.shape))
        payloads.append(t.data.astype("<f8").tobytes())
    header = {
        "format_version": model.version,
        "enc_cfg": dataclasses.asdict(model.enc_cfg),
        "dec_cfg": dataclasses.asdict(model.dec_cfg),
        "vocab": model.vocab.tokens,
        "tensors": [{"name": n, "shape": s} for n, s in zip(names, shapes)],
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8"))
        fh.write(b"\n")
        for blob in payloads:
            fh.write(blob)
    return path


def load_checkpoint(path) -> ModelParams:
    path = Path(path)
    with open(path, "rb") as fh:
        header_line = fh.readline()
        blob = fh.read()
    try:
        header = json.loads(header_line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: unreadable header ({exc})") from exc
    version = header.get("format_version")
    if version != FORMAT_VERSION:
        raise CheckpointError(
            f"{path}: unsupported format_version {version!r}, "
            f"expected {FORMAT_VERSION}")
    enc_cfg = EncoderConfig(**header["enc_cfg"])
    dec_cfg = DecoderConfig(**header["dec_cfg"])
    vocab = Vocab(header["vocab"])
    expected = sum(int(np.prod(t["shape"])) for t in header["tensors"]) * 8
    if len(blob) != expected:
        raise CheckpointError(
            f"{path}: payload has {len(blob)} bytes, expected {expected} "
            "(truncated or corrupt)")
    model = init_model(vocab, enc_cfg, dec_cfg, seed=0)
    declared_names = [t["name"] for t in header["tensors"]]
    walk_names = {name: t.shape for name, t in model.named_tensors()}
    if set(declared_names) != set(walk_names):
        missing = sorted(set(walk_names) - set(declared_names))[:3]
        extra = sorted(set(declared_names) - set(walk_names))[:3]
        raise CheckpointError(
            f"{path}: tensor names disagree (missing {missing}, extra {extra})")
    offset = 0
    for entry in header["tensors"]:
        name, shape = entry["name"], tuple(entry["shape"])
        if walk_names[name] != shape:
            raise CheckpointError(
                f"{path}: tensor {name} has shape {shape}, "
                f"expected {walk_names[name]}")
        count = int(np.prod(shape))
        arr = np.frombuffer(blob, dtype="<f8", count=count,
                            offset=offset).reshape(shape)
        offset += count * 8
        model.set_named(name, Tensor(arr.astype(np.float64)))
    return model


@dataclass
class DocumentAnalysis:
    encoded: EncodedDocument
    matrix: InteractionMatrix
    masked_q: Tensor
    centrality: Tensor  # s x 1, post-mask when control given
    control: Optional[ControlSpec]


def analyze_document(model: ModelParams, doc: Document,
                     control: Optional[ControlSpec] = None,
                     train_mode: bool = False,
                     rng: Optional[np.random.Generator] = None) -> DocumentAnalysis:
    encoded = encode(doc, model.encoder, model.enc_cfg, model.vocab,
                     train_mode=train_mode, rng=rng)
    matrix = build_matrix(encoded.sentence_reprs, encoded.doc_vector,
                          model.interaction)
    if control is not None:
        masked_q = apply_mask(matrix, control_mask(matrix, control))
    else:
        masked_q = matrix.q
    c = centrality(masked_q, model.interaction.w_centrality)
    return DocumentAnalysis(encoded=encoded, matrix=matrix, masked_q=masked_q,
                            centrality=c, control=control)


def heatmap_payload(model: ModelParams, doc: Document,
                    control: Optional[ControlSpec] = None) -> dict:
    """Heatmap JSON plus post-mask centrality and sentence texts."""
    analysis = analyze_document(model, doc, control)
    payload = export_heatmap(analysis.matrix, masked_q=analysis.masked_q)
    payload["centrality"] = analysis.centrality.values.tolist()
    payload["sentences"] = [detokenize(s) for s in doc.sentences]
    return payload


def summarize_extract(model: ModelParams, doc: Document, k: int = DEFAULT_TOP_K,
                      control: Optional[ControlSpec] = None,
                      trigram_block: bool = False) -> dict:
    analysis = analyze_document(model, doc, control)
    sel = select(analysis.centrality, k, doc.sentences,
                 trigram_block=trigram_block)
    return {
        "id": doc.id,
        "indices": sel.indices,
        "sentences": [detokenize(doc.sentences[i]) for i in sel.indices],
        "scores": sel.scores,
    }


def summarize_abstract(model: ModelParams, doc: Document, k: int = DEFAULT_TOP_K,
                       control: Optional[ControlSpec] = None, beam: int = 4,
                       max_len: int = 120, length_penalty: float = 1.0,
                       trigram_block: bool = True,
                       with_steps: bool = False) -> dict:
    analysis = analyze_document(model, doc, control)
    sel = select(analysis.centrality, k, doc.sentences)
    ctx = make_decode_context(analysis.encoded, analysis.centrality, sel,
                              doc.source_tokens(), model.vocab)
    tokens, stats = beam_search(ctx, model.decoder, model.encoder.embed,
                                model.enc_cfg, model.dec_cfg, model.vocab,
                                beam=beam, max_len=max_len,
                                length_penalty=length_penalty,
                                trigram_block=trigram_block)
    result = {
        "id": doc.id,
        "summary": detokenize(tokens),
        "p_gen_mean": stats["p_gen_mean"],
    }
    if with_steps:
        result["steps"] = {"score": stats["score"], "length": len(tokens)}
    return result


class _Optimizer:
    def __init__(self, model: ModelParams, cfg: TrainConfig):
        self.model = model
        self.lr = cfg.lr
        self.kind = cfg.optimizer
        # Adagrad accumulators start at 0.1, the pointer-generator convention.
        self.accum = {name: np.full(t.shape, 0.1)
                      for name, t in model.named_tensors()}

    def step(self, grads: dict[str, np.ndarray]) -> None:
        for name, t in list(self.model.named_tensors()):
            g = grads.get(name)
            if g is None:
                continue
            if self.kind == "adagrad":
                acc = self.accum[name] + g * g
                self.accum[name] = acc
                update = self.lr * g / np.sqrt(acc)
            else:
                update = self.lr * g
            self.model.set_named(name, Tensor(t.data - update))


def _clip_gradients(grads: dict[str, np.ndarray], clip: float) -> dict[str, np.ndarray]:
    if clip <= 0:
        return grads
    total = math.sqrt(sum(float((g * g).sum()) for g in grads.values()))
    if total <= clip or total == 0.0:
        return grads
    factor = clip / total
    return {name: g * factor for name, g in grads.items()}


def _document_loss(model: ModelParams, doc: Document, labels: ExtractLabels,
                   cfg: TrainConfig, rng: np.random.Generator) -> Tensor:
    analysis = analyze_document(model, doc, train_mode=True, rng=rng)
    if cfg.ranking == "pairwise":
        l_ext = pairwise_loss(analysis.centrality, labels.pairs)
    else:
        l_ext = pointwise_loss(analysis.centrality, labels.selected)
    if cfg.extractor_only:
        return l_ext
    sel = select(analysis.centrality, cfg.top_k, doc.sentences)
    ctx = make_decode_context(analysis.encoded, analysis.centrality, sel,
                              doc.source_tokens(), model.vocab)
    l_abs, _ = sequence_nll(doc.reference_tokens(), ctx, model.decoder,
                            model.encoder.embed, model.enc_cfg, model.dec_cfg,
                            model.vocab, train_mode=True, rng=rng)
    return joint_loss(l_ext, l_abs)


def train_model(docs: Sequence[Document], labels: dict[str, ExtractLabels],
                model: ModelParams, cfg: TrainConfig,
                val_docs: Optional[Sequence[Document]] = None,
                log=None) -> ModelParams:
    """Minibatch joint training over pre-labeled documents, in place."""
    usable = [d for d in docs if d.id in labels and d.num_sentences > 0]
    if not usable:
        raise TrainingError("no labeled documents to train on")
    opt = _Optimizer(model, cfg)
    rng = np.random.default_rng(cfg.seed)
    order: list[int] = []
    best_val = -math.inf
    patience_left = cfg.early_stop_patience
    names = [name for name, _ in model.named_tensors()]
    for step in range(cfg.max_steps):
        batch = []
        for _ in range(min(cfg.batch_size, len(usable))):
            if not order:
                order = list(rng.permutation(len(usable)))
            batch.append(usable[order.pop(0)])
        batch_ids = [d.id for d in batch]
        try:
            with Graph() as g:
                tensors = {name: t for name, t in model.named_tensors()}
                g.watch(*tensors.values())
                total = None
                for doc in batch:
                    doc_loss = _document_loss(model, doc, labels[doc.id], cfg,
                                              rng)
                    total = doc_loss if total is None else add(total, doc_loss)
                loss = scale(total, 1.0 / len(batch))
        except ContractViolation as exc:
            raise TrainingError(
                f"aborted at step {step} on batch {batch_ids}: {exc}") from exc
        loss_val = loss.item()
        if not math.isfinite(loss_val):
            raise TrainingError(
                f"non-finite loss at step {step} on batch {batch_ids}")
        grad_map = backward(g, loss)
        grads = {name: grad_map[t].data for name, t in tensors.items()}
        grads = _clip_gradients(grads, cfg.grad_clip)
        opt.step(grads)
        if log is not None:
            log(step, loss_val)
        if (cfg.eval_every and val_docs is not None
                and (step + 1) % cfg.eval_every == 0):
            report = evaluate_model(model, val_docs, mode="extract",
                                    k=cfg.top_k)
            score = report["rl"]["f1"]
            if score > best_val:
                best_val = score
                patience_left = cfg.early_stop_patience
            elif cfg.early_stop_patience:
                patience_left -= 1
                if patience_left <= 0:
                    break
    return model


def train(corpus_path, cfg: TrainConfig,
          enc_cfg: Optional[EncoderConfig] = None,
          dec_cfg: Optional[DecoderConfig] = None,
          val_path=None, labels_path=None, out_path="model.ckpt",
          log=None) -> Path:
    """Label, build the vocabulary, train, and write a checkpoint."""
    enc_cfg = enc_cfg or EncoderConfig()
    dec_cfg = dec_cfg or DecoderConfig()
    docs = [d for d in load_corpus(corpus_path)
            if d.reference and d.num_sentences > 0]
    if not docs:
        raise TrainingError(f"{corpus_path}: no documents with references")
    labels = label_corpus(docs, cache_path=labels_path)
    vocab = build_vocab(docs, min_freq=cfg.min_freq)
    model = init_model(vocab, enc_cfg, dec_cfg, cfg.seed)
    val_docs = None
    if val_path is not None:
        val_docs = [d for d in load_corpus(val_path) if d.reference]
    if cfg.max_steps > 0:
        train_model(docs, labels, model, cfg, val_docs=val_docs, log=log)
    return save_checkpoint(model, out_path)


def _zero_scores() -> dict:
    return {"recall": 0.0, "precision": 0.0, "f1": 0.0}


def evaluate_model(model: ModelParams, docs: Sequence[Document],
                   mode: str = "extract", k: int = DEFAULT_TOP_K,
                   control: Optional[ControlSpec] = None, beam: int = 4,
                   max_len: int = 120, trigram_block: bool = True) -> dict:
    """Mean ROUGE-1/2/L over documents with references."""
    if mode not in ("extract", "abstract"):
        raise ValueError(f"mode must be extract|abstract, got {mode!r}")
    scored = 0
    sums = {m: _zero_scores() for m in ("r1", "r2", "rl")}
    for doc in docs:
        if not doc.reference or doc.num_sentences == 0:
            continue
        if mode == "extract":
            result = summarize_extract(model, doc, k=k, control=control)
            picked = sorted(result["indices"])
            candidate = [tok for i in picked for tok in doc.sentences[i]]
        else:
            result = summarize_abstract(model, doc, k=k, control=control,
                                        beam=beam, max_len=max_len,
                                        trigram_block=trigram_block)
            candidate = result["summary"].split()
        reference = doc.reference_tokens()
        for key, score in (("r1", rouge_n(candidate, reference, 1)),
                           ("r2", rouge_n(candidate, reference, 2)),
                           ("rl", rouge_l(candidate, reference))):
            sums[key]["recall"] += score.recall
            sums[key]["precision"] += score.precision
            sums[key]["f1"] += score.f1
        scored += 1
    if scored == 0:
        return {"count": 0, "mode": mode,
                "r1": _zero_scores(), "r2": _zero_scores(), "rl": _zero_scores()}
    for key in sums:
        for part in sums[key]:
            sums[key][part] /= scored
    return {"count": scored, "mode": mode, **sums}


def evaluate(corpus_path, checkpoint_path, mode: str = "extract",
             k: int = DEFAULT_TOP_K, control: Optional[ControlSpec] = None,
             beam: int = 4, max_len: int = 120) -> dict:
    model = load_checkpoint(checkpoint_path)
    docs = load_corpus(corpus_path)
    return evaluate_model(model, docs, mode=mode, k=k, control=control,
                          beam=beam, max_len=max_len)
