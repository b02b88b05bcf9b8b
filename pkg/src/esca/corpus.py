"""Document ingestion, tokenization, vocabulary, and extractive labels.

Corpus files are JSON Lines, one object per line:
    {"id": str, "title": str?, "text": str, "summary": str}
Label caches are JSON Lines:
    {"id": str, "selected": [int], "pairs": [[i, j, p]]}
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

from .rouge import rouge_l

S_MAX = 50
T_MAX_DEFAULT = 400

PAD, UNK, BOS, EOS = 0, 1, 2, 3
RESERVED = ("<pad>", "<unk>", "<bos>", "<eos>")

_SENT_BOUNDARY = re.compile(r"[.?!]+(?:\s+|$)")
_TOKEN = re.compile(r"[a-z0-9']+")


class LabelingError(ValueError):
    """Oracle labeling was requested for a document it cannot label."""


def split_and_tokenize(raw_text: str) -> list[list[str]]:
    """Split on ./?/! followed by whitespace; lowercase alphanumeric tokens."""
    sentences = []
    for chunk in _SENT_BOUNDARY.split(raw_text):
        tokens = _TOKEN.findall(chunk.lower())
        if tokens:
            sentences.append(tokens)
    return sentences


def detokenize(tokens: Iterable[str]) -> str:
    return " ".join(tokens)


@dataclass
class Document:
    id: str
    sentences: list[list[str]]
    title: Optional[list[str]] = None
    reference: list[list[str]] = field(default_factory=list)

    @classmethod
    def from_raw(cls, doc_id: str, text: str, title: Optional[str] = None,
                 summary: Optional[str] = None, s_max: int = S_MAX,
                 t_max: int = T_MAX_DEFAULT) -> "Document":
        sentences = _truncate(split_and_tokenize(text), s_max, t_max)
        title_tokens = None
        if title:
            flat = [tok for sent in split_and_tokenize(title) for tok in sent]
            title_tokens = flat or None
        reference = split_and_tokenize(summary) if summary else []
        return cls(id=doc_id, sentences=sentences, title=title_tokens,
                   reference=reference)

    @property
    def num_sentences(self) -> int:
        return len(self.sentences)

    def source_tokens(self) -> list[str]:
        return [tok for sent in self.sentences for tok in sent]

    def sentence_map(self) -> list[int]:
        """Sentence index of each source token position."""
        out = []
        for i, sent in enumerate(self.sentences):
            out.extend([i] * len(sent))
        return out

    def reference_tokens(self) -> list[str]:
        return [tok for sent in self.reference for tok in sent]


def _truncate(sentences: list[list[str]], s_max: int, t_max: int) -> list[list[str]]:
    kept = []
    budget = t_max
    for sent in sentences[:s_max]:
        if budget <= 0:
            break
        if len(sent) > budget:
            sent = sent[:budget]
        kept.append(sent)
        budget -= len(sent)
    return kept


class Vocab:
    """Token/id mappings with reserved ids 0..3 (pad, unk, bos, eos)."""

    def __init__(self, tokens: list[str]):
        self._id_to_token = list(RESERVED) + list(tokens)
        self._token_to_id = {t: i for i, t in enumerate(self._id_to_token)}
        if len(self._token_to_id) != len(self._id_to_token):
            raise ValueError("duplicate tokens in vocabulary")

    def __len__(self) -> int:
        return len(self._id_to_token)

    def __contains__(self, token: str) -> bool:
        return token in self._token_to_id

    def id_of(self, token: str) -> int:
        return self._token_to_id.get(token, UNK)

    def token_of(self, idx: int) -> str:
        return self._id_to_token[idx]

    def encode(self, tokens: Iterable[str]) -> list[int]:
        return [self.id_of(t) for t in tokens]

    def decode(self, ids: Iterable[int]) -> list[str]:
        return [self.token_of(i) for i in ids]

    @property
    def tokens(self) -> list[str]:
        """Non-reserved tokens in id order (for persistence)."""
        return self._id_to_token[len(RESERVED):]


def build_vocab(corpus: Iterable[Document], min_freq: int = 1) -> Vocab:
    """Frequency-ordered vocabulary; ties broken lexicographically."""
    if min_freq < 1:
        raise ValueError(f"min_freq must be >= 1, got {min_freq}")
    counts: dict[str, int] = {}
    for doc in corpus:
        streams = list(doc.sentences) + list(doc.reference)
        if doc.title:
            streams.append(doc.title)
        for sent in streams:
            for tok in sent:
                counts[tok] = counts.get(tok, 0) + 1
    kept = sorted(
        (t for t, c in counts.items() if c >= min_freq),
        key=lambda t: (-counts[t], t),
    )
    return Vocab(kept)


@dataclass
class ExtractLabels:
    doc_id: str
    selected: set[int]
    pairs: list[tuple[int, int, int]]  # (i, j, label), i < j, label = [i selected]


def _labeling_objective(candidate: list[str], reference: list[str]) -> float:
    # Unweighted mean of ROUGE-L recall and F1 against the whole reference.
    score = rouge_l(candidate, reference)
    return (score.recall + score.f1) / 2.0


def _differing_pairs(selected: set[int], n: int) -> list[tuple[int, int, int]]:
    pairs = []
    for i in range(n):
        for j in range(i + 1, n):
            if (i in selected) != (j in selected):
                pairs.append((i, j, 1 if i in selected else 0))
    return pairs


def oracle_label(doc: Document) -> ExtractLabels:
    """Greedy selection maximizing mean(ROUGE-L recall, F1) vs the reference.

    Adds one sentence per round (ties to the lower index) and stops when no
    remaining candidate strictly improves the objective.
    """
    if not doc.reference:
        raise LabelingError(f"document {doc.id!r} has no reference summary")
    reference = doc.reference_tokens()
    n = doc.num_sentences
    selected: set[int] = set()
    best = 0.0
    while True:
        best_gain_idx = None
        best_score = best
        for i in range(n):
            if i in selected:
                continue
            chosen = sorted(selected | {i})
            candidate = [tok for k in chosen for tok in doc.sentences[k]]
            score = _labeling_objective(candidate, reference)
            if score > best_score:
                best_score = score
                best_gain_idx = i
        if best_gain_idx is None:
            break
        selected.add(best_gain_idx)
        best = best_score
    return ExtractLabels(doc_id=doc.id, selected=selected,
                         pairs=_differing_pairs(selected, n))


def load_corpus(path, s_max: int = S_MAX, t_max: int = T_MAX_DEFAULT) -> list[Document]:
    docs = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{line_no}: invalid JSON ({exc})") from exc
            docs.append(Document.from_raw(
                doc_id=str(obj.get("id", f"doc-{line_no}")),
                text=obj.get("text", ""),
                title=obj.get("title"),
                summary=obj.get("summary"),
                s_max=s_max,
                t_max=t_max,
            ))
    return docs


def save_labels(labels: Iterable[ExtractLabels], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for lab in labels:
            fh.write(json.dumps({
                "id": lab.doc_id,
                "selected": sorted(lab.selected),
                "pairs": [[i, j, p] for i, j, p in lab.pairs],
            }) + "\n")


def load_labels(path) -> dict[str, ExtractLabels]:
    out: dict[str, ExtractLabels] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            lab = ExtractLabels(
                doc_id=str(obj["id"]),
                selected=set(int(i) for i in obj["selected"]),
                pairs=[(int(i), int(j), int(p)) for i, j, p in obj["pairs"]],
            )
            out[lab.doc_id] = lab
    return out


def label_corpus(docs: Iterable[Document], cache_path=None) -> dict[str, ExtractLabels]:
    """Label every document, reusing a cache file when it covers the corpus."""
    docs = list(docs)
    if cache_path is not None and Path(cache_path).exists():
        cached = load_labels(cache_path)
        if all(d.id in cached for d in docs):
            return {d.id: cached[d.id] for d in docs}
    labels = {d.id: oracle_label(d) for d in docs}
    if cache_path is not None:
        save_labels(labels.values(), cache_path)
    return labels
