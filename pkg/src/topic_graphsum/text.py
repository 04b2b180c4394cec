"""Corpus ingestion: tokenization, vocabulary, bag-of-words and oracle labels."""

from __future__ import annotations

import hashlib
import itertools
import json
import logging
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import ContractError, EmptyVocabularyError, TopicGraphSumError
from .rouge import rouge_n

log = logging.getLogger(__name__)

PAD, UNK, CLS, SEP = "[PAD]", "[UNK]", "[CLS]", "[SEP]"
SPECIALS = (PAD, UNK, CLS, SEP)
DEFAULT_MAX_SENTENCES = 128
# document-frequency pruning is meaningless on a handful of documents
MIN_DOCS_FOR_DF_FILTER = 10

STOPWORDS = frozenset(
    """
    a about above after again against all am an and any are as at be because been
    before being below between both but by can could did do does doing down during
    each few for from further had has have having he her here hers herself him
    himself his how i if in into is it its itself just me more most my myself no
    nor not now of off on once only or other our ours ourselves out over own same
    she should so some such than that the their theirs them themselves then there
    these they this those through to too under until up very was we were what when
    where which while who whom why will with would you your yours yourself
    yourselves s t don ll m o re ve y
    """.split()
)

_TOKEN_RE = re.compile(r"\w+|[^\w\s]", re.UNICODE)


class CorpusFormatError(TopicGraphSumError, ValueError):
    def __init__(self, line_no: int, reason: str):
        self.line_no = line_no
        super().__init__(f"line {line_no}: {reason}")


def tokenize(text: str) -> list[str]:
    """Lowercase and split into word runs and single punctuation marks."""
    return _TOKEN_RE.findall(text.lower())


@dataclass(frozen=True)
class RawDocument:
    id: str
    sentences: tuple[str, ...]
    reference_summary: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "sentences", tuple(self.sentences))
        object.__setattr__(self, "reference_summary", tuple(self.reference_summary))
        if not self.sentences:
            raise ContractError(f"document {self.id!r} has no sentences")
        for i, s in enumerate(self.sentences):
            if not isinstance(s, str) or not s.strip():
                raise ContractError(f"document {self.id!r}: sentence {i} is empty")

    def to_json(self) -> dict:
        return {"id": self.id, "sentences": list(self.sentences), "summary": list(self.reference_summary)}

    @classmethod
    def from_json(cls, obj: dict) -> "RawDocument":
        return cls(str(obj["id"]), obj["sentences"], obj.get("summary", []))


class Vocabulary:
    """Bijective token/index map with a per-index bag-of-words mask.

    Special tokens always occupy indices 0-3 and are never counted in the
    topic model's bag of words.
    """

    def __init__(self, tokens: Sequence[str], ntm_mask: Sequence[bool]):
        if len(tokens) != len(ntm_mask):
            raise ContractError("vocabulary: tokens and mask differ in length")
        if tuple(tokens[: len(SPECIALS)]) != SPECIALS:
            raise ContractError("vocabulary: special tokens must lead the index")
        if len(set(tokens)) != len(tokens):
            raise ContractError("vocabulary: duplicate tokens")
        self.itos: list[str] = list(tokens)
        self.stoi: dict[str, int] = {t: i for i, t in enumerate(self.itos)}
        self.ntm_mask = np.array(ntm_mask, dtype=bool)
        self.ntm_mask[: len(SPECIALS)] = False
        self.ntm_indices = np.flatnonzero(self.ntm_mask)
        self._ntm_pos = np.full(len(self.itos), -1, dtype=np.intp)
        self._ntm_pos[self.ntm_indices] = np.arange(self.ntm_indices.size)

    pad_id = 0
    unk_id = 1
    cls_id = 2
    sep_id = 3

    def __len__(self) -> int:
        return len(self.itos)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Vocabulary)
            and self.itos == other.itos
            and np.array_equal(self.ntm_mask, other.ntm_mask)
        )

    @property
    def ntm_size(self) -> int:
        return int(self.ntm_indices.size)

    @property
    def ntm_tokens(self) -> list[str]:
        return [self.itos[i] for i in self.ntm_indices]

    def encode(self, tokens: Iterable[str]) -> list[int]:
        return [self.stoi.get(t, self.unk_id) for t in tokens]

    def bow(self, token_ids: Iterable[int]) -> np.ndarray:
        """Counts over the masked vocabulary."""
        counts = np.zeros(self.ntm_size)
        ids = np.fromiter(token_ids, dtype=np.intp)
        if ids.size:
            pos = self._ntm_pos[ids]
            np.add.at(counts, pos[pos >= 0], 1.0)
        return counts

    def to_text(self) -> str:
        mask = "".join("1" if m else "0" for m in self.ntm_mask)
        header = f"#vocab specials={','.join(SPECIALS)} size={len(self)} ntm_mask={mask}"
        return "\n".join([header, *self.itos]) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "Vocabulary":
        lines = text.split("\n")
        if lines and lines[-1] == "":
            lines = lines[:-1]
        if not lines or not lines[0].startswith("#vocab "):
            raise ContractError("vocabulary file: missing header line")
        fields = dict(part.split("=", 1) for part in lines[0][len("#vocab ") :].split())
        tokens = lines[1:]
        mask = [c == "1" for c in fields.get("ntm_mask", "")]
        if int(fields.get("size", -1)) != len(tokens) or len(mask) != len(tokens):
            raise ContractError("vocabulary file: header does not match token lines")
        if tuple(fields.get("specials", "").split(",")) != SPECIALS:
            raise ContractError("vocabulary file: unexpected special tokens")
        return cls(tokens, mask)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_text(), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        return cls.from_text(Path(path).read_text(encoding="utf-8"))

    def digest(self) -> str:
        return hashlib.sha256(self.to_text().encode("utf-8")).hexdigest()


def build_vocabulary(
    corpus: Sequence[RawDocument],
    min_freq: int = 1,
    stopwords: Iterable[str] = STOPWORDS,
    max_df: float = 0.5,
) -> Vocabulary:
    """Frequency-thresholded vocabulary over document sentences.

    Order is by descending frequency, ties alphabetical, so repeated builds
    agree. Stopwords stay in the encoder vocabulary but are masked out of
    the bag of words, as are tokens whose document frequency exceeds
    ``max_df`` (only applied once the corpus has enough documents).
    """
    if not corpus:
        raise ContractError("build_vocabulary: empty corpus")
    stop = set(stopwords)
    freq: Counter = Counter()
    df: Counter = Counter()
    for doc in corpus:
        seen = set()
        for sent in doc.sentences:
            toks = tokenize(sent)
            freq.update(toks)
            seen.update(toks)
        df.update(seen)
    kept = sorted((t for t, c in freq.items() if c >= min_freq and t not in SPECIALS), key=lambda t: (-freq[t], t))
    if not kept:
        raise EmptyVocabularyError(f"build_vocabulary: no token reaches min_freq={min_freq}")
    n_docs = len(corpus)
    use_df = n_docs >= MIN_DOCS_FOR_DF_FILTER
    mask = [False] * len(SPECIALS) + [
        t not in stop and t.isalnum() and not (use_df and df[t] > max_df * n_docs) for t in kept
    ]
    return Vocabulary(list(SPECIALS) + kept, mask)


@dataclass(eq=False)
class LabeledDocument:
    """A document encoded for training: token ids, bag of words and labels."""

    id: str
    sentences: list[str]
    summary: list[str]
    token_ids: list[list[int]]
    bow: np.ndarray
    labels: list[int] = field(default_factory=list)

    def __post_init__(self):
        self.bow = np.asarray(self.bow, dtype=np.float64)
        if self.labels and len(self.labels) != len(self.token_ids):
            raise ContractError(f"document {self.id!r}: {len(self.labels)} labels for {len(self.token_ids)} sentences")

    @property
    def n_sentences(self) -> int:
        return len(self.token_ids)

    @property
    def sentence_lengths(self) -> list[int]:
        return [len(s) for s in self.token_ids]

    def padded_tokens(self, pad_id: int = Vocabulary.pad_id) -> np.ndarray:
        width = max(1, max(self.sentence_lengths))
        out = np.full((self.n_sentences, width), pad_id, dtype=np.int64)
        for i, ids in enumerate(self.token_ids):
            out[i, : len(ids)] = ids
        return out

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, LabeledDocument)
            and self.id == other.id
            and self.sentences == other.sentences
            and self.summary == other.summary
            and self.token_ids == other.token_ids
            and self.labels == other.labels
            and np.array_equal(self.bow, other.bow)
        )

    def to_json(self) -> dict:
        nz = np.flatnonzero(self.bow)
        return {
            "id": self.id,
            "sentences": self.sentences,
            "summary": self.summary,
            "labels": self.labels,
            "token_ids": self.token_ids,
            "bow_size": int(self.bow.size),
            "bow": {str(int(i)): float(self.bow[i]) for i in nz},
        }

    @classmethod
    def from_json(cls, obj: dict) -> "LabeledDocument":
        bow = np.zeros(int(obj["bow_size"]))
        for k, v in obj["bow"].items():
            bow[int(k)] = v
        return cls(
            id=str(obj["id"]),
            sentences=list(obj["sentences"]),
            summary=list(obj.get("summary", [])),
            token_ids=[list(map(int, s)) for s in obj["token_ids"]],
            bow=bow,
            labels=list(map(int, obj.get("labels", []))),
        )

    def to_raw(self) -> RawDocument:
        return RawDocument(self.id, self.sentences, self.summary)


# ---------------------------------------------------------------------------
# oracle labels
# ---------------------------------------------------------------------------


def selection_score(sent_tokens: Sequence[Sequence[str]], selected: Iterable[int], reference: Sequence[str]) -> float:
    """Mean of ROUGE-1 and ROUGE-2 F1 of the selected sentences (document order)."""
    cand = [tok for i in sorted(selected) for tok in sent_tokens[i]]
    return 0.5 * (rouge_n(cand, reference, 1).f1 + rouge_n(cand, reference, 2).f1)


def greedy_oracle_selection(doc: RawDocument, max_select: int) -> list[int]:
    """Greedy sentence indices maximizing :func:`selection_score`; may be empty."""
    if not doc.reference_summary:
        raise ContractError(f"greedy_oracle_labels: document {doc.id!r} has no reference summary")
    sents = [tokenize(s) for s in doc.sentences]
    ref = [t for s in doc.reference_summary for t in tokenize(s)]
    selected: list[int] = []
    best = 0.0
    while len(selected) < max_select:
        pick, pick_score = -1, best
        for i in range(len(sents)):
            if i in selected:
                continue
            score = selection_score(sents, [*selected, i], ref)
            if score > pick_score:
                pick, pick_score = i, score
        if pick < 0:
            break
        selected.append(pick)
        best = pick_score
    return sorted(selected)


def greedy_oracle_labels(doc: RawDocument, max_select: int = 3) -> list[int]:
    """Binary labels from greedy selection; sentence 0 is positive if nothing helps."""
    chosen = greedy_oracle_selection(doc, max_select)
    if not chosen:
        chosen = [0]
    labels = [0] * len(doc.sentences)
    for i in chosen:
        labels[i] = 1
    return labels


def brute_force_best_score(doc: RawDocument, max_select: int) -> tuple[float, tuple[int, ...]]:
    """Exhaustive search over nonempty subsets of size <= max_select."""
    sents = [tokenize(s) for s in doc.sentences]
    ref = [t for s in doc.reference_summary for t in tokenize(s)]
    best, best_set = 0.0, ()
    for size in range(1, max_select + 1):
        for subset in itertools.combinations(range(len(sents)), size):
            score = selection_score(sents, subset, ref)
            if score > best:
                best, best_set = score, subset
    return best, best_set


# ---------------------------------------------------------------------------
# encoding and files
# ---------------------------------------------------------------------------


def truncate(doc: RawDocument, max_sentences: int = DEFAULT_MAX_SENTENCES) -> RawDocument:
    if len(doc.sentences) <= max_sentences:
        return doc
    log.warning("document %s: truncating %d sentences to %d", doc.id, len(doc.sentences), max_sentences)
    return RawDocument(doc.id, doc.sentences[:max_sentences], doc.reference_summary)


def label_document(
    doc: RawDocument,
    vocab: Vocabulary,
    max_select: int = 3,
    max_sentences: int = DEFAULT_MAX_SENTENCES,
    labels: Sequence[int] | None = None,
) -> LabeledDocument:
    """Encode a raw document; oracle labels are computed when a reference exists."""
    doc = truncate(doc, max_sentences)
    token_ids = [vocab.encode(tokenize(s)) for s in doc.sentences]
    if labels is None:
        labels = greedy_oracle_labels(doc, max_select) if doc.reference_summary else []
    bow = vocab.bow(i for ids in token_ids for i in ids)
    return LabeledDocument(
        id=doc.id,
        sentences=list(doc.sentences),
        summary=list(doc.reference_summary),
        token_ids=token_ids,
        bow=bow,
        labels=list(labels),
    )


def iter_jsonl(path: str | Path, skip_bad: bool = False) -> Iterator[tuple[int, dict]]:
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                if not isinstance(obj, dict):
                    raise ValueError("not a JSON object")
            except ValueError as exc:
                if skip_bad:
                    log.warning("skipping line %d: %s", line_no, exc)
                    continue
                raise CorpusFormatError(line_no, str(exc)) from None
            yield line_no, obj


def read_raw_corpus(path: str | Path, skip_bad: bool = False) -> list[RawDocument]:
    docs = []
    for line_no, obj in iter_jsonl(path, skip_bad):
        try:
            if not isinstance(obj.get("sentences"), list) or "id" not in obj:
                raise ContractError("expected keys 'id' and 'sentences'")
            docs.append(RawDocument.from_json(obj))
        except (ContractError, TypeError) as exc:
            if skip_bad:
                log.warning("skipping line %d: %s", line_no, exc)
                continue
            raise CorpusFormatError(line_no, str(exc)) from None
    return docs


def write_raw_corpus(docs: Iterable[RawDocument], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for d in docs:
            fh.write(json.dumps(d.to_json(), ensure_ascii=False) + "\n")


def read_labeled_corpus(path: str | Path) -> list[LabeledDocument]:
    docs = []
    for line_no, obj in iter_jsonl(path):
        try:
            docs.append(LabeledDocument.from_json(obj))
        except (KeyError, TypeError, ValueError) as exc:
            raise CorpusFormatError(line_no, f"not a labeled document: {exc}") from None
    return docs


def write_labeled_corpus(docs: Iterable[LabeledDocument], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for d in docs:
            fh.write(json.dumps(d.to_json(), ensure_ascii=False) + "\n")


def corpus_statistics(docs: Sequence[RawDocument]) -> dict:
    n = len(docs)
    doc_tokens = [sum(len(tokenize(s)) for s in d.sentences) for d in docs]
    sum_tokens = [sum(len(tokenize(s)) for s in d.reference_summary) for d in docs]
    return {
        "docs": n,
        "avg_doc_tokens": float(np.mean(doc_tokens)) if n else 0.0,
        "avg_summary_tokens": float(np.mean(sum_tokens)) if n else 0.0,
        "avg_sentences": float(np.mean([len(d.sentences) for d in docs])) if n else 0.0,
    }
