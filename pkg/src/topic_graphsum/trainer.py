"""Two-phase training, inference and evaluation."""

from __future__ import annotations

import logging
import math
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import ntm
from .autodiff import AdamState, Tape, Tensor, adam_step, make_rng, no_grad
from .checkpoint import ModelCheckpoint
from .config import ModelConfig, TrainConfig, as_dict, build
from .errors import ContractError, DomainError, TrainingDivergedError
from .model import (
    bce_loss,
    document_topical_weights,
    forward,
    init_params,
    is_ntm_param,
    losses,
    select_summary,
)
from .rouge import RougeScore, flatten, mean_f1, rouge
from .text import LabeledDocument, Vocabulary, greedy_oracle_selection, tokenize

log = logging.getLogger(__name__)

StepCallback = Callable[[dict], None]


@dataclass
class Summarizer:
    """Trained parameters plus everything needed to run them."""

    params: dict[str, Tensor]
    model_config: ModelConfig
    vocab: Vocabulary
    train_config: TrainConfig = field(default_factory=TrainConfig)
    epoch: int = 0
    extra: dict = field(default_factory=dict)

    @classmethod
    def initialize(cls, vocab: Vocabulary, model_config: ModelConfig, train_config: TrainConfig) -> "Summarizer":
        rng = make_rng(train_config.seed)
        params = init_params(model_config, len(vocab), vocab.ntm_size, rng)
        return cls(params, model_config, vocab, train_config)

    # -- inference ---------------------------------------------------------

    def forward_batches(self, docs: Sequence[LabeledDocument], batch_size: int = 32):
        """Deterministic forward passes; yields (indices, ForwardOutput)."""
        with no_grad():
            for idx in deterministic_batches(docs, batch_size):
                yield idx, forward([docs[i] for i in idx], self.params, self.model_config, None)

    def predict(self, docs: Sequence[LabeledDocument], batch_size: int = 32) -> list[np.ndarray]:
        out: list[np.ndarray | None] = [None] * len(docs)
        for idx, fwd in self.forward_batches(docs, batch_size):
            for row, i in enumerate(idx):
                out[i] = np.array(fwd.y_hat.data[row])
        return out  # type: ignore[return-value]

    def summarize(self, docs: Sequence[LabeledDocument], k: int | None = None) -> list[list[int]]:
        k = k or self.train_config.select_k
        return [select_summary(y, k) for y in self.predict(docs)]

    def topical_weights(self, docs: Sequence[LabeledDocument], layer: int | None = None) -> list[np.ndarray]:
        layer = self.train_config.tw_layer if layer is None else layer
        out: list[np.ndarray | None] = [None] * len(docs)
        for idx, fwd in self.forward_batches(docs):
            for i, tw in zip(idx, document_topical_weights(fwd, self.model_config, layer)):
                out[i] = tw
        return out  # type: ignore[return-value]

    def top_words(self, k: int = 10) -> list[list[str]]:
        return ntm.top_words(self.params, self.vocab.ntm_tokens, min(k, self.vocab.ntm_size))

    # -- persistence -------------------------------------------------------

    def to_checkpoint(self) -> ModelCheckpoint:
        return ModelCheckpoint(
            params={k: np.array(v.data) for k, v in self.params.items()},
            model_config=as_dict(self.model_config),
            train_config=as_dict(self.train_config),
            vocab_hash=self.vocab.digest(),
            seed=self.train_config.seed,
            epoch=self.epoch,
            vocabulary=self.vocab.to_text(),
            extra=dict(self.extra),
        )

    @classmethod
    def from_checkpoint(cls, ckpt: ModelCheckpoint) -> "Summarizer":
        vocab = Vocabulary.from_text(ckpt.vocabulary)
        if vocab.digest() != ckpt.vocab_hash:
            raise ContractError("checkpoint vocabulary does not match its recorded hash")
        return cls(
            params={k: Tensor(v, requires_grad=True) for k, v in ckpt.params.items()},
            model_config=build(ModelConfig, ckpt.model_config),
            vocab=vocab,
            train_config=build(TrainConfig, ckpt.train_config),
            epoch=ckpt.epoch,
            extra=dict(ckpt.extra),
        )


# ---------------------------------------------------------------------------
# batching
# ---------------------------------------------------------------------------


def _buckets(docs: Sequence[LabeledDocument]) -> dict[int, list[int]]:
    buckets: dict[int, list[int]] = {}
    for i, d in enumerate(docs):
        buckets.setdefault(d.n_sentences, []).append(i)
    return buckets


def deterministic_batches(docs: Sequence[LabeledDocument], batch_size: int) -> list[list[int]]:
    out = []
    for _, idx in sorted(_buckets(docs).items()):
        out.extend(idx[i : i + batch_size] for i in range(0, len(idx), batch_size))
    return out


def shuffled_batches(docs: Sequence[LabeledDocument], batch_size: int, rng: np.random.Generator) -> list[list[int]]:
    """Batches of equal sentence count, shuffled within and across buckets."""
    out = []
    for _, idx in sorted(_buckets(docs).items()):
        idx = [idx[j] for j in rng.permutation(len(idx))]
        out.extend(idx[i : i + batch_size] for i in range(0, len(idx), batch_size))
    return [out[j] for j in rng.permutation(len(out))]


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------


@dataclass
class TrainResult:
    summarizer: Summarizer
    metrics: list[dict]
    pretrain_log: list[float]

    @property
    def checkpoint(self) -> ModelCheckpoint:
        return self.summarizer.to_checkpoint()


def _check_finite(value: Tensor, what: str, batch: Sequence[LabeledDocument]) -> None:
    if not np.all(np.isfinite(value.data)):
        ids = ", ".join(d.id for d in batch)
        raise TrainingDivergedError(f"non-finite {what} on batch [{ids}]")


@contextmanager
def _diverged_on(batch: Sequence[LabeledDocument]):
    """Report numerical domain failures inside a training step as divergence."""
    try:
        yield
    except DomainError as exc:
        ids = ", ".join(d.id for d in batch)
        raise TrainingDivergedError(f"{exc} on batch [{ids}]") from exc


def _usable_for_ntm(docs: Sequence[LabeledDocument]) -> list[LabeledDocument]:
    kept = [d for d in docs if d.bow.sum() > 0]
    if len(kept) < len(docs):
        log.warning("dropping %d documents with an empty bag of words", len(docs) - len(kept))
    return kept


def pretrain_ntm(
    model: Summarizer,
    docs: Sequence[LabeledDocument],
    epochs: int,
    lr: float,
    rng: np.random.Generator,
    callback: StepCallback | None = None,
) -> list[float]:
    """Optimize the topic-model loss alone; updates ``model.params`` in place."""
    names = [n for n in model.params if is_ntm_param(n)]
    state = AdamState.for_params({n: model.params[n] for n in names})
    K = model.model_config.n_topics
    bs = model.train_config.batch_size
    history = []
    for epoch in range(epochs):
        total, count = 0.0, 0
        order = rng.permutation(len(docs))
        for start in range(0, len(docs), bs):
            batch = [docs[j] for j in order[start : start + bs]]
            bow = np.stack([d.bow for d in batch])
            noise = rng.standard_normal((len(batch), K))
            sub = {n: model.params[n] for n in names}
            with Tape() as tape, _diverged_on(batch):
                state_t = ntm.forward(bow, sub, noise)
                loss = ntm.ntm_loss(bow, state_t)
                _check_finite(loss, "L_NTM", batch)
                grads = tape.backward(loss, [sub[n] for n in names])
            new, state = adam_step(sub, dict(zip(names, grads)), state, lr)
            model.params.update(new)
            total += loss.item() * len(batch)
            count += len(batch)
            if callback is not None:
                callback({"phase": "pretrain", "epoch": epoch + 1, "model": model, "batch": batch, "loss": loss.item()})
        history.append(total / count)
    return history


def evaluate(
    model: Summarizer, docs: Sequence[LabeledDocument], k: int | None = None
) -> dict[str, float]:
    """Mean ROUGE F1 of selected sentences against references, plus L_SC."""
    k = k or model.train_config.select_k
    scores: list[RougeScore] = []
    l_sc, n = 0.0, 0
    for idx, fwd in model.forward_batches(docs):
        for row, i in enumerate(idx):
            d = docs[i]
            chosen = select_summary(fwd.y_hat.data[row], k)
            scores.append(score_selection(d, chosen))
            if d.labels:
                l_sc += bce_loss(fwd.y_hat.data[row], d.labels).item()
                n += 1
    r1, r2, rl = mean_f1(scores)
    return {"rouge1": r1, "rouge2": r2, "rougeL": rl, "L_SC": l_sc / n if n else float("nan")}


def score_selection(doc: LabeledDocument, chosen: Sequence[int]) -> RougeScore:
    cand = flatten(tokenize(doc.sentences[i]) for i in sorted(chosen))
    ref = flatten(tokenize(s) for s in doc.summary)
    return rouge(cand, ref)


def baseline_scores(docs: Sequence[LabeledDocument], k: int, rng_seed: int = 0) -> dict[str, tuple[float, float, float]]:
    """Lead-k, uniform random k, and greedy oracle selections."""
    rng = make_rng(rng_seed)
    lead, rand, oracle = [], [], []
    for d in docs:
        n = d.n_sentences
        lead.append(score_selection(d, range(min(k, n))))
        rand.append(score_selection(d, sorted(rng.choice(n, size=min(k, n), replace=False))))
        oracle.append(score_selection(d, greedy_oracle_selection(d.to_raw(), k) if d.summary else []))
    return {"lead": mean_f1(lead), "random": mean_f1(rand), "oracle": mean_f1(oracle)}


def train(
    docs: Sequence[LabeledDocument],
    vocab: Vocabulary,
    model_config: ModelConfig | None = None,
    train_config: TrainConfig | None = None,
    val_docs: Sequence[LabeledDocument] | None = None,
    init: Summarizer | None = None,
    callback: StepCallback | None = None,
) -> TrainResult:
    """Pretrain the topic model, then optimize the joint loss end to end.

    With ``init`` carrying ``extra["ntm_pretrained"]`` the first phase is
    skipped. The ``no_ntm`` ablation never pretrains and drops the topic
    loss. With validation documents, training stops early on validation
    L_SC and the best parameters are kept.
    """
    model_config = model_config or ModelConfig()
    tcfg = train_config or TrainConfig()
    if not docs:
        raise ContractError("train: empty corpus")
    for d in docs:
        if not d.labels or len(d.labels) != d.n_sentences:
            raise ContractError(f"train: document {d.id!r} has no oracle labels")
    uses_ntm = model_config.ablation != "no_ntm"
    if uses_ntm:
        docs = _usable_for_ntm(docs)
        if val_docs is not None:
            val_docs = _usable_for_ntm(val_docs)
        if not docs:
            raise ContractError("train: no document has a nonempty bag of words")

    if init is not None:
        model = Summarizer(dict(init.params), model_config, vocab, tcfg, extra=dict(init.extra))
    else:
        model = Summarizer.initialize(vocab, model_config, tcfg)
    # parameter init consumes the generator seeded with `seed`; training draws from the next one
    rng = make_rng(tcfg.seed + 1)

    pretrain_log: list[float] = []
    if uses_ntm and not model.extra.get("ntm_pretrained") and tcfg.ntm_pretrain_epochs > 0:
        pretrain_log = pretrain_ntm(model, docs, tcfg.ntm_pretrain_epochs, tcfg.lr_pretrain, rng, callback)
        model.extra["ntm_pretrained"] = True

    names = list(model.params)
    lrs = {n: (tcfg.lr_ntm_joint if is_ntm_param(n) else tcfg.lr_other) for n in names}
    state = AdamState.for_params(model.params)
    K = model_config.n_topics
    metrics: list[dict] = []
    best = (math.inf, None, 0)
    stale = 0
    for epoch in range(1, tcfg.epochs + 1):
        sums = {"L": 0.0, "L_SC": 0.0, "L_NTM": 0.0}
        n_batches = 0
        correct = total = 0
        for idx in shuffled_batches(docs, tcfg.batch_size, rng):
            batch = [docs[i] for i in idx]
            noise = rng.standard_normal((len(batch), K)) if uses_ntm else None
            with Tape() as tape, _diverged_on(batch):
                out = forward(batch, model.params, model_config, noise)
                loss, l_sc, l_ntm = losses(out, batch, model_config, tcfg.lam)
                _check_finite(loss, "loss", batch)
                grads = tape.backward(loss, [model.params[n] for n in names])
            model.params, state = adam_step(model.params, dict(zip(names, grads)), state, lrs)
            sums["L"] += loss.item()
            sums["L_SC"] += l_sc.item()
            sums["L_NTM"] += l_ntm.item() if l_ntm is not None else 0.0
            n_batches += 1
            y = np.array([d.labels for d in batch])
            correct += int(np.sum((out.y_hat.data > 0.5) == (y > 0.5)))
            total += y.size
            if callback is not None:
                callback({"phase": "joint", "epoch": epoch, "model": model, "batch": batch, "output": out, "loss": loss.item()})
        entry = {
            "epoch": epoch,
            "L_SC": sums["L_SC"] / n_batches,
            "L_NTM": sums["L_NTM"] / n_batches if uses_ntm else None,
            "L": sums["L"] / n_batches,
            "val_rouge1": None,
            "val_rouge2": None,
            "val_rougeL": None,
            "val_L_SC": None,
            "accuracy": correct / total,
        }
        model.epoch = epoch
        if val_docs:
            ev = evaluate(model, val_docs)
            entry.update(val_rouge1=ev["rouge1"], val_rouge2=ev["rouge2"], val_rougeL=ev["rougeL"], val_L_SC=ev["L_SC"])
            if ev["L_SC"] < best[0]:
                best, stale = (ev["L_SC"], dict(model.params), epoch), 0
            else:
                stale += 1
        metrics.append(entry)
        log.info("epoch %d: L=%.4f L_SC=%.4f acc=%.3f", epoch, entry["L"], entry["L_SC"], entry["accuracy"])
        if val_docs and stale >= tcfg.patience:
            log.info("early stop at epoch %d (best %d)", epoch, best[2])
            break
    if val_docs and best[1] is not None:
        model.params = best[1]
        model.epoch = best[2]
    return TrainResult(model, metrics, pretrain_log)
