"""The summarizer: encoder + topic model + graph attention + sentence classifier."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from . import ntm
from .autodiff import (
    Tensor,
    add,
    as_tensor,
    clip_min,
    getitem,
    log,
    matmul,
    mean,
    mul,
    reduce_sum,
    reshape,
    sigmoid,
    sub,
)
from .config import ModelConfig
from .encoder import EncoderConfig, encode_batch, init_encoder_params
from .errors import ContractError, ShapeError, UnsupportedOperationError
from .graph import GatConfig, GatOutput, build_graph, init_gat_params, run_gat, run_sentence_gat
from .layers import glorot, linear, zeros
from .text import LabeledDocument

log_ = logging.getLogger(__name__)

BCE_CLAMP = 1e-10
Params = Mapping[str, Tensor]
NTM_PREFIX = "ntm."


def gat_config(cfg: ModelConfig) -> GatConfig:
    return GatConfig(
        d_node=cfg.d_node,
        d_attn=cfg.d_attn,
        n_layers=cfg.gat_layers,
        heads_sentence=cfg.heads_sentence,
        heads_topic=cfg.heads_topic,
        leaky_slope=cfg.leaky_slope,
        standard_gat_aggregation=cfg.standard_gat_aggregation,
        residual=cfg.gat_residual,
    )


def ntm_config(cfg: ModelConfig, ntm_vocab_size: int) -> ntm.NtmConfig:
    return ntm.NtmConfig(
        vocab_size=ntm_vocab_size,
        n_topics=cfg.n_topics,
        d_hidden=cfg.d_ntm_hidden,
        d_topic=cfg.d_topic,
        shared_hidden=cfg.ntm_shared_hidden,
    )


def init_params(cfg: ModelConfig, vocab_size: int, ntm_vocab_size: int, rng: np.random.Generator) -> dict[str, Tensor]:
    """All parameter groups, keyed ``group.name``. Order is deterministic."""
    params: dict[str, Tensor] = {}
    params.update(init_encoder_params(EncoderConfig(vocab_size, cfg.d_emb, cfg.d_h), rng))
    params.update(ntm.init_ntm_params(ntm_config(cfg, ntm_vocab_size), rng))
    params["proj.sent.W"] = glorot(rng, 2 * cfg.d_h, cfg.d_node)
    params["proj.sent.b"] = zeros(cfg.d_node)
    params["proj.topic.W"] = glorot(rng, cfg.d_topic, cfg.d_node)
    params["proj.topic.b"] = zeros(cfg.d_node)
    params.update(init_gat_params(gat_config(cfg), rng))
    d_in = cfg.d_node if cfg.ablation == "no_ntm" else cfg.d_node + cfg.d_topic
    params["classifier.W"] = glorot(rng, d_in, 1)
    params["classifier.b"] = zeros(1)
    return params


def is_ntm_param(name: str) -> bool:
    return name.startswith(NTM_PREFIX)


# ---------------------------------------------------------------------------
# classifier and losses
# ---------------------------------------------------------------------------


def classify(sentence_states, T_d, W, b) -> Tensor:
    """y_hat_i = sigmoid([h_i ; T_d] W + b) for every sentence row.

    The affine map over the concatenation is evaluated as
    ``h_i W[:d] + T_d W[d:] + b``, which avoids materializing the
    broadcast of T_d to every row. Pass ``T_d=None`` for a classifier over
    sentence states alone.
    """
    H = as_tensor(sentence_states)
    W, b = as_tensor(W), as_tensor(b)
    d = H.shape[-1]
    extra = 0 if T_d is None else as_tensor(T_d).shape[-1]
    if W.shape != (d + extra, 1) or b.shape != (1,):
        raise ShapeError("classify", [H.shape, () if T_d is None else as_tensor(T_d).shape, W.shape, b.shape])
    logits = matmul(H, getitem(W, slice(0, d)))  # (..., N, 1)
    if T_d is not None:
        T_d = as_tensor(T_d)
        topic_term = matmul(T_d, getitem(W, slice(d, d + extra)))  # (..., 1)
        logits = add(logits, reshape(topic_term, topic_term.shape[:-1] + (1, 1)))
    logits = add(logits, b)
    return reshape(sigmoid(logits), logits.shape[:-1])


def bce_loss(y_hat, y) -> Tensor:
    """Summed binary cross-entropy over sentences (last axis); batch-averaged."""
    y_hat = as_tensor(y_hat)
    y = np.asarray(y, dtype=np.float64)
    if y.shape != y_hat.shape:
        raise ContractError(f"bce_loss: {y_hat.shape} predictions for {y.shape} labels")
    pos = mul(y, log(clip_min(y_hat, BCE_CLAMP)))
    neg = mul(1.0 - y, log(clip_min(sub(1.0, y_hat), BCE_CLAMP)))
    per_doc = mul(-1.0, reduce_sum(add(pos, neg), axis=-1))
    return mean(per_doc) if per_doc.ndim else per_doc


def joint_loss(l_sc, l_ntm, lam: float) -> Tensor:
    if lam < 0:
        raise ContractError(f"joint_loss: lambda must be >= 0, got {lam}")
    return add(as_tensor(l_sc), mul(lam, as_tensor(l_ntm)))


# ---------------------------------------------------------------------------
# forward pass
# ---------------------------------------------------------------------------


@dataclass
class ForwardOutput:
    y_hat: Tensor  # (B, N)
    topic: ntm.TopicState | None
    gat: GatOutput | None
    bow: np.ndarray | None


def batch_bow(docs: Sequence[LabeledDocument]) -> np.ndarray:
    return np.stack([d.bow for d in docs])


def forward(
    docs: Sequence[LabeledDocument],
    params: Params,
    cfg: ModelConfig,
    noise: np.ndarray | None = None,
) -> ForwardOutput:
    """Predictions for a batch of documents with equal sentence counts.

    ``noise`` (B x K) drives the topic sample; ``None`` is deterministic.
    """
    if not docs:
        raise ContractError("forward: empty batch")
    counts = {d.n_sentences for d in docs}
    if len(counts) != 1:
        raise ContractError(f"forward: batch mixes sentence counts {sorted(counts)}")
    H_B = encode_batch(docs, params)
    S0 = linear(H_B, params["proj.sent.W"], params["proj.sent.b"])
    gcfg = gat_config(cfg)
    W, b = params["classifier.W"], params["classifier.b"]

    if cfg.ablation == "no_ntm":
        gat = run_sentence_gat(S0, params, gcfg)
        return ForwardOutput(classify(gat.sentence_states, None, W, b), None, gat, None)

    bow = batch_bow(docs)
    state = ntm.forward(bow, params, noise)
    if cfg.ablation == "no_gat":
        return ForwardOutput(classify(S0, state.T_d, W, b), state, None, bow)

    T0 = linear(state.H_T, params["proj.topic.W"], params["proj.topic.b"])
    gat = run_gat(build_graph(S0, T0), params, gcfg)
    return ForwardOutput(classify(gat.sentence_states, state.T_d, W, b), state, gat, bow)


def losses(out: ForwardOutput, docs: Sequence[LabeledDocument], cfg: ModelConfig, lam: float):
    """(total, L_SC, L_NTM); L_NTM is None when the topic model is ablated."""
    y = np.array([d.labels for d in docs], dtype=np.float64)
    l_sc = bce_loss(out.y_hat, y)
    if out.topic is None:
        return l_sc, l_sc, None
    l_ntm = ntm.ntm_loss(out.bow, out.topic)
    return joint_loss(l_sc, l_ntm, lam), l_sc, l_ntm


# ---------------------------------------------------------------------------
# selection and analysis
# ---------------------------------------------------------------------------


def select_summary(y_hat, k: int) -> list[int]:
    """Indices of the k highest scores (ties: lower index), in document order."""
    scores = np.asarray(y_hat.data if isinstance(y_hat, Tensor) else y_hat, dtype=np.float64).reshape(-1)
    if k < 1:
        raise ContractError(f"select_summary: k must be >= 1, got {k}")
    if k > scores.size:
        log_.warning("select_summary: k=%d exceeds %d sentences; returning all", k, scores.size)
        k = scores.size
    order = np.lexsort((np.arange(scores.size), -scores))
    return sorted(int(i) for i in order[:k])


def topical_weights(theta, topic_attention) -> np.ndarray:
    """TW_i = sum_j theta_j * alpha_{j,i}.

    ``topic_attention`` holds topic-to-sentence attention as (K x N) or,
    with heads, (K x N x M); heads are averaged.
    """
    theta = np.asarray(theta.data if isinstance(theta, Tensor) else theta, dtype=np.float64)
    alpha = np.asarray(topic_attention.data if isinstance(topic_attention, Tensor) else topic_attention)
    if alpha.ndim == 3:
        alpha = alpha.mean(axis=-1)
    if alpha.ndim != 2 or theta.shape != (alpha.shape[0],):
        raise ShapeError("topical_weights", [theta.shape, alpha.shape])
    return theta @ alpha


def document_topical_weights(out: ForwardOutput, cfg: ModelConfig, layer: int = -1) -> list[np.ndarray]:
    """Per document in the batch, topical weights from one graph layer."""
    if cfg.ablation != "full" or out.topic is None or out.gat is None:
        raise UnsupportedOperationError(f"topical weights need topic nodes; ablation is {cfg.ablation!r}")
    alpha = out.gat.attentions[layer]["topic"].data  # (B, K, N, M_t)
    theta = out.topic.theta.data
    return [topical_weights(theta[b], alpha[b]) for b in range(theta.shape[0])]
