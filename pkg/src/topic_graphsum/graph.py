"""Heterogeneous graph attention over a complete sentence-topic bipartite graph.

Attention logits use type-specific projections into a common space,
``z_ij = leaky_relu(a . [f_S(h_i) ; f_T(h_j)])``, normalized over the
neighbors of the target node. The update of node ``i`` concatenates, over
heads, ``sum_j tanh(alpha_ij W_c h_j)``. Sentence and topic nodes are
updated synchronously from the previous layer's states.

With ``residual`` (the default) each node keeps its previous state and adds
the aggregate. Without it, a sentence's new state depends on the sentence
itself only through its attention row, and softmax shift invariance makes
that row identical for every sentence whenever the leaky ReLU stays in one
linear regime, so all sentences collapse to the same vector.

All functions accept an optional leading batch axis.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .autodiff import (
    Tensor,
    add,
    as_tensor,
    expand_dims,
    leaky_relu,
    matmul,
    mul,
    reduce_sum,
    reshape,
    softmax,
    tanh,
)
from .autodiff.ops import DEFAULT_LEAKY_SLOPE
from .errors import ContractError, ShapeError
from .layers import glorot, linear, uniform, zeros

Params = Mapping[str, Tensor]


@dataclass(frozen=True)
class GatConfig:
    d_node: int = 128
    d_attn: int = 64
    n_layers: int = 2
    heads_sentence: int = 2
    heads_topic: int = 2
    leaky_slope: float = DEFAULT_LEAKY_SLOPE
    standard_gat_aggregation: bool = False
    residual: bool = True

    def __post_init__(self):
        if self.n_layers < 1:
            raise ContractError("graph attention needs at least one layer")
        for heads in (self.heads_sentence, self.heads_topic):
            if heads < 1 or self.d_node % heads:
                raise ContractError(f"d_node={self.d_node} must be a positive multiple of the head count {heads}")

    @property
    def head_dim_sentence(self) -> int:
        return self.d_node // self.heads_sentence

    @property
    def head_dim_topic(self) -> int:
        return self.d_node // self.heads_topic


@dataclass
class BipartiteDocumentGraph:
    sentence_states: Tensor  # (..., N, d)
    topic_states: Tensor  # (..., K, d)

    @property
    def n_sentences(self) -> int:
        return self.sentence_states.shape[-2]

    @property
    def n_topics(self) -> int:
        return self.topic_states.shape[-2]

    @property
    def edges(self) -> list[tuple[int, int]]:
        return [(i, j) for i in range(self.n_sentences) for j in range(self.n_topics)]

    def sentence_neighbors(self, i: int) -> list[int]:
        return list(range(self.n_topics))

    def topic_neighbors(self, j: int) -> list[int]:
        return list(range(self.n_sentences))


@dataclass
class GatOutput:
    sentence_states: Tensor
    topic_states: Tensor | None
    # per layer: {"sentence": (..., N, K|N, M_s), "topic": (..., K, N, M_t)}
    attentions: list[dict[str, Tensor]] = field(default_factory=list)


def init_layer_params(cfg: GatConfig, rng: np.random.Generator, prefix: str) -> dict[str, Tensor]:
    d, a = cfg.d_node, cfg.d_attn
    bound = float(np.sqrt(6.0 / (a + 1)))
    p = {
        prefix + "f_S.W": glorot(rng, d, a),
        prefix + "f_S.b": zeros(a),
        prefix + "f_T.W": glorot(rng, d, a),
        prefix + "f_T.b": zeros(a),
    }
    for kind, heads in (("sent", cfg.heads_sentence), ("topic", cfg.heads_topic)):
        p[f"{prefix}{kind}.a_self"] = uniform(rng, (a, heads), bound)
        p[f"{prefix}{kind}.a_nbr"] = uniform(rng, (a, heads), bound)
        p[f"{prefix}{kind}.W_c"] = glorot(rng, d, d)
    return p


def init_gat_params(cfg: GatConfig, rng: np.random.Generator, prefix: str = "graph.") -> dict[str, Tensor]:
    params: dict[str, Tensor] = {}
    for layer in range(cfg.n_layers):
        params.update(init_layer_params(cfg, rng, f"{prefix}{layer}."))
    return params


def build_graph(sentence_states, topic_states) -> BipartiteDocumentGraph:
    """Complete bipartite graph; topic states are broadcast over the batch."""
    S, T = as_tensor(sentence_states), as_tensor(topic_states)
    if S.ndim < 2 or S.shape[-2] == 0:
        raise ContractError("build_graph: a document graph needs at least one sentence")
    if T.ndim < 2 or T.shape[-1] != S.shape[-1]:
        raise ShapeError("build_graph", [S.shape, T.shape], "node dimensions differ")
    if S.ndim > T.ndim:
        T = add(T, Tensor(np.zeros(S.shape[:-2] + T.shape[-2:])))
    return BipartiteDocumentGraph(S, T)


def project(states, params: Params, key: str) -> Tensor:
    """Type-specific nonlinear map into the attention space."""
    return tanh(linear(states, params[key + ".W"], params[key + ".b"]))


def attention_scores(
    target_proj: Tensor,
    neighbor_proj: Tensor,
    a_self: Tensor,
    a_nbr: Tensor,
    slope: float = DEFAULT_LEAKY_SLOPE,
) -> Tensor:
    """alpha[..., i, j, m] = softmax_j leaky_relu(a_m . [p_i ; q_j]).

    The attention vector of head ``m`` is the concatenation of column m of
    ``a_self`` and ``a_nbr``, so the dot product splits into a target term
    and a neighbor term that are summed by broadcasting.
    """
    if target_proj.shape[-1] != a_self.shape[0] or neighbor_proj.shape[-1] != a_nbr.shape[0]:
        raise ShapeError("attention_scores", [target_proj.shape, neighbor_proj.shape, a_self.shape, a_nbr.shape])
    src = expand_dims(matmul(target_proj, a_self), -2)  # (..., n_t, 1, M)
    nbr = expand_dims(matmul(neighbor_proj, a_nbr), -3)  # (..., 1, n_n, M)
    logits = leaky_relu(add(src, nbr), slope)
    return softmax(logits, axis=-2)


def aggregate(alpha: Tensor, neighbor_states: Tensor, W_c: Tensor, standard: bool = False) -> Tensor:
    """Concatenate over heads m of sum_j tanh(alpha[i, j, m] * (h_j W_c^m)).

    ``W_c`` is (d x M*d_head): head m owns columns [m*d_head, (m+1)*d_head).
    With ``standard=True`` the activation moves outside the sum (ordinary
    GAT aggregation).
    """
    heads = alpha.shape[-1]
    d_out = W_c.shape[-1]
    if d_out % heads or neighbor_states.shape[-1] != W_c.shape[0]:
        raise ShapeError("aggregate", [alpha.shape, neighbor_states.shape, W_c.shape])
    d_head = d_out // heads
    values = matmul(neighbor_states, W_c)
    values = reshape(values, values.shape[:-1] + (heads, d_head))  # (..., n_n, M, dh)
    weighted = mul(expand_dims(alpha, -1), expand_dims(values, -4))  # (..., n_t, n_n, M, dh)
    if standard:
        out = tanh(reduce_sum(weighted, axis=-3))
    else:
        out = reduce_sum(tanh(weighted), axis=-3)
    return reshape(out, out.shape[:-2] + (d_out,))


def propagate_layer(
    graph: BipartiteDocumentGraph, params: Params, cfg: GatConfig, prefix: str
) -> tuple[BipartiteDocumentGraph, dict[str, Tensor]]:
    """One synchronous update of every sentence and topic node."""
    S, T = graph.sentence_states, graph.topic_states
    if S.shape[-1] != cfg.d_node or T.shape[-1] != cfg.d_node:
        raise ShapeError("propagate_layer", [S.shape, T.shape], f"expected d_node={cfg.d_node}")
    pS = project(S, params, prefix + "f_S")
    pT = project(T, params, prefix + "f_T")
    alpha_s = attention_scores(pS, pT, params[prefix + "sent.a_self"], params[prefix + "sent.a_nbr"], cfg.leaky_slope)
    alpha_t = attention_scores(pT, pS, params[prefix + "topic.a_self"], params[prefix + "topic.a_nbr"], cfg.leaky_slope)
    new_S = aggregate(alpha_s, T, params[prefix + "sent.W_c"], cfg.standard_gat_aggregation)
    new_T = aggregate(alpha_t, S, params[prefix + "topic.W_c"], cfg.standard_gat_aggregation)
    if cfg.residual:
        new_S, new_T = add(S, new_S), add(T, new_T)
    return BipartiteDocumentGraph(new_S, new_T), {"sentence": alpha_s, "topic": alpha_t}


def run_gat(graph: BipartiteDocumentGraph, params: Params, cfg: GatConfig, prefix: str = "graph.") -> GatOutput:
    out = GatOutput(graph.sentence_states, graph.topic_states)
    for layer in range(cfg.n_layers):
        graph, att = propagate_layer(graph, params, cfg, f"{prefix}{layer}.")
        out.attentions.append(att)
    out.sentence_states = graph.sentence_states
    out.topic_states = graph.topic_states
    return out


def run_sentence_gat(sentence_states, params: Params, cfg: GatConfig, prefix: str = "graph.") -> GatOutput:
    """Fully connected sentence graph (self loops included), no topic nodes.

    Uses the sentence projection on both endpoints and the sentence heads.
    """
    S = as_tensor(sentence_states)
    out = GatOutput(S, None)
    for layer in range(cfg.n_layers):
        pre = f"{prefix}{layer}."
        pS = project(S, params, pre + "f_S")
        alpha = attention_scores(pS, pS, params[pre + "sent.a_self"], params[pre + "sent.a_nbr"], cfg.leaky_slope)
        update = aggregate(alpha, S, params[pre + "sent.W_c"], cfg.standard_gat_aggregation)
        S = add(S, update) if cfg.residual else update
        out.attentions.append({"sentence": alpha})
    out.sentence_states = S
    return out
