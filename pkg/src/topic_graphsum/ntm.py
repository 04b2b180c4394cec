"""Variational neural topic model with Gaussian-softmax topic sampling.

An inference network maps a bag of words to a diagonal Gaussian over the
latent ``z``; ``theta = softmax(z)`` is the topic mixture and
``p_w = softmax(W_phi theta)`` the reconstructed word distribution. Rows of
``relu(W_phi^T F + c)`` serve as topic node features for the graph.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .autodiff import (
    Tensor,
    add,
    as_tensor,
    exp,
    gaussian_reparameterize,
    log,
    matmul,
    mean,
    mul,
    reduce_sum,
    relu,
    softmax,
    sub,
    transpose,
)
from .errors import ContractError, ShapeError
from .layers import glorot, linear, zeros

LOG_GUARD = 1e-10
Params = Mapping[str, Tensor]


@dataclass(frozen=True)
class NtmConfig:
    vocab_size: int
    n_topics: int = 10
    d_hidden: int = 128
    d_topic: int = 64
    shared_hidden: bool = False

    def __post_init__(self):
        if self.n_topics < 1 or self.d_topic < 1 or self.vocab_size < 1:
            raise ContractError(f"invalid topic model configuration {self}")


@dataclass
class TopicState:
    """Intermediates of one forward pass; leading axis is the batch when present."""

    mu: Tensor
    log_sigma: Tensor
    z: Tensor
    theta: Tensor
    p_w: Tensor | None = None
    H_T: Tensor | None = None
    T_d: Tensor | None = None


def init_ntm_params(cfg: NtmConfig, rng: np.random.Generator, prefix: str = "ntm.") -> dict[str, Tensor]:
    V, H, K = cfg.vocab_size, cfg.d_hidden, cfg.n_topics
    p: dict[str, Tensor] = {}
    stacks = ("hidden",) if cfg.shared_hidden else ("mu", "sigma")
    for name in stacks:
        p[f"{prefix}{name}.W1"] = glorot(rng, V, H)
        p[f"{prefix}{name}.b1"] = zeros(H)
    for name in ("mu", "sigma"):
        p[f"{prefix}{name}.W2"] = glorot(rng, H, K)
        p[f"{prefix}{name}.b2"] = zeros(K)
    p[prefix + "W_phi"] = Tensor(rng.normal(0.0, 0.1, size=(V, K)), requires_grad=True)
    p[prefix + "f_phi.W"] = glorot(rng, V, cfg.d_topic)
    p[prefix + "f_phi.b"] = zeros(cfg.d_topic)
    return p


def _hidden(x: Tensor, params: Params, name: str, prefix: str) -> Tensor:
    key = f"{prefix}hidden" if f"{prefix}hidden.W1" in params else f"{prefix}{name}"
    return relu(linear(x, params[key + ".W1"], params[key + ".b1"]))


def encode_bow(bow, params: Params, prefix: str = "ntm.") -> tuple[Tensor, Tensor]:
    x = as_tensor(bow)
    mu = linear(_hidden(x, params, "mu", prefix), params[prefix + "mu.W2"], params[prefix + "mu.b2"])
    log_sigma = linear(_hidden(x, params, "sigma", prefix), params[prefix + "sigma.W2"], params[prefix + "sigma.b2"])
    return mu, log_sigma


def infer(bow, params: Params, noise=None, prefix: str = "ntm.") -> TopicState:
    """Posterior parameters, a reparameterized sample and theta.

    ``noise=None`` means the deterministic mode: z = mu, theta = softmax(mu).
    """
    x = as_tensor(bow)
    if x.shape[-1] != params[prefix + "W_phi"].shape[0]:
        raise ShapeError("infer", [x.shape, params[prefix + "W_phi"].shape], "bow length != |V_ntm|")
    totals = x.data.sum(axis=-1)
    if np.any(totals <= 0):
        raise ContractError("infer: bag of words has zero total count")
    mu, log_sigma = encode_bow(x, params, prefix)
    if noise is None:
        noise = np.zeros(mu.shape)
    z = gaussian_reparameterize(mu, log_sigma, as_tensor(noise))
    return TopicState(mu=mu, log_sigma=log_sigma, z=z, theta=softmax(z, axis=-1))


def reconstruct(theta, params: Params, prefix: str = "ntm.") -> Tensor:
    """p_w = softmax(W_phi theta), batched over leading axes of theta."""
    return softmax(matmul(as_tensor(theta), transpose(params[prefix + "W_phi"])), axis=-1)


def topic_representations(params: Params, prefix: str = "ntm.") -> Tensor:
    """H_T (K x d_t): each topic's word-relevance column mapped through f_phi."""
    return relu(linear(transpose(params[prefix + "W_phi"]), params[prefix + "f_phi.W"], params[prefix + "f_phi.b"]))


def document_topic_vector(theta, H_T) -> Tensor:
    """T_d = sum_k theta_k H_T[k]."""
    theta, H_T = as_tensor(theta), as_tensor(H_T)
    if theta.shape[-1] != H_T.shape[0] or H_T.ndim != 2:
        raise ShapeError("document_topic_vector", [theta.shape, H_T.shape])
    return matmul(theta, H_T)


def forward(bow, params: Params, noise=None, prefix: str = "ntm.") -> TopicState:
    """Full pass: inference, reconstruction and topic vectors."""
    state = infer(bow, params, noise, prefix)
    state.p_w = reconstruct(state.theta, params, prefix)
    state.H_T = topic_representations(params, prefix)
    state.T_d = document_topic_vector(state.theta, state.H_T)
    return state


def kl_term(mu, log_sigma) -> Tensor:
    """KL(N(mu, sigma^2) || N(0, I)) summed over the last axis."""
    mu, log_sigma = as_tensor(mu), as_tensor(log_sigma)
    inner = sub(add(1.0, mul(2.0, log_sigma)), add(mul(mu, mu), exp(mul(2.0, log_sigma))))
    return mul(-0.5, reduce_sum(inner, axis=-1))


def reconstruction_term(bow, p_w) -> Tensor:
    """-sum_v x_v log p_w[v], over the last axis."""
    return mul(-1.0, reduce_sum(mul(as_tensor(bow), log(add(p_w, LOG_GUARD))), axis=-1))


def ntm_loss_per_doc(bow, state: TopicState) -> Tensor:
    if state.p_w is None:
        raise ContractError("ntm_loss: state has no reconstruction; use ntm.forward")
    return add(kl_term(state.mu, state.log_sigma), reconstruction_term(bow, state.p_w))


def ntm_loss(bow, state: TopicState) -> Tensor:
    """Negative ELBO, averaged over the batch axis if there is one."""
    per_doc = ntm_loss_per_doc(bow, state)
    return mean(per_doc) if per_doc.ndim else per_doc


def top_words(params: Params, vocab_tokens: list[str], k: int, prefix: str = "ntm.") -> list[list[str]]:
    """Per topic, the k tokens with the largest W_phi weight (ties: lower index)."""
    W = params[prefix + "W_phi"].data
    if k > W.shape[0]:
        raise ContractError(f"top_words: k={k} exceeds vocabulary size {W.shape[0]}")
    out = []
    for j in range(W.shape[1]):
        order = np.lexsort((np.arange(W.shape[0]), -W[:, j]))
        out.append([vocab_tokens[i] for i in order[:k]])
    return out


def format_topics(topics: list[list[str]]) -> str:
    return "".join(f"topic {j}: {' '.join(words)}\n" for j, words in enumerate(topics))
