"""Bidirectional GRU document encoder.

The whole document is one token stream with ``[CLS]`` before and ``[SEP]``
after every sentence. A sentence's vector is the concatenation of the
forward and backward hidden states at its ``[CLS]`` position.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .autodiff import Tensor, add, concat, embedding, getitem, matmul, mul, sigmoid, stack, sub, tanh
from .errors import ContractError, ShapeError
from .layers import uniform
from .text import LabeledDocument, Vocabulary

Params = Mapping[str, Tensor]


@dataclass(frozen=True)
class EncoderConfig:
    vocab_size: int
    d_emb: int = 64
    d_h: int = 64

    @property
    def d_out(self) -> int:
        return 2 * self.d_h


def init_encoder_params(cfg: EncoderConfig, rng: np.random.Generator, prefix: str = "encoder.") -> dict[str, Tensor]:
    bound = 1.0 / np.sqrt(cfg.d_h)
    params = {prefix + "embedding": uniform(rng, (cfg.vocab_size, cfg.d_emb), 0.1)}
    for direction in ("fwd", "bwd"):
        params[f"{prefix}{direction}.W"] = uniform(rng, (cfg.d_emb, 3 * cfg.d_h), bound)
        params[f"{prefix}{direction}.U"] = uniform(rng, (cfg.d_h, 3 * cfg.d_h), bound)
        params[f"{prefix}{direction}.b"] = uniform(rng, (3 * cfg.d_h,), bound)
    return params


def _gru_step(xw_zr: Tensor, xw_h: Tensor, h: Tensor, U_zr: Tensor, U_h: Tensor) -> Tensor:
    d = h.shape[-1]
    zr = sigmoid(add(xw_zr, matmul(h, U_zr)))
    z = getitem(zr, (Ellipsis, slice(0, d)))
    r = getitem(zr, (Ellipsis, slice(d, 2 * d)))
    cand = tanh(add(xw_h, matmul(mul(r, h), U_h)))
    # (1 - z) * h + z * cand
    return add(h, mul(z, sub(cand, h)))


def gru_cell(x, h_prev, W, U, b) -> Tensor:
    """One GRU update.

    Gates are packed along the last axis of ``W`` (d_in x 3d), ``U``
    (d x 3d) and ``b`` (3d) in the order update, reset, candidate::

        z  = sigmoid(x W_z + h U_z + b_z)
        r  = sigmoid(x W_r + h U_r + b_r)
        h~ = tanh(x W_h + (r * h) U_h + b_h)
        h' = (1 - z) * h + z * h~
    """
    d = h_prev.shape[-1]
    if W.shape[-1] != 3 * d or U.shape != (d, 3 * d) or b.shape != (3 * d,) or x.shape[-1] != W.shape[0]:
        raise ShapeError("gru_cell", [x.shape, h_prev.shape, W.shape, U.shape, b.shape])
    xw = add(matmul(x, W), b)
    U_zr = getitem(U, (slice(None), slice(0, 2 * d)))
    U_h = getitem(U, (slice(None), slice(2 * d, 3 * d)))
    xw_zr = getitem(xw, (Ellipsis, slice(0, 2 * d)))
    xw_h = getitem(xw, (Ellipsis, slice(2 * d, 3 * d)))
    return _gru_step(xw_zr, xw_h, h_prev, U_zr, U_h)


def run_gru(X: Tensor, W: Tensor, U: Tensor, b: Tensor) -> list[Tensor]:
    """Unroll a GRU over axis 1 of ``X`` (B x T x d_in) from a zero state.

    Returns the hidden state after every step. Input projections for all
    steps are computed with one matmul up front.
    """
    B, T = X.shape[0], X.shape[1]
    d = U.shape[0]
    xw = add(matmul(X, W), b)
    xw_zr = getitem(xw, (Ellipsis, slice(0, 2 * d)))
    xw_h = getitem(xw, (Ellipsis, slice(2 * d, 3 * d)))
    U_zr = getitem(U, (slice(None), slice(0, 2 * d)))
    U_h = getitem(U, (slice(None), slice(2 * d, 3 * d)))
    h = Tensor(np.zeros((B, d)))
    states = []
    for t in range(T):
        h = _gru_step(getitem(xw_zr, (slice(None), t)), getitem(xw_h, (slice(None), t)), h, U_zr, U_h)
        states.append(h)
    return states


def token_stream(doc: LabeledDocument) -> tuple[list[int], list[int]]:
    """Flattened ids with sentence delimiters, and each sentence's [CLS] position."""
    ids, cls_pos = [], []
    for sent in doc.token_ids:
        cls_pos.append(len(ids))
        ids.append(Vocabulary.cls_id)
        ids.extend(sent)
        ids.append(Vocabulary.sep_id)
    return ids, cls_pos


def bigru_states(ids: Sequence[Sequence[int]], params: Params, prefix: str = "encoder.") -> list[Tensor]:
    """Per-position [forward ; backward] states for each id sequence.

    Sequences may differ in length; for each one a (L_b x 2d) tensor is
    returned. Right padding never leaks into valid positions because the
    forward pass only reads the past and the backward pass runs over each
    reversed sequence separately padded on the right.
    """
    table = params[prefix + "embedding"]
    lengths = [len(s) for s in ids]
    if min(lengths) == 0:
        raise ContractError("bigru_states: empty token sequence")
    T = max(lengths)
    fwd_ids = np.full((len(ids), T), Vocabulary.pad_id, dtype=np.intp)
    bwd_ids = fwd_ids.copy()
    for b, seq in enumerate(ids):
        fwd_ids[b, : len(seq)] = seq
        bwd_ids[b, : len(seq)] = seq[::-1]
    fwd = stack(run_gru(embedding(table, fwd_ids), *(params[f"{prefix}fwd.{k}"] for k in "WUb")), axis=1)
    bwd = stack(run_gru(embedding(table, bwd_ids), *(params[f"{prefix}bwd.{k}"] for k in "WUb")), axis=1)
    out = []
    for b, L in enumerate(lengths):
        f = getitem(fwd, (b, slice(0, L)))
        r = getitem(bwd, (b, np.arange(L - 1, -1, -1)))
        out.append(concat([f, r], axis=-1))
    return out


def encode_batch(docs: Sequence[LabeledDocument], params: Params, prefix: str = "encoder.") -> Tensor:
    """Sentence matrix for each document, shape (B x N x 2d).

    Documents with fewer than N sentences are padded by repeating their
    first sentence's vector; callers that batch by sentence count never see
    the padding.
    """
    table = params[prefix + "embedding"]
    streams = [token_stream(d) for d in docs]
    for d, (ids, _) in zip(docs, streams):
        if d.n_sentences == 0:
            raise ContractError(f"encode: document {d.id!r} has no sentences")
        if ids and (min(ids) < 0 or max(ids) >= table.shape[0]):
            raise ContractError(f"encode: document {d.id!r} has a token id outside [0, {table.shape[0]})")
    lengths = [len(ids) for ids, _ in streams]
    T = max(lengths)
    N = max(d.n_sentences for d in docs)
    fwd_ids = np.full((len(docs), T), Vocabulary.pad_id, dtype=np.intp)
    bwd_ids = fwd_ids.copy()
    for b, (ids, _) in enumerate(streams):
        fwd_ids[b, : len(ids)] = ids
        bwd_ids[b, : len(ids)] = ids[::-1]
    fwd = stack(run_gru(embedding(table, fwd_ids), *(params[f"{prefix}fwd.{k}"] for k in "WUb")), axis=1)
    bwd = stack(run_gru(embedding(table, bwd_ids), *(params[f"{prefix}bwd.{k}"] for k in "WUb")), axis=1)
    rows = np.zeros((len(docs), N), dtype=np.intp)
    f_pos = np.zeros((len(docs), N), dtype=np.intp)
    b_pos = np.zeros((len(docs), N), dtype=np.intp)
    for b, ((_, cls_pos), L) in enumerate(zip(streams, lengths)):
        padded = cls_pos + [cls_pos[0]] * (N - len(cls_pos))
        rows[b] = b
        f_pos[b] = padded
        b_pos[b] = [L - 1 - p for p in padded]
    return concat([getitem(fwd, (rows, f_pos)), getitem(bwd, (rows, b_pos))], axis=-1)


def encode_document(doc: LabeledDocument, params: Params, prefix: str = "encoder.") -> Tensor:
    """Sentence matrix H_B (N x 2d) for one document."""
    return getitem(encode_batch([doc], params, prefix), 0)
