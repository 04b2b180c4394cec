"""Classifier, losses, forward variants, selection and topical weights."""

import logging
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import tiny_model_config
from topic_graphsum.autodiff import Tape, Tensor, gradcheck, make_rng
from topic_graphsum.errors import ContractError, ShapeError, UnsupportedOperationError
from topic_graphsum.model import (
    bce_loss,
    classify,
    document_topical_weights,
    forward,
    init_params,
    is_ntm_param,
    joint_loss,
    losses,
    select_summary,
    topical_weights,
)


def model_params(cfg, vocab, seed=0):
    return init_params(cfg, len(vocab), vocab.ntm_size, make_rng(seed))


def same_count(docs, n=None):
    n = n or docs[0].n_sentences
    return [d for d in docs if d.n_sentences == n]


class TestClassify:
    def test_zero_parameters(self):
        y = classify(np.ones((3, 4)), np.ones(2), np.zeros((6, 1)), np.zeros(1))
        np.testing.assert_array_equal(y.data, [0.5, 0.5, 0.5])

    def test_equals_concatenated_affine_map(self):
        rng = np.random.default_rng(0)
        H, T, W, b = rng.standard_normal((3, 4)), rng.standard_normal(2), rng.standard_normal((6, 1)), rng.standard_normal(1)
        X = np.concatenate([H, np.tile(T, (3, 1))], axis=1)
        expected = 1 / (1 + np.exp(-(X @ W + b)[:, 0]))
        np.testing.assert_allclose(classify(H, T, W, b).data, expected, rtol=1e-14)

    def test_batched(self):
        rng = np.random.default_rng(1)
        H, T, W, b = rng.standard_normal((2, 3, 4)), rng.standard_normal((2, 2)), rng.standard_normal((6, 1)), rng.standard_normal(1)
        y = classify(H, T, W, b).data
        for k in range(2):
            np.testing.assert_allclose(y[k], classify(H[k], T[k], W, b).data, rtol=1e-14)

    def test_range_and_permutation(self):
        rng = np.random.default_rng(2)
        H, T, W, b = rng.standard_normal((5, 4)) * 3, rng.standard_normal(2), rng.standard_normal((6, 1)), rng.standard_normal(1)
        y = classify(H, T, W, b).data
        assert np.all((y > 0) & (y < 1))
        perm = [4, 2, 0, 1, 3]
        np.testing.assert_array_equal(classify(H[perm], T, W, b).data, y[perm])

    def test_without_topic_vector(self):
        H, W = np.eye(2), np.array([[1.0], [-1.0]])
        np.testing.assert_allclose(classify(H, None, W, np.zeros(1)).data, [1 / (1 + math.exp(-1)), 1 / (1 + math.exp(1))])

    def test_dimension_mismatch(self):
        with pytest.raises(ShapeError):
            classify(np.ones((3, 4)), np.ones(2), np.zeros((5, 1)), np.zeros(1))


class TestLosses:
    def test_bce_half(self):
        assert bce_loss(np.array([0.5]), [1]).item() == pytest.approx(math.log(2), abs=1e-12)

    def test_bce_additive(self):
        assert bce_loss(np.array([0.5, 0.5]), [1, 0]).item() == pytest.approx(2 * math.log(2), abs=1e-12)

    def test_bce_perfect_prediction(self):
        assert bce_loss(np.array([1.0, 0.0]), [1, 0]).item() == pytest.approx(0.0, abs=1e-9)

    def test_bce_clamped(self):
        assert bce_loss(np.array([0.0]), [1]).item() == pytest.approx(-math.log(1e-10))

    def test_bce_batch_mean(self):
        y_hat = np.array([[0.5, 0.5], [0.9, 0.2]])
        y = [[1, 0], [1, 1]]
        per_doc = [2 * math.log(2), -math.log(0.9) - math.log(0.2)]
        assert bce_loss(y_hat, y).item() == pytest.approx(np.mean(per_doc), rel=1e-12)

    def test_bce_length_mismatch(self):
        with pytest.raises(ContractError):
            bce_loss(np.array([0.5, 0.5]), [1])

    def test_joint(self):
        assert joint_loss(1.0, 2.0, 0.85).item() == pytest.approx(2.7, abs=1e-12)
        assert joint_loss(1.5, 2.0, 0.0).item() == 1.5
        assert joint_loss(1.5, 0.0, 0.85).item() == 1.5

    def test_joint_negative_lambda(self):
        with pytest.raises(ContractError):
            joint_loss(1.0, 1.0, -0.1)


class TestSelectSummary:
    def test_top_two_in_document_order(self):
        assert select_summary([0.9, 0.1, 0.8], 2) == [0, 2]

    def test_all(self):
        assert select_summary([0.2, 0.1, 0.3], 3) == [0, 1, 2]

    def test_tie_breaks_to_lower_index(self):
        assert select_summary([0.5, 0.5], 1) == [0]

    def test_k_too_large_warns(self, caplog):
        with caplog.at_level(logging.WARNING):
            assert select_summary([0.2, 0.1], 5) == [0, 1]
        assert "exceeds" in caplog.text

    def test_k_positive(self):
        with pytest.raises(ContractError):
            select_summary([0.2], 0)

    @settings(max_examples=200, deadline=None)
    @given(arrays(np.float64, st.integers(1, 8), elements=st.floats(0.01, 0.99)), st.integers(1, 8))
    def test_monotone_invariance(self, y, k):
        for g in (lambda v: np.log(v / (1 - v)), lambda v: v**3, lambda v: 2 * v + 7):
            assert select_summary(g(y), k) == select_summary(y, k)


class TestTopicalWeights:
    def test_double_uniform(self):
        np.testing.assert_allclose(topical_weights(np.full(3, 1 / 3), np.full((3, 4), 0.25)), 0.25, atol=1e-15)

    def test_one_hot_theta(self):
        alpha = np.random.default_rng(0).dirichlet(np.ones(5), size=3)
        np.testing.assert_array_equal(topical_weights(np.eye(3)[1], alpha), alpha[1])

    def test_sums_to_one(self):
        rng = np.random.default_rng(1)
        alpha = rng.dirichlet(np.ones(6), size=(4, 2)).transpose(0, 2, 1)  # (K, N, heads)
        tw = topical_weights(rng.dirichlet(np.ones(4)), alpha)
        assert abs(tw.sum() - 1.0) <= 1e-9

    def test_heads_averaged(self):
        alpha = np.stack([np.eye(2), np.ones((2, 2)) / 2], axis=-1)
        np.testing.assert_allclose(topical_weights(np.array([1.0, 0.0]), alpha), [0.75, 0.25])

    def test_shape_error(self):
        with pytest.raises(ShapeError):
            topical_weights(np.ones(2), np.ones((3, 4)))


class TestForward:
    def test_full_outputs(self, toy):
        docs, vocab = toy
        cfg = tiny_model_config()
        batch = same_count(docs)
        out = forward(batch, model_params(cfg, vocab), cfg)
        assert out.y_hat.shape == (len(batch), batch[0].n_sentences)
        assert out.topic is not None and out.gat is not None
        for att in out.gat.attentions:
            np.testing.assert_allclose(att["topic"].data.sum(axis=-2), 1.0, atol=1e-9)
            np.testing.assert_allclose(att["sentence"].data.sum(axis=-2), 1.0, atol=1e-9)
        for tw in document_topical_weights(out, cfg):
            assert abs(tw.sum() - 1.0) <= 1e-9

    def test_batch_equals_single_documents(self, toy):
        docs, vocab = toy
        cfg = tiny_model_config()
        p = model_params(cfg, vocab, 1)
        batch = same_count(docs)
        y = forward(batch, p, cfg).y_hat.data
        for row, d in enumerate(batch):
            np.testing.assert_allclose(y[row], forward([d], p, cfg).y_hat.data[0], rtol=1e-12)

    @pytest.mark.parametrize("ablation", ["no_ntm", "no_gat"])
    def test_ablations(self, toy, ablation):
        docs, vocab = toy
        cfg = tiny_model_config(ablation=ablation)
        out = forward(same_count(docs), model_params(cfg, vocab), cfg)
        assert (out.topic is None) == (ablation == "no_ntm")
        assert (out.gat is None) == (ablation == "no_gat")
        with pytest.raises(UnsupportedOperationError):
            document_topical_weights(out, cfg)

    def test_no_ntm_classifier_ignores_topics(self, toy):
        docs, vocab = toy
        cfg = tiny_model_config(ablation="no_ntm")
        assert model_params(cfg, vocab)["classifier.W"].shape == (cfg.d_node, 1)

    def test_mixed_sentence_counts(self, toy):
        docs, vocab = toy
        cfg = tiny_model_config()
        d = docs[1]
        shorter = type(d)(d.id, d.sentences[:2], d.summary, d.token_ids[:2], d.bow, d.labels[:2])
        with pytest.raises(ContractError):
            forward([docs[0], shorter], model_params(cfg, vocab), cfg)
        with pytest.raises(ContractError):
            forward([], model_params(cfg, vocab), cfg)

    def test_losses_split(self, toy):
        docs, vocab = toy
        cfg = tiny_model_config()
        batch = same_count(docs)
        out = forward(batch, model_params(cfg, vocab), cfg, np.zeros((len(batch), 2)))
        total, l_sc, l_ntm = losses(out, batch, cfg, 0.85)
        assert total.item() == pytest.approx(l_sc.item() + 0.85 * l_ntm.item(), rel=1e-14)

    def test_no_ntm_gives_ntm_parameters_zero_gradient(self, toy):
        docs, vocab = toy
        cfg = tiny_model_config(ablation="no_ntm")
        p = model_params(cfg, vocab)
        batch = same_count(docs)
        names = list(p)
        with Tape() as tape:
            loss, _, l_ntm = losses(forward(batch, p, cfg), batch, cfg, 0.85)
            grads = dict(zip(names, tape.backward(loss, [p[n] for n in names])))
        assert l_ntm is None
        assert any(is_ntm_param(n) for n in names)
        for n in names:
            if is_ntm_param(n):
                np.testing.assert_array_equal(grads[n], 0.0)
        assert np.any(grads["classifier.W"] != 0)

    @pytest.mark.parametrize("ablation", ["full", "no_ntm", "no_gat"])
    def test_end_to_end_gradient(self, toy, ablation):
        docs, vocab = toy
        cfg = tiny_model_config(ablation=ablation)
        p = model_params(cfg, vocab, 2)
        names = list(p)
        doc = docs[0]
        short = type(doc)(doc.id, doc.sentences[:2], doc.summary, doc.token_ids[:2], doc.bow, [1, 0])
        noise = np.array([[0.4, -0.3]])

        def f(*leaves):
            return losses(forward([short], dict(zip(names, leaves)), cfg, noise), [short], cfg, 0.85)[0]

        err = gradcheck(f, [p[n] for n in names], max_coords=3, rng=np.random.default_rng(0))
        assert err <= 1e-4
