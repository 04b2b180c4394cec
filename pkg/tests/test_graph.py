"""Bipartite sentence-topic graph and heterogeneous graph attention."""

import numpy as np
import pytest

from topic_graphsum.autodiff import Tensor, gradcheck, mul, reduce_sum, tanh
from topic_graphsum.errors import ContractError, ShapeError
from topic_graphsum.graph import (
    GatConfig,
    aggregate,
    attention_scores,
    build_graph,
    init_gat_params,
    project,
    propagate_layer,
    run_gat,
    run_sentence_gat,
)


def config(**kw):
    base = dict(d_node=4, d_attn=3, n_layers=1, heads_sentence=2, heads_topic=2)
    base.update(kw)
    return GatConfig(**base)


def setup(seed=0, N=3, K=2, **kw):
    cfg = config(**kw)
    rng = np.random.default_rng(seed)
    params = init_gat_params(cfg, rng)
    S = rng.standard_normal((N, cfg.d_node))
    T = rng.standard_normal((K, cfg.d_node))
    return cfg, params, S, T


def zero(params, suffix):
    return {k: Tensor(np.zeros(v.shape), requires_grad=True) if k.endswith(suffix) else v for k, v in params.items()}


class TestBuildGraph:
    def test_edge_count(self):
        g = build_graph(np.zeros((3, 4)), np.zeros((2, 4)))
        assert len(g.edges) == 6
        assert set(g.edges) == {(i, j) for i in range(3) for j in range(2)}

    def test_complete_bipartite_neighbors(self):
        g = build_graph(np.zeros((3, 4)), np.zeros((2, 4)))
        assert all(g.sentence_neighbors(i) == [0, 1] for i in range(3))
        assert all(g.topic_neighbors(j) == [0, 1, 2] for j in range(2))

    def test_initial_states(self):
        S, T = np.arange(12.0).reshape(3, 4), -np.arange(8.0).reshape(2, 4)
        g = build_graph(S, T)
        np.testing.assert_array_equal(g.sentence_states.data, S)
        np.testing.assert_array_equal(g.topic_states.data, T)

    def test_topics_broadcast_over_batch(self):
        g = build_graph(np.zeros((5, 3, 4)), np.ones((2, 4)))
        assert g.topic_states.shape == (5, 2, 4)

    def test_no_sentences(self):
        with pytest.raises(ContractError):
            build_graph(np.zeros((0, 4)), np.zeros((2, 4)))

    def test_dimension_mismatch(self):
        with pytest.raises(ShapeError):
            build_graph(np.zeros((3, 4)), np.zeros((2, 5)))


class TestConfig:
    def test_heads_must_divide(self):
        with pytest.raises(ContractError):
            GatConfig(d_node=6, heads_sentence=4)

    def test_concatenation_keeps_dimension(self):
        cfg = GatConfig(d_node=12, heads_sentence=6, heads_topic=4)
        assert cfg.heads_sentence * cfg.head_dim_sentence == cfg.heads_topic * cfg.head_dim_topic == 12

    def test_layers_have_distinct_parameters(self):
        params = init_gat_params(config(n_layers=2), np.random.default_rng(0))
        assert not np.array_equal(params["graph.0.sent.W_c"].data, params["graph.1.sent.W_c"].data)


class TestAttention:
    def test_zero_parameters_are_uniform(self):
        alpha = attention_scores(Tensor(np.ones((3, 2))), Tensor(np.ones((4, 2))), Tensor(np.zeros((2, 2))), Tensor(np.zeros((2, 2))))
        np.testing.assert_allclose(alpha.data, 0.25, atol=1e-15)

    def test_rows_sum_to_one(self):
        rng = np.random.default_rng(1)
        alpha = attention_scores(*(Tensor(rng.standard_normal(s) * 3) for s in [(5, 3), (4, 3), (3, 2), (3, 2)]))
        assert alpha.shape == (5, 4, 2)
        np.testing.assert_allclose(alpha.data.sum(axis=1), 1.0, atol=1e-9)

    def test_matches_concatenated_attention_vector(self):
        rng = np.random.default_rng(2)
        p, q = rng.standard_normal((3, 2)), rng.standard_normal((4, 2))
        a_self, a_nbr = rng.standard_normal((2, 1)), rng.standard_normal((2, 1))
        a = np.concatenate([a_self[:, 0], a_nbr[:, 0]])
        z = np.array([[np.concatenate([p[i], q[j]]) @ a for j in range(4)] for i in range(3)])
        z = np.where(z > 0, z, 0.2 * z)
        expected = np.exp(z) / np.exp(z).sum(1, keepdims=True)
        got = attention_scores(Tensor(p), Tensor(q), Tensor(a_self), Tensor(a_nbr)).data[..., 0]
        np.testing.assert_allclose(got, expected, rtol=1e-13)

    def test_shift_invariance(self):
        # a constant added to the target term shifts every positive logit of row i equally
        rng = np.random.default_rng(3)
        p, q = rng.uniform(1, 2, (3, 2)), rng.uniform(1, 2, (4, 2))
        a_self, a_nbr = np.abs(rng.standard_normal((2, 1))), np.abs(rng.standard_normal((2, 1)))
        base = attention_scores(Tensor(p), Tensor(q), Tensor(a_self), Tensor(a_nbr)).data
        shifted = attention_scores(Tensor(p + 5.0), Tensor(q), Tensor(a_self), Tensor(a_nbr)).data
        np.testing.assert_allclose(base, shifted, atol=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            attention_scores(Tensor(np.ones((3, 2))), Tensor(np.ones((4, 3))), Tensor(np.zeros((2, 1))), Tensor(np.zeros((2, 1))))


class TestPropagate:
    def test_zero_value_transform_gives_zero_states(self):
        cfg, params, S, T = setup(residual=False)
        g, _ = propagate_layer(build_graph(S, T), zero(params, "W_c"), cfg, "graph.0.")
        np.testing.assert_array_equal(g.sentence_states.data, 0.0)
        np.testing.assert_array_equal(g.topic_states.data, 0.0)

    def test_zero_value_transform_with_residual_keeps_states(self):
        cfg, params, S, T = setup(residual=True)
        g, _ = propagate_layer(build_graph(S, T), zero(params, "W_c"), cfg, "graph.0.")
        np.testing.assert_array_equal(g.sentence_states.data, S)
        np.testing.assert_array_equal(g.topic_states.data, T)

    def test_single_neighbor(self):
        cfg, params, S, T = setup(K=1, residual=False)
        g, att = propagate_layer(build_graph(S, T), params, cfg, "graph.0.")
        np.testing.assert_allclose(att["sentence"].data, 1.0)
        expected = np.tanh(T[0] @ params["graph.0.sent.W_c"].data)
        np.testing.assert_allclose(g.sentence_states.data, np.tile(expected, (3, 1)), rtol=1e-14)

    def test_bounded_by_neighbor_count(self):
        cfg, params, S, T = setup(seed=4, N=5, K=3, residual=False)
        for scale, bound_holds in ((3.0, np.less), (50.0, np.less_equal)):
            # at large scale tanh rounds to exactly 1 in float64, so only the closed bound survives
            big = {k: Tensor(v.data * scale) if k.endswith("W_c") else v for k, v in params.items()}
            g, _ = propagate_layer(build_graph(S * scale, T * scale), big, cfg, "graph.0.")
            assert np.all(bound_holds(np.abs(g.sentence_states.data), 3))
            assert np.all(bound_holds(np.abs(g.topic_states.data), 5))

    def test_single_head_matches_direct_aggregation(self):
        cfg, params, S, T = setup(seed=5, heads_sentence=1, heads_topic=1, residual=False)
        p = {k: v.data for k, v in params.items()}
        leaky = lambda x: np.where(x > 0, x, 0.2 * x)
        pS = np.tanh(S @ p["graph.0.f_S.W"] + p["graph.0.f_S.b"])
        pT = np.tanh(T @ p["graph.0.f_T.W"] + p["graph.0.f_T.b"])
        expected = np.zeros_like(S)
        for i in range(S.shape[0]):
            z = np.array([leaky(pS[i] @ p["graph.0.sent.a_self"][:, 0] + pT[j] @ p["graph.0.sent.a_nbr"][:, 0]) for j in range(2)])
            alpha = np.exp(z) / np.exp(z).sum()
            expected[i] = sum(np.tanh(alpha[j] * (T[j] @ p["graph.0.sent.W_c"])) for j in range(2))
        g, _ = propagate_layer(build_graph(S, T), params, cfg, "graph.0.")
        np.testing.assert_allclose(g.sentence_states.data, expected, rtol=1e-13)

    def test_heads_own_column_blocks(self):
        rng = np.random.default_rng(6)
        alpha = rng.dirichlet(np.ones(3), size=(2, 2)).transpose(0, 2, 1)  # (2 targets, 3 nbrs, 2 heads)
        H, W = rng.standard_normal((3, 4)), rng.standard_normal((4, 4))
        out = aggregate(Tensor(alpha), Tensor(H), Tensor(W)).data
        for m in range(2):
            cols = slice(2 * m, 2 * m + 2)
            direct = np.tanh(alpha[:, :, m, None] * (H @ W[:, cols])[None]).sum(1)
            np.testing.assert_allclose(out[:, cols], direct, rtol=1e-13)

    def test_standard_aggregation(self):
        rng = np.random.default_rng(7)
        alpha = rng.dirichlet(np.ones(3), size=2)[..., None]
        H, W = rng.standard_normal((3, 4)), rng.standard_normal((4, 4))
        out = aggregate(Tensor(alpha), Tensor(H), Tensor(W), standard=True).data
        np.testing.assert_allclose(out, np.tanh(alpha[..., 0] @ (H @ W)), rtol=1e-13)

    def test_synchronous_update(self):
        cfg, params, S, T = setup(seed=8, residual=False)
        g, _ = propagate_layer(build_graph(S, T), params, cfg, "graph.0.")
        # topic update computed from the old sentence states, not the new ones
        g_T_only, _ = propagate_layer(build_graph(S + 0.0, T), params, cfg, "graph.0.")
        np.testing.assert_array_equal(g.topic_states.data, g_T_only.topic_states.data)
        pT = project(T, params, "graph.0.f_T")
        pS = project(S, params, "graph.0.f_S")
        alpha_t = attention_scores(pT, pS, params["graph.0.topic.a_self"], params["graph.0.topic.a_nbr"])
        direct = aggregate(alpha_t, Tensor(S), params["graph.0.topic.W_c"])
        np.testing.assert_allclose(g.topic_states.data, direct.data, rtol=1e-14)

    def test_wrong_node_dimension(self):
        cfg, params, _, _ = setup()
        with pytest.raises(ShapeError):
            propagate_layer(build_graph(np.zeros((3, 6)), np.zeros((2, 6))), params, cfg, "graph.0.")


class TestRunGat:
    def test_one_layer_zero_value_transform(self):
        cfg, params, S, T = setup(residual=False)
        out = run_gat(build_graph(S, T), zero(params, "W_c"), cfg)
        np.testing.assert_array_equal(out.sentence_states.data, 0.0)

    @pytest.mark.parametrize("layers", [1, 2, 3])
    def test_shape_preserved(self, layers):
        cfg, params, S, T = setup(n_layers=layers)
        out = run_gat(build_graph(S, T), params, cfg)
        assert out.sentence_states.shape == S.shape
        assert len(out.attentions) == layers

    def test_attention_rows_normalized_every_layer(self):
        cfg, params, S, T = setup(seed=9, n_layers=2, N=4, K=3)
        out = run_gat(build_graph(S, T), params, cfg)
        for att in out.attentions:
            np.testing.assert_allclose(att["sentence"].data.sum(axis=-2), 1.0, atol=1e-9)
            np.testing.assert_allclose(att["topic"].data.sum(axis=-2), 1.0, atol=1e-9)

    @pytest.mark.parametrize("residual", [False, True])
    def test_sentence_permutation_equivariance(self, residual):
        cfg, params, S, T = setup(seed=10, n_layers=2, N=5, residual=residual)
        perm = [3, 0, 4, 1, 2]
        a = run_gat(build_graph(S, T), params, cfg)
        b = run_gat(build_graph(S[perm], T), params, cfg)
        np.testing.assert_allclose(b.sentence_states.data, a.sentence_states.data[perm], rtol=1e-12, atol=1e-14)
        np.testing.assert_allclose(b.topic_states.data, a.topic_states.data, rtol=1e-12, atol=1e-14)

    def test_batched_matches_single(self):
        cfg, params, S, T = setup(seed=11, n_layers=2)
        S2 = np.random.default_rng(12).standard_normal(S.shape)
        batched = run_gat(build_graph(np.stack([S, S2]), T), params, cfg).sentence_states.data
        for b, s in enumerate([S, S2]):
            np.testing.assert_allclose(batched[b], run_gat(build_graph(s, T), params, cfg).sentence_states.data, rtol=1e-13)

    @pytest.mark.parametrize("seed", range(3))
    @pytest.mark.parametrize("residual", [False, True])
    def test_gradients(self, seed, residual):
        cfg, params, S, T = setup(seed=seed, N=2, K=2, n_layers=2, residual=residual)
        names = list(params)
        w = np.random.default_rng(seed + 50).standard_normal((2, 4))

        def f(s, t, *leaves):
            out = run_gat(build_graph(s, t), dict(zip(names, leaves)), cfg)
            return reduce_sum(tanh(mul(out.sentence_states, w)))

        assert gradcheck(f, [Tensor(S), Tensor(T)] + [params[n] for n in names]) <= 1e-4


class TestSentenceGraph:
    def test_self_loops_over_all_sentences(self):
        cfg, params, S, _ = setup(seed=13, N=4)
        out = run_sentence_gat(S, params, cfg)
        alpha = out.attentions[0]["sentence"].data
        assert alpha.shape == (4, 4, 2)
        np.testing.assert_allclose(alpha.sum(axis=1), 1.0, atol=1e-12)
        assert out.topic_states is None

    def test_permutation_equivariance(self):
        cfg, params, S, _ = setup(seed=14, N=4, n_layers=2)
        perm = [2, 3, 1, 0]
        a = run_sentence_gat(S, params, cfg).sentence_states.data
        b = run_sentence_gat(S[perm], params, cfg).sentence_states.data
        np.testing.assert_allclose(b, a[perm], rtol=1e-12, atol=1e-14)
