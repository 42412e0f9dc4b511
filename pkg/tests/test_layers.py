"""The traverse layer against dense straight-loop oracles, plus its reductions."""

import numpy as np
import pytest

from sttraverse.engine import Tensor
from sttraverse.errors import ConfigError
from sttraverse.graph import build_traverse_graph, from_edge_list
from sttraverse.layers import (
    PostprocessParams,
    PreprocessParams,
    attention,
    flatten_hidden,
    neighbor_context,
    postprocess,
    preprocess,
    temporal_context,
    traverse_layer,
    unflatten_hidden,
)
from sttraverse.model import ModelConfig, init_params

from oracles import (
    DenseLayerParams,
    attention_weights,
    dense_spatial_attention,
    dense_temporal_attention,
    dense_traverse_layer,
)


def make_layer(seed=0, d=5, n_nodes=4):
    cfg = ModelConfig(n_nodes=n_nodes, input_dim=1, n_layers=1, hidden=d, window=2,
                      input_len=3, horizon=2, dropout=0.0, seed=seed)
    return init_params(cfg).layers[0]


def flat(h):
    """[N, p, d] single sample -> Tensor [1, N*p, d]."""
    n, p, d = h.shape
    return Tensor(h.reshape(1, n * p, d))


def unflat(t, n, p):
    return t.values.reshape(n, p, -1)


class TestAttention:
    def test_single_key_weight_one(self):
        layer = make_layer()
        rng = np.random.default_rng(0)
        w = attention(Tensor(rng.standard_normal(5)), Tensor(rng.standard_normal((1, 5))),
                      layer.self_att)
        np.testing.assert_allclose(w.values, [1.0])

    def test_identical_keys_uniform(self):
        layer = make_layer()
        rng = np.random.default_rng(1)
        key = rng.standard_normal(5)
        keys = np.tile(key, (4, 1))
        w = attention(Tensor(rng.standard_normal(5)), Tensor(keys), layer.self_att)
        np.testing.assert_allclose(w.values, np.full(4, 0.25), atol=1e-12)

    def test_matches_scalar_oracle(self):
        layer = make_layer(seed=3)
        rng = np.random.default_rng(2)
        query = rng.standard_normal(5)
        keys = rng.standard_normal((3, 5))
        w = attention(Tensor(query), Tensor(keys), layer.nbr_att, slope=0.2)
        expected = attention_weights(query, list(keys),
                                     layer.nbr_att.query_proj.values,
                                     layer.nbr_att.key_proj.values,
                                     layer.nbr_att.score.values, slope=0.2)
        np.testing.assert_allclose(w.values, expected, atol=1e-9)


class TestTemporalContext:
    def test_window_zero_is_plain_transform(self):
        layer = make_layer()
        g = from_edge_list(2, [(0, 1)])
        tg = build_traverse_graph(g, p=3, window=0)
        rng = np.random.default_rng(3)
        h = rng.standard_normal((2, 3, 5))
        ctx, _ = temporal_context(flat(h), tg, layer)
        expected = h @ layer.self_value.values.T
        np.testing.assert_allclose(unflat(ctx, 2, 3), expected, atol=1e-12)

    def test_constant_history_collapses(self):
        layer = make_layer()
        g = from_edge_list(1, [])
        tg = build_traverse_graph(g, p=4, window=3)
        h = np.tile(np.array([0.3, -1.2, 0.5, 2.0, 0.1]), (1, 4, 1))
        ctx, _ = temporal_context(flat(h), tg, layer)
        expected = h[0] @ layer.self_value.values.T
        np.testing.assert_allclose(unflat(ctx, 1, 4), expected.reshape(1, 4, 5), atol=1e-9)

    def test_matches_dense_loop(self):
        layer = make_layer(seed=5)
        g = from_edge_list(1, [])
        tg = build_traverse_graph(g, p=3, window=2)
        rng = np.random.default_rng(4)
        h = rng.standard_normal((1, 3, 5))
        ctx, _ = temporal_context(flat(h), tg, layer)
        dense = DenseLayerParams(layer)
        for t in range(3):
            lags = range(min(2, t) + 1)
            keys = [h[0, t - m] for m in lags]
            weights = attention_weights(h[0, t], keys, *dense.att["self"])
            expected = sum(w * (dense.w_self @ k) for w, k in zip(weights, keys))
            np.testing.assert_allclose(unflat(ctx, 1, 3)[0, t], expected, atol=1e-9)


class TestNeighborContext:
    def test_constant_neighbor_history(self):
        layer = make_layer()
        g = from_edge_list(2, [(0, 1)])
        tg = build_traverse_graph(g, p=4, window=3)
        rng = np.random.default_rng(5)
        h = rng.standard_normal((2, 4, 5))
        h[0, :, :] = np.array([1.0, 2.0, -0.5, 0.25, 0.0])   # node 0 constant in time
        ctx, _ = neighbor_context(flat(h), tg, layer)
        expected = h[0, 0] @ layer.nbr_value.values.T
        for k in range(tg.n_pairs):
            np.testing.assert_allclose(ctx.values[0, k], expected, atol=1e-9)

    def test_window_zero(self):
        layer = make_layer()
        g = from_edge_list(2, [(0, 1)])
        tg = build_traverse_graph(g, p=3, window=0)
        rng = np.random.default_rng(6)
        h = rng.standard_normal((2, 3, 5))
        ctx, _ = neighbor_context(flat(h), tg, layer)
        expected = h[0] @ layer.nbr_value.values.T   # source node 0 at each step
        np.testing.assert_allclose(ctx.values[0], expected, atol=1e-12)

    def test_matches_dense_loop(self):
        layer = make_layer(seed=7)
        g = from_edge_list(2, [(0, 1), (1, 0)])
        tg = build_traverse_graph(g, p=4, window=3)
        rng = np.random.default_rng(7)
        h = rng.standard_normal((2, 4, 5))
        ctx, _ = neighbor_context(flat(h), tg, layer)
        dense = DenseLayerParams(layer)
        for k in range(tg.n_pairs):
            u, v, t = tg.pair_u[k], tg.pair_v[k], tg.pair_t[k]
            lags = range(min(3, t) + 1)
            keys = [h[u, t - m] for m in lags]
            weights = attention_weights(h[v, t], keys, *dense.att["nbr"])
            expected = sum(w * (dense.w_nbr @ kk) for w, kk in zip(weights, keys))
            np.testing.assert_allclose(ctx.values[0, k], expected, atol=1e-9)


class TestTraverseLayer:
    def test_isolated_node_reduces_to_temporal_attention(self):
        layer = make_layer(seed=11)
        g = from_edge_list(3, [])
        tg = build_traverse_graph(g, p=4, window=2)
        rng = np.random.default_rng(8)
        h = rng.standard_normal((3, 4, 5))
        out, _ = traverse_layer(flat(h), tg, layer)
        expected = dense_temporal_attention(h, 2, DenseLayerParams(layer))
        np.testing.assert_allclose(unflat(out, 3, 4), expected, atol=1e-9)

    def test_window_zero_reduces_to_spatial_attention(self):
        layer = make_layer(seed=12)
        g = from_edge_list(3, [(0, 1), (1, 2), (2, 0), (0, 2)])
        tg = build_traverse_graph(g, p=3, window=0)
        rng = np.random.default_rng(9)
        h = rng.standard_normal((3, 3, 5))
        out, _ = traverse_layer(flat(h), tg, layer)
        expected = dense_spatial_attention(h, g.in_neighbors, DenseLayerParams(layer))
        np.testing.assert_allclose(unflat(out, 3, 3), expected, atol=1e-9)

    def test_triangle_matches_dense_quadruple_loop(self):
        layer = make_layer(seed=13)
        g = from_edge_list(3, [(0, 1), (1, 2), (2, 0)], symmetrize=True)
        tg = build_traverse_graph(g, p=2, window=1)
        rng = np.random.default_rng(10)
        h = rng.standard_normal((3, 2, 5))
        out, _ = traverse_layer(flat(h), tg, layer)
        expected = dense_traverse_layer(h, g.in_neighbors, 1, DenseLayerParams(layer))
        np.testing.assert_allclose(unflat(out, 3, 2), expected, atol=1e-9)

    @pytest.mark.parametrize("case", range(6))
    def test_random_cases_match_dense_oracle(self, case):
        rng = np.random.default_rng(100 + case)
        n = int(rng.integers(2, 6))
        p = int(rng.integers(2, 5))
        window = int(rng.integers(0, 4))
        pairs = [(u, v) for u in range(n) for v in range(n)
                 if u != v and rng.random() < 0.5]
        g = from_edge_list(n, pairs)
        layer = make_layer(seed=200 + case, n_nodes=n)
        tg = build_traverse_graph(g, p=p, window=window)
        h = rng.standard_normal((n, p, 5))
        out, _ = traverse_layer(flat(h), tg, layer)
        expected = dense_traverse_layer(h, g.in_neighbors, window, DenseLayerParams(layer))
        np.testing.assert_allclose(unflat(out, n, p), expected, atol=1e-9)

    def test_attention_weights_sum_to_one_per_segment(self):
        layer = make_layer(seed=14)
        g = from_edge_list(4, [(0, 1), (1, 2), (2, 3), (3, 0)], symmetrize=True)
        tg = build_traverse_graph(g, p=3, window=2)
        rng = np.random.default_rng(11)
        h = rng.standard_normal((2, 12, 5))   # batch of 2
        _, rec = traverse_layer(Tensor(h), tg, layer, record=True)
        for weights, seg in ((rec.self_weights, tg.self_index),
                             (rec.nbr_weights, tg.nbr_index),
                             (rec.outer_weights, tg.outer_index)):
            sums = np.add.reduceat(weights, seg.offsets[:-1], axis=-1)
            np.testing.assert_allclose(sums, np.ones_like(sums), atol=1e-9)

    def test_uniform_mode_weights(self):
        layer = make_layer(seed=15)
        g = from_edge_list(2, [(0, 1)])
        tg = build_traverse_graph(g, p=2, window=1)
        rng = np.random.default_rng(12)
        h = rng.standard_normal((1, 4, 5))
        _, rec = traverse_layer(Tensor(h), tg, layer, uniform=True, record=True)
        expected = np.repeat(1.0 / tg.self_index.counts, tg.self_index.counts)
        np.testing.assert_allclose(rec.self_weights[0], expected)

    def test_permutation_equivariance(self):
        rng = np.random.default_rng(13)
        n, p, d = 4, 3, 5
        pairs = [(0, 1), (1, 2), (2, 3), (0, 3)]
        perm = np.array([2, 0, 3, 1])   # new label of each old node
        g = from_edge_list(n, pairs)
        g_perm = from_edge_list(n, [(perm[u], perm[v]) for u, v in pairs])
        layer = make_layer(seed=16, n_nodes=n)
        h = rng.standard_normal((n, p, d))
        h_perm = np.empty_like(h)
        h_perm[perm] = h
        out, _ = traverse_layer(flat(h), build_traverse_graph(g, p, 2), layer)
        out_perm, _ = traverse_layer(flat(h_perm), build_traverse_graph(g_perm, p, 2), layer)
        np.testing.assert_allclose(unflat(out_perm, n, p)[perm], unflat(out, n, p),
                                   atol=1e-9)

    def test_convexity_of_neighbor_context_scalar(self):
        # with d=1 each context must lie between min and max of W_nbr * history
        layer = make_layer(seed=17, d=1)
        g = from_edge_list(2, [(0, 1)])
        tg = build_traverse_graph(g, p=5, window=4)
        rng = np.random.default_rng(14)
        h = rng.standard_normal((2, 5, 1))
        ctx, _ = neighbor_context(flat(h), tg, layer)
        w = layer.nbr_value.values[0, 0]
        for k in range(tg.n_pairs):
            u, t = tg.pair_u[k], tg.pair_t[k]
            vals = w * h[u, max(0, t - 4):t + 1, 0]
            assert vals.min() - 1e-9 <= ctx.values[0, k, 0] <= vals.max() + 1e-9

    def test_dimension_mismatch_is_config_error(self):
        layer = make_layer(d=5)
        g = from_edge_list(2, [(0, 1)])
        tg = build_traverse_graph(g, p=2, window=1)
        with pytest.raises(ConfigError):
            traverse_layer(Tensor(np.zeros((1, 4, 7))), tg, layer)


class TestPrePost:
    def test_preprocess_identity_shape_adds_residual(self):
        d = 4
        pre = PreprocessParams(weight=Tensor(np.eye(d), requires_grad=True),
                               bias=Tensor(np.full(d, 0.5), requires_grad=True))
        rng = np.random.default_rng(15)
        x = rng.standard_normal((2, 3, d, 5))
        out = preprocess(Tensor(x), pre)
        np.testing.assert_allclose(out.values, 2 * x + 0.5, atol=1e-12)

    def test_preprocess_zero_input_gives_bias(self):
        pre = PreprocessParams(weight=Tensor(np.zeros((2, 4)), requires_grad=True),
                               bias=Tensor(np.array([1., 2., 3., 4.]), requires_grad=True),
                               residual_proj=Tensor(np.zeros((2, 4)), requires_grad=True))
        out = preprocess(Tensor(np.zeros((1, 2, 2, 3))), pre)
        expected = np.tile(np.array([1., 2., 3., 4.])[None, None, :, None], (1, 2, 1, 3))
        np.testing.assert_allclose(out.values, expected)

    def test_preprocess_matches_matmul_oracle(self):
        rng = np.random.default_rng(16)
        w = rng.standard_normal((3, 6))
        b = rng.standard_normal(6)
        proj = rng.standard_normal((3, 6))
        pre = PreprocessParams(weight=Tensor(w), bias=Tensor(b),
                               residual_proj=Tensor(proj))
        x = rng.standard_normal((2, 4, 3, 5))
        out = preprocess(Tensor(x), pre)
        for bi in range(2):
            for n in range(4):
                for t in range(5):
                    expected = x[bi, n, :, t] @ w + b + x[bi, n, :, t] @ proj
                    np.testing.assert_allclose(out.values[bi, n, :, t], expected,
                                               atol=1e-12)

    def test_postprocess_two_stage_oracle(self):
        rng = np.random.default_rng(17)
        d, p, q = 4, 5, 3
        params = PostprocessParams(
            kernel=Tensor(rng.standard_normal((d, d, p))),
            conv_bias=Tensor(rng.standard_normal(d)),
            weight=Tensor(rng.standard_normal((d, q))),
            bias=Tensor(rng.standard_normal(q)))
        h = rng.standard_normal((2, 3, d, p))
        out = postprocess(Tensor(h), params)
        conv = np.einsum("bnct,oct->bno", h, params.kernel.values) + params.conv_bias.values
        expected = conv @ params.weight.values + params.bias.values
        np.testing.assert_allclose(out.values, expected, atol=1e-12)

    def test_postprocess_p1_identity(self):
        d = 3
        params = PostprocessParams(
            kernel=Tensor(np.eye(d)[:, :, None]),
            conv_bias=Tensor(np.zeros(d)),
            weight=Tensor(np.eye(d)),
            bias=Tensor(np.zeros(d)))
        rng = np.random.default_rng(18)
        h = rng.standard_normal((2, 2, d, 1))
        out = postprocess(Tensor(h), params)
        np.testing.assert_allclose(out.values, h[..., 0], atol=1e-12)

    def test_flatten_roundtrip(self):
        rng = np.random.default_rng(19)
        h = rng.standard_normal((2, 3, 4, 5))
        back = unflatten_hidden(flatten_hidden(Tensor(h)), 3, 5)
        np.testing.assert_array_equal(back.values, h)
