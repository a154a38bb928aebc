import math

import numpy as np
import pytest

from promptgnn import autodiff as ad
from promptgnn.autodiff import Tensor
from promptgnn.errors import ConfigError, ContractError, DimensionError
from promptgnn.graphdata import Graph
from promptgnn.prompting import (
    AugmentConfig,
    PromptParams,
    augment,
    make_pair,
    prompt,
)

from helpers import assert_grads_close, fd_grad


def make_graph(n=3, edges=((0, 1), (1, 2)), d=4, seed=0):
    rng = np.random.default_rng(seed)
    return Graph(n=n, edges=list(edges), x=rng.uniform(-1, 1, (n, d)), y=1,
                 node_y=np.zeros(n, dtype=np.int64))


class TestAugment:
    def test_zero_probability_is_identity(self):
        g = make_graph()
        out = augment(g, 0.0, "feature_mask", np.random.default_rng(0))
        assert np.array_equal(np.asarray(out.x), np.asarray(g.x))
        out = augment(g, 0.0, "edge_drop", np.random.default_rng(0))
        assert out.edges == g.edges

    def test_full_feature_mask_zeroes_everything(self):
        out = augment(make_graph(), 1.0, "feature_mask", np.random.default_rng(0))
        assert np.all(np.asarray(out.x) == 0.0)

    def test_full_edge_drop(self):
        out = augment(make_graph(), 1.0, "edge_drop", np.random.default_rng(0))
        assert out.edges == []

    def test_masked_fraction_concentrates(self):
        g = Graph(n=2, edges=[(0, 1)], x=np.ones((2, 10000)))
        out = augment(g, 0.5, "feature_mask", np.random.default_rng(1))
        frac = float((np.asarray(out.x)[0] == 0.0).mean())
        assert 0.48 <= frac <= 0.52

    def test_labels_and_structure_untouched(self):
        g = make_graph()
        out = augment(g, 0.7, "feature_mask", np.random.default_rng(2))
        assert out.y == g.y
        assert out.edges == g.edges
        assert np.array_equal(out.node_y, g.node_y)

    def test_deterministic_given_stream(self):
        g = make_graph()
        a = augment(g, 0.5, "feature_mask", np.random.default_rng(3))
        b = augment(g, 0.5, "feature_mask", np.random.default_rng(3))
        assert np.array_equal(np.asarray(a.x), np.asarray(b.x))

    def test_probability_range_checked(self):
        with pytest.raises(ContractError):
            augment(make_graph(), 1.5, "feature_mask", np.random.default_rng(0))


class TestAugmentConfig:
    def test_weak_not_below_strong_warns(self):
        with pytest.warns(UserWarning):
            AugmentConfig("feature_mask", p_weak=0.4, p_strong=0.3)

    def test_bad_kind_rejected(self):
        with pytest.raises(ConfigError):
            AugmentConfig("node_drop", 0.1, 0.3)

    def test_bad_probability_rejected(self):
        with pytest.raises(ConfigError):
            AugmentConfig("feature_mask", -0.1, 0.3)


class TestPrompt:
    def test_single_token_shifts_exactly(self):
        g = make_graph(d=4)
        token = np.array([[0.5, -1.0, 2.0, 0.0]])
        params = PromptParams(Tensor(token, requires_grad=True))
        out = prompt(g, params)
        assert np.allclose(out.x.data, np.asarray(g.x) + token, atol=1e-15)

    def test_zero_features_mix_tokens_uniformly(self):
        g = Graph(n=2, edges=[(0, 1)], x=np.zeros((2, 3)))
        tokens = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
        params = PromptParams(Tensor(tokens, requires_grad=True))
        out = prompt(g, params)
        assert np.allclose(out.x.data, tokens.mean(axis=0), atol=1e-15)

    def test_two_token_hand_computation(self):
        g = Graph(n=1, edges=[], x=np.array([[1.0, 0.0]]))
        tokens = np.array([[1.0, 0.0], [0.0, 1.0]])
        params = PromptParams(Tensor(tokens, requires_grad=True))
        out = prompt(g, params)
        e = math.e
        expected = [[1.0 + e / (e + 1.0), 1.0 / (e + 1.0)]]
        assert np.abs(out.x.data - expected).max() < 1e-12

    def test_structure_and_labels_untouched(self):
        g = make_graph()
        rng = np.random.default_rng(4)
        out = prompt(g, PromptParams.init(5, 4, rng))
        assert out.n == g.n
        assert out.edges == g.edges
        assert out.y == g.y
        assert np.array_equal(out.node_y, g.node_y)

    def test_zero_tokens_are_identity(self):
        g = make_graph()
        out = prompt(g, PromptParams.zeros(4, n_tokens=3))
        assert np.array_equal(out.x.data, np.asarray(g.x))

    def test_dim_mismatch(self):
        with pytest.raises(DimensionError):
            prompt(make_graph(d=4), PromptParams.zeros(3))

    def test_gradient_wrt_tokens_matches_finite_differences(self):
        g = make_graph(d=4, seed=5)
        params = PromptParams.init(3, 4, np.random.default_rng(6))
        weights = np.random.default_rng(7).uniform(-1, 1, (g.n, 4))

        def loss_value():
            x = np.asarray(g.x)
            scores = x @ params.tokens.data.T
            e = np.exp(scores - scores.max(axis=1, keepdims=True))
            alpha = e / e.sum(axis=1, keepdims=True)
            return float((weights * (x + alpha @ params.tokens.data)).sum())

        out = prompt(g, params)
        ad.backward(ad.reduce_sum(ad.mul(Tensor(weights), out.x)))
        numeric = fd_grad(loss_value, params.tokens.data)
        assert_grads_close(params.tokens.grad, numeric, atol=1e-7, rtol=1e-4)


class TestMakePair:
    def test_inert_configuration_reproduces_input(self):
        g = make_graph()
        with pytest.warns(UserWarning):
            cfg = AugmentConfig("feature_mask", 0.0, 0.0)
        weak, prompted = make_pair(g, cfg, PromptParams.zeros(4),
                                   np.random.default_rng(0))
        assert np.array_equal(np.asarray(weak.x), np.asarray(g.x))
        assert np.array_equal(prompted.x.data, np.asarray(g.x))

    def test_reproducible_given_seed(self):
        g = make_graph()
        cfg = AugmentConfig("feature_mask", 0.1, 0.5)
        params = PromptParams.init(2, 4, np.random.default_rng(1))
        w1, p1 = make_pair(g, cfg, params, np.random.default_rng(2))
        w2, p2 = make_pair(g, cfg, params, np.random.default_rng(2))
        assert np.array_equal(np.asarray(w1.x), np.asarray(w2.x))
        assert np.array_equal(p1.x.data, p2.x.data)

    def test_full_strong_mask_leaves_token_mixture(self):
        g = make_graph()
        cfg = AugmentConfig("feature_mask", 0.0, 1.0)
        params = PromptParams.init(3, 4, np.random.default_rng(3))
        _, prompted = make_pair(g, cfg, params, np.random.default_rng(4))
        assert np.allclose(prompted.x.data,
                           np.tile(params.tokens.data.mean(0), (g.n, 1)),
                           atol=1e-15)


def test_prompt_checkpoint_round_trip(tmp_path):
    params = PromptParams.init(4, 6, np.random.default_rng(8))
    params.save(tmp_path / "prompt.json")
    again = PromptParams.load(tmp_path / "prompt.json")
    assert np.array_equal(params.tokens.data, again.tokens.data)
    assert again.tokens.requires_grad
