"""Pooling, the two-stack architecture, baselines, and the combined bound."""

import json

import numpy as np
import pytest

from hennkit.errors import ConfigError
from hennkit.gnn import GnnModel, random_gnn
from hennkit.henn import (
    HennModel,
    LocalizerContext,
    MaxPool,
    SourceLocalizer,
    baseline_forward,
    henn_forward,
    henn_transfer_bound,
    localizer_from_dict,
    localizer_to_dict,
    multi_representation_bound,
    pool_edge_to_node,
    pool_node_to_edge,
)
from hennkit.hypergraph import Hypergraph, gso, incidence
from hennkit.spectral import spectral_similarity


def chain():
    return Hypergraph(3, [[0, 1], [1, 2]])


class TestPooling:
    def test_pair_max(self):
        h = Hypergraph(2, [[0, 1]])
        out = pool_node_to_edge(np.array([3.0, 5.0]), incidence(h))
        assert np.array_equal(out, [5.0])

    def test_constant_signal_stays_constant(self):
        h = chain()
        out = pool_node_to_edge(np.full(3, 2.5), incidence(h))
        assert np.array_equal(out, [2.5, 2.5])

    def test_membership_enumeration_oracle(self):
        h = chain()
        x = np.array([1.0, 4.0, 2.0])
        # oracle: enumerate members per hyperedge
        expected = [max(x[i] for i in e) for e in h.edges]
        assert np.array_equal(pool_node_to_edge(x, incidence(h)), expected)

    def test_edge_to_node(self):
        h = chain()
        y = np.array([1.0, 7.0])
        expected = [1.0, 7.0, 7.0]  # node 1 sits in both hyperedges
        assert np.array_equal(pool_edge_to_node(y, incidence(h)), expected)

    def test_multifeature_shapes(self):
        h = chain()
        x = np.arange(6, dtype=float).reshape(3, 2)
        out = pool_node_to_edge(x, incidence(h))
        assert out.shape == (2, 2)

    def test_nonexpansive_sup_norm(self):
        rng = np.random.default_rng(0)
        h = Hypergraph(6, [[0, 1, 2], [2, 3], [3, 4, 5], [0, 5]])
        b = incidence(h)
        for _ in range(200):
            x = rng.standard_normal(6)
            y = rng.standard_normal(6)
            gap = np.abs(pool_node_to_edge(x, b) - pool_node_to_edge(y, b)).max()
            assert gap <= np.abs(x - y).max() + 1e-15

    def test_gradient_routes_to_first_argmax(self):
        pool = MaxPool([np.array([0, 1, 2])], 3)
        x = np.array([2.0, 5.0, 5.0])[:, None, None]
        out, first = pool.forward_with_argmax(x)
        assert out[0, 0, 0] == 5.0
        dx = pool.backward(first, np.ones((1, 1, 1)), x.shape)
        assert np.array_equal(dx[:, 0, 0], [0.0, 1.0, 0.0])  # ties pick index 1

    def test_shape_mismatch(self):
        with pytest.raises(ConfigError, match="rows"):
            pool_node_to_edge(np.zeros(4), incidence(chain()))


class TestHennForward:
    def test_zero_coefficients_zero_logits(self):
        h = chain()
        model = HennModel(
            GnnModel([np.zeros((2, 1, 2))], "relu"),
            GnnModel([np.zeros((2, 2, 1))], "relu"),
        )
        out = henn_forward(model, h, np.array([1.0, 2.0, 3.0]))
        assert np.array_equal(out, np.zeros((2, 1)))

    def test_identity_stacks_equal_pooled_input(self):
        h = chain()
        eye = np.zeros((1, 1, 1))
        eye[0, 0, 0] = 1.0
        model = HennModel(GnnModel([eye], "identity"), GnnModel([eye.copy()], "identity"))
        x = np.array([1.0, 4.0, 2.0])
        out = henn_forward(model, h, x)
        assert np.array_equal(out[:, 0], pool_node_to_edge(x, incidence(h)))

    def test_two_node_hand_oracle(self):
        # one hyperedge {0,1}: clique GSO = [[1,1],[1,1]], line GSO = [[1]]
        h = Hypergraph(2, [[0, 1]])
        node_layer = np.zeros((2, 1, 1))
        node_layer[0, 0, 0] = 0.25  # h0 * x
        node_layer[1, 0, 0] = 0.5  # h1 * S x
        edge_layer = np.zeros((2, 1, 1))
        edge_layer[0, 0, 0] = 1.0
        edge_layer[1, 0, 0] = 2.0  # 1 + 2*1 = 3 on the line side
        model = HennModel(GnnModel([node_layer], "identity"), GnnModel([edge_layer], "identity"))
        x = np.array([1.0, 3.0])
        node_out = 0.25 * x + 0.5 * (np.ones((2, 2)) @ x)
        pooled = node_out.max()
        expected = 1.0 * pooled + 2.0 * 1.0 * pooled
        out = henn_forward(model, h, x)
        assert np.allclose(out[:, 0], [expected])

    def test_width_mismatch_rejected(self):
        with pytest.raises(ConfigError, match="width"):
            HennModel(GnnModel([np.zeros((1, 1, 3))]), GnnModel([np.zeros((1, 2, 1))]))

    def test_consistent_relabeling_equivariance(self):
        rng = np.random.default_rng(1)
        h = Hypergraph(6, [[0, 1, 2], [2, 3], [3, 4, 5], [0, 5]])
        model = HennModel(
            random_gnn((1, 3), 2, rng, "relu"), random_gnn((3, 1), 2, rng, "relu")
        )
        x = rng.standard_normal(6)
        out = henn_forward(model, h, x)
        # relabel nodes (hyperedge order is preserved by construction)
        node_perm = rng.permutation(6)
        hp = h.permute_nodes(node_perm)
        xp = np.empty_like(x)
        xp[node_perm] = x
        assert np.max(np.abs(henn_forward(model, hp, xp) - out)) <= 1e-10
        # relabel hyperedges: logits move with them
        edge_perm = rng.permutation(h.m)
        hq = h.permute_edges(edge_perm)
        out_q = henn_forward(model, hq, x)
        assert np.max(np.abs(out_q[edge_perm] - out)) <= 1e-10


class TestBounds:
    def test_all_zero_epsilons(self):
        assert multi_representation_bound([2, 2], [3, 3], [0.0, 0.0], 1.0) == 0.0

    def test_single_representation_reduces_to_gnn_bound(self):
        # r=1: C L eps f^L
        assert multi_representation_bound([2], [3], [0.01], 2.0) == pytest.approx(
            2.0 * 2 * 0.01 * 9
        )

    def test_two_representation_example(self):
        # r=2, C=1, L=(1,1), f=(2,2), eps=(0.01,0.02): product term 4
        value = multi_representation_bound([1, 1], [2, 2], [0.01, 0.02], 1.0)
        assert value == pytest.approx(0.01 * 4 + 0.02 * 4)

    def test_model_level_wrapper(self):
        rng = np.random.default_rng(2)
        model = HennModel(
            random_gnn((1, 2), 1, rng), random_gnn((2, 1), 1, rng)
        )
        value = henn_transfer_bound(model, 0.01, 0.02, 1.0)
        assert value == pytest.approx(multi_representation_bound([1, 1], [2, 2], [0.01, 0.02], 1.0))

    def test_length_mismatch(self):
        with pytest.raises(ConfigError, match="length"):
            multi_representation_bound([1], [2, 2], [0.1], 1.0)


class TestBaselines:
    def test_two_uniform_clique_matches_plain_gnn(self):
        # all hyperedges of size 2: the clique GSO equals the graph GSO, so
        # the baseline equals a plain GNN followed by pooling
        rng = np.random.default_rng(3)
        h = Hypergraph(4, [[0, 1], [1, 2], [2, 3], [0, 3]])
        model = random_gnn((1, 2, 1), 2, rng, "relu")
        x = rng.standard_normal(4)
        from hennkit.gnn import forward

        direct = forward(model, gso(h, "clique-henn"), x[:, None])
        pooled = pool_node_to_edge(direct, incidence(h))
        assert np.array_equal(baseline_forward("clique", h, model, x), pooled)

    def test_zero_weights_uniform_logits(self):
        h = chain()
        model = GnnModel([np.zeros((2, 1, 1))], "relu")
        out = baseline_forward("hgnn", h, model, np.array([1.0, 2.0, 3.0]))
        assert np.all(out == out[0])

    def test_line_baseline_hand_oracle(self):
        h = chain()
        layer = np.zeros((1, 1, 1))
        layer[0, 0, 0] = 2.0
        model = GnnModel([layer], "identity")
        x = np.array([1.0, 4.0, 2.0])
        expected = 2.0 * pool_node_to_edge(x, incidence(h))
        assert np.allclose(baseline_forward("line", h, model, x)[:, 0], expected)

    def test_unknown_kind(self):
        with pytest.raises(ConfigError, match="kind"):
            baseline_forward("star", chain(), GnnModel([np.ones((1, 1, 1))]), np.zeros(3))


class TestSourceLocalizer:
    def make_ctx(self):
        h = Hypergraph(
            8,
            [[0, 1, 2], [2, 3], [3, 4, 5], [0, 5], [5, 6, 7], [1, 7], [4, 6], [2, 6], [0, 7], [1, 3]],
        )
        return LocalizerContext(h)

    @pytest.mark.parametrize("arch", ["henn", "clique", "line", "hgnn"])
    def test_gradients_match_finite_differences(self, arch):
        rng = np.random.default_rng(4)
        ctx = self.make_ctx()
        candidates = np.arange(10)
        from hennkit.train import TrainConfig, build_localizer

        model = build_localizer(arch, candidates, TrainConfig(features=2, taps=2, nonlinearity="tanh"), rng)
        signals = rng.standard_normal((3, 8))
        x = np.ascontiguousarray(signals.T)[:, :, None]
        dlogits = rng.standard_normal((3, 10))

        logits, state = model.forward_full(ctx, x)
        grads = model.backward_full(ctx, state, dlogits)

        params = model.parameters()
        step = 1e-6
        for pi, p in enumerate(params):
            it = np.nditer(p, flags=["multi_index"])
            while not it.finished:
                idx = it.multi_index
                p[idx] += step
                up = float(np.sum(model.forward_full(ctx, x)[0] * dlogits))
                p[idx] -= 2 * step
                down = float(np.sum(model.forward_full(ctx, x)[0] * dlogits))
                p[idx] += step
                fd = (up - down) / (2 * step)
                assert abs(grads[pi][idx] - fd) < 1e-4 * max(1.0, abs(fd))
                it.iternext()

    def test_logits_shape(self):
        rng = np.random.default_rng(5)
        ctx = self.make_ctx()
        from hennkit.train import TrainConfig, build_localizer

        model = build_localizer("henn", np.arange(10), TrainConfig(features=3, taps=2), rng)
        out = model.logits(ctx, rng.standard_normal((4, 8)))
        assert out.shape == (4, 10)

    def test_checkpoint_round_trip(self):
        rng = np.random.default_rng(6)
        from hennkit.train import TrainConfig, build_localizer

        model = build_localizer("henn", np.arange(10), TrainConfig(features=2, taps=1), rng)
        payload = json.loads(json.dumps(localizer_to_dict(model)))
        back = localizer_from_dict(payload)
        assert back.architecture == "henn"
        for (_, a), (_, b) in zip(back.stacks(), model.stacks()):
            for ha, hb in zip(a.layers, b.layers):
                assert np.array_equal(ha, hb)

    def test_empirical_multi_representation_bound(self):
        # perturb the hypergraph weights; measured deviations stay under the
        # combined certificate plus second-order slack
        rng = np.random.default_rng(7)
        h = self.make_ctx().hypergraph
        model = HennModel(
            random_gnn((1, 2), 1, rng, "tanh"), random_gnn((2, 1), 1, rng, "tanh")
        )
        s_c, s_l = gso(h, "clique-henn"), gso(h, "line-henn")
        for trial in range(20):
            hp = Hypergraph(h.n, h.edges, h.weights * (1 + 0.02 * rng.uniform(-1, 1, h.m)))
            sp_c, sp_l = gso(hp, "clique-henn"), gso(hp, "line-henn")
            eps_c = spectral_similarity(s_c, sp_c, certify=False).epsilon
            eps_l = spectral_similarity(s_l, sp_l, certify=False).epsilon
            from hennkit.filters import spectral_hull
            from hennkit.gnn import max_il_constant, normalize_model
            from hennkit.spectral import eigendecompose

            eigs = np.concatenate(
                [
                    eigendecompose(s_c).eigenvalues,
                    eigendecompose(sp_c).eigenvalues,
                    eigendecompose(s_l).eigenvalues,
                    eigendecompose(sp_l).eigenvalues,
                ]
            )
            norm_model = HennModel(
                normalize_model(model.node_stack, eigs),
                normalize_model(model.edge_stack, eigs),
                model.candidates,
            )
            c = max(
                max_il_constant(norm_model.node_stack, eigs.min(), eigs.max()),
                max_il_constant(norm_model.edge_stack, eigs.min(), eigs.max()),
            )
            bound = henn_transfer_bound(norm_model, eps_c, eps_l, c)
            x = rng.standard_normal(h.n)
            x /= np.linalg.norm(x)
            dev = np.linalg.norm(henn_forward(norm_model, h, x) - henn_forward(norm_model, hp, x))
            assert dev <= bound + 2.0 * (eps_c**2 + eps_l**2) + 1e-9
