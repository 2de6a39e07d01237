import json

import numpy as np
import pytest

from graphvqe import diffnet as dn
from graphvqe import egate, hgraph
from graphvqe.egate import EgateConfig, EgateModel, EgateTrainConfig
from graphvqe.hgraph import FeatureScheme, HGraph
from graphvqe.pauli import FamilySpec, build_family

from egat_oracle import edge_module_oracle, node_module_oracle


def ring_graph(n, jzz=1.0):
    return hgraph.encode(
        build_family(FamilySpec("xxz_1d", n, {"Jzz": jzz})), FeatureScheme("one_hot")
    )


def random_graph(rng, n=None, d_node=None, d_edge=None):
    n = n or int(rng.integers(3, 7))
    d_node = d_node or int(rng.integers(2, 6))
    d_edge = d_edge or int(rng.integers(1, 4))
    edges = [(i, (i + 1) % n) for i in range(n)]  # ring keeps every node connected
    extra = [(i, j) for i in range(n) for j in range(i + 2, n)]
    for k in rng.permutation(len(extra))[: int(rng.integers(0, len(extra) + 1))]:
        edges.append(extra[k])
    edges = sorted({tuple(sorted(e)) for e in edges})
    return HGraph(
        n,
        rng.normal(size=(n, d_node)),
        tuple(edges),
        rng.normal(size=(len(edges), d_edge)),
    )


class TestAttention:
    def test_symmetric_ring_gives_uniform_attention(self, rng):
        # identical node and edge features -> equal scores -> alpha = 1/2
        g = HGraph(4, np.ones((4, 2)), ((0, 1), (0, 3), (1, 2), (2, 3)), np.ones((4, 2)))
        model = EgateModel(EgateConfig(layers=1, node_dim=2, edge_dim=2), 4, 4, rng)
        alpha, beta, src = egate.attention_weights(model, g)[0]
        assert np.allclose(alpha, 0.5, atol=1e-12)
        assert np.allclose(beta, 0.5, atol=1e-12)

    def test_single_edge_attention_is_one(self, rng):
        g = HGraph(2, rng.normal(size=(2, 3)), ((0, 1),), rng.normal(size=(1, 2)))
        model = EgateModel(EgateConfig(layers=1, node_dim=3, edge_dim=2), 2, 1, rng)
        alpha, beta, _ = egate.attention_weights(model, g)[0]
        assert np.allclose(alpha, 1.0)
        assert np.allclose(beta, 1.0)

    def test_attention_rows_normalized_every_layer(self, rng):
        g = random_graph(rng)
        model = EgateModel(
            EgateConfig(layers=3, node_dim=g.node_dim, edge_dim=g.edge_dim), g.n, g.m, rng
        )
        for alpha, beta, src in egate.attention_weights(model, g):
            for vec in (alpha, beta):
                sums = np.zeros(g.n)
                np.add.at(sums, src, vec)
                assert np.abs(sums - 1.0).max() < 1e-10

    def test_isolated_node_rejected(self, rng):
        g = HGraph(3, np.ones((3, 2)), ((0, 1),), np.ones((1, 1)))
        model = EgateModel(EgateConfig(layers=1, node_dim=2, edge_dim=1), 3, 1, rng)
        with pytest.raises(ValueError, match="no neighbours"):
            model.encode_latent(g)


class TestModulesAgainstOracle:
    def test_node_and_edge_modules_match_straight_line_oracle(self):
        for trial in range(4):
            rng = np.random.default_rng((7, trial))
            g = random_graph(rng)
            model = EgateModel(
                EgateConfig(layers=1, node_dim=g.node_dim, edge_dim=g.edge_dim), g.n, g.m, rng
            )
            layer = model.layers[0]
            o_out = egate.node_module(layer, g.node_features, g.edge_features, g)
            o_ref = node_module_oracle(layer, g.node_features, g.edge_features, list(g.edges))
            assert np.abs(o_out - o_ref).max() < 1e-10
            e_out = egate.edge_module(layer, o_out, g.edge_features, g)
            e_ref = edge_module_oracle(layer, o_ref, g.edge_features, list(g.edges))
            assert np.abs(e_out - e_ref).max() < 1e-10

    def test_zero_edge_update_network_outputs_zero(self, rng):
        g = random_graph(rng)
        model = EgateModel(
            EgateConfig(layers=1, node_dim=g.node_dim, edge_dim=g.edge_dim), g.n, g.m, rng
        )
        layer = model.layers[0]
        for t in layer.edge_update.parameters():
            t.data = np.zeros_like(t.data)
        e_out = egate.edge_module(layer, g.node_features, g.edge_features, g)
        assert np.array_equal(e_out, np.zeros_like(g.edge_features))

    def test_single_edge_transit_equals_projected_feature(self, rng):
        g = HGraph(2, rng.normal(size=(2, 2)), ((0, 1),), rng.normal(size=(1, 3)))
        model = EgateModel(EgateConfig(layers=1, node_dim=2, edge_dim=3), 2, 1, rng)
        layer = model.layers[0]
        e_star = g.edge_features @ layer.edge_we.data.T
        # beta = 1 for both endpoints, so the transit vector is e* itself;
        # reproduce the update input by hand and compare
        o_star = g.node_features @ layer.edge_wo.data.T
        feat = np.concatenate([o_star[0], o_star[1], e_star[0], e_star[0], g.edge_features[0]])
        expected = feat
        for k, (w, b) in enumerate(zip(layer.edge_update.weights, layer.edge_update.biases)):
            expected = expected @ w.data.T + b.data
            if k < len(layer.edge_update.weights) - 1:
                expected = np.where(expected > 0, expected, 0.01 * expected)
        out = egate.edge_module(layer, g.node_features, g.edge_features, g)
        assert np.abs(out[0] - expected).max() < 1e-12


class TestLatent:
    def test_mean_merge_single_layer_is_identity(self, rng):
        g = random_graph(rng)
        model = EgateModel(
            EgateConfig(layers=1, node_dim=g.node_dim, edge_dim=g.edge_dim, merge="mean"),
            g.n, g.m, rng,
        )
        layer = model.layers[0]
        o1 = egate.node_module(layer, g.node_features, g.edge_features, g)
        e1 = egate.edge_module(layer, o1, g.edge_features, g)
        expected = np.concatenate([o1.sum(axis=0), e1.sum(axis=0)])
        assert np.abs(model.encode_latent(g) - expected).max() < 1e-12

    def test_latent_dimensions_per_configuration(self, rng):
        for n, expect in ((4, 7), (6, 9), (8, 11)):
            g = ring_graph(n)
            model = EgateModel(EgateConfig(layers=3, node_dim=n, edge_dim=3), n, n, rng)
            assert model.latent_dim == expect
            assert model.encode_latent(g).shape == (expect,)
        for n in (4, 6, 8):
            h = build_family(FamilySpec("xxz_x_1d", n, {"Jzz": 1.0, "Kx": 0.5}))
            g = hgraph.encode(h, FeatureScheme("invariant_field", node_axes=("x",)))
            model = EgateModel(EgateConfig(layers=3, node_dim=2, edge_dim=3), n, n, rng)
            assert model.latent_dim == 5
            assert model.encode_latent(g).shape == (5,)

    def test_concat_and_pooling_dims(self, rng):
        g = ring_graph(4)
        concat_sum = EgateModel(
            EgateConfig(layers=3, node_dim=4, edge_dim=3, merge="concat"), 4, 4, rng
        )
        assert concat_sum.latent_dim == 3 * (4 + 3)
        linear = EgateModel(
            EgateConfig(layers=2, node_dim=4, edge_dim=3, pooling="linear", pooling_dim=5),
            4, 4, rng,
        )
        assert linear.encode_latent(g).shape == (5,)
        mlp = EgateModel(
            EgateConfig(layers=2, node_dim=4, edge_dim=3, merge="concat", pooling="mlp", pooling_dim=16),
            4, 4, rng,
        )
        assert mlp.encode_latent(g).shape == (16,)

    def test_dimension_preserved_for_odd_widths(self, rng):
        g = random_graph(rng, n=5, d_node=5, d_edge=2)
        model = EgateModel(EgateConfig(layers=2, node_dim=5, edge_dim=2), g.n, g.m, rng)
        out = egate.node_module(model.layers[0], g.node_features, g.edge_features, g)
        assert out.shape == (5, 5)  # floor(5/2) + ceil(5/2)

    def test_permutation_equivariance(self, rng):
        h = build_family(FamilySpec("xxz_x_1d", 5, {"Jzz": 0.8, "Kx": -0.4}))
        scheme = FeatureScheme("invariant_field", node_axes=("x",))
        g = hgraph.encode(h, scheme)
        model = EgateModel(EgateConfig(layers=2, node_dim=2, edge_dim=3), g.n, g.m, rng)
        perm = np.array([3, 0, 4, 1, 2])  # relabeling pi(i)
        edges_p = sorted(
            {tuple(sorted((int(perm[i]), int(perm[j])))) for (i, j) in g.edges}
        )
        row_of = {tuple(sorted((int(perm[i]), int(perm[j])))): k for k, (i, j) in enumerate(g.edges)}
        e_p = np.array([g.edge_features[row_of[e]] for e in edges_p])
        g_p = HGraph(g.n, g.node_features.copy(), tuple(edges_p), e_p)

        layer = model.layers[0]
        out = egate.node_module(layer, g.node_features, g.edge_features, g)
        out_p = egate.node_module(layer, g_p.node_features, g_p.edge_features, g_p)
        assert np.abs(out_p[perm] - out).max() < 1e-10
        assert np.abs(model.encode_latent(g) - model.encode_latent(g_p)).max() < 1e-10


class TestReconstructionLoss:
    def test_zero_when_decoder_matches(self, rng):
        g = ring_graph(4)
        model = EgateModel(EgateConfig(layers=1, node_dim=4, edge_dim=3), 4, 4, rng)
        o_rec, e_rec = model.decode_tensor(model.encode_tensor(g))
        manual = np.mean((o_rec.data - g.node_features) ** 2) + model.config.beta * np.mean(
            (e_rec.data - g.edge_features) ** 2
        )
        assert egate.reconstruction_loss(model, g) == pytest.approx(manual, rel=1e-12)

    def test_beta_zero_ignores_edges(self, rng):
        g = ring_graph(4)
        model = EgateModel(EgateConfig(layers=1, node_dim=4, edge_dim=3), 4, 4, rng)
        base = egate.reconstruction_loss(model, g, beta=0.0)
        # perturb only the decoder rows that emit the edge reconstruction E'
        split = 4 * model.config.node_dim
        model.decoder.weights[-1].data[split:, :] += rng.normal(size=(12, 16))
        model.decoder.biases[-1].data[split:] += 5.0
        assert egate.reconstruction_loss(model, g, beta=0.0) == base
        assert egate.reconstruction_loss(model, g, beta=1.0) != base

    def test_hand_computed_two_node_example(self, rng):
        g = HGraph(2, np.array([[1.0, 2.0], [3.0, 4.0]]), ((0, 1),), np.array([[0.5, -0.5]]))
        model = EgateModel(EgateConfig(layers=1, node_dim=2, edge_dim=2, beta=2.0), 2, 1, rng)
        o_rec, e_rec = model.decode_tensor(model.encode_tensor(g))
        by_hand = ((o_rec.data - g.node_features) ** 2).sum() / 4 + 2.0 * (
            (e_rec.data - g.edge_features) ** 2
        ).sum() / 2
        assert egate.reconstruction_loss(model, g) == pytest.approx(by_hand, rel=1e-12)


class TestTraining:
    def test_zero_epochs_leaves_model_unchanged(self, rng):
        g = ring_graph(4)
        model = EgateModel(EgateConfig(layers=1, node_dim=4, edge_dim=3), 4, 4, rng)
        before = {k: v.copy() for k, v in model.state_dict().items()}
        history = egate.train(model, [g], EgateTrainConfig(epochs=0))
        assert history == []
        after = model.state_dict()
        assert all(np.array_equal(before[k], after[k]) for k in before)

    def test_loss_drops_tenfold(self):
        rng = np.random.default_rng(42)
        graphs = [ring_graph(4, jzz=j) for j in np.linspace(-3, 3, 10)]
        model = EgateModel(
            EgateConfig(layers=2, node_dim=4, edge_dim=3, decoder_hidden=12), 4, 4, rng
        )
        history = egate.train(model, graphs, EgateTrainConfig(epochs=250, lr=3e-3, seed=1))
        assert history[-1] < history[0] / 10

    def test_training_deterministic_under_seed(self):
        graphs = [ring_graph(4, jzz=j) for j in (-1.0, 0.5, 2.0)]
        outs = []
        for _ in range(2):
            model = EgateModel(
                EgateConfig(layers=1, node_dim=4, edge_dim=3), 4, 4, np.random.default_rng(5)
            )
            egate.train(model, graphs, EgateTrainConfig(epochs=20, lr=1e-3, batch_size=2, seed=9))
            outs.append(model.encode_latent(graphs[0]))
        assert np.array_equal(outs[0], outs[1])

    def test_nan_loss_aborts_with_diagnostic(self, rng):
        g = ring_graph(4)
        model = EgateModel(EgateConfig(layers=1, node_dim=4, edge_dim=3), 4, 4, rng)
        model.decoder.biases[-1].data[:] = 1e200  # squared residual overflows
        with np.errstate(over="ignore", invalid="ignore"):
            with pytest.raises(RuntimeError, match="non-finite"):
                egate.train(model, [g], EgateTrainConfig(epochs=2, lr=1e-3))

    def test_empty_dataset_rejected(self, rng):
        model = EgateModel(EgateConfig(layers=1, node_dim=4, edge_dim=3), 4, 4, rng)
        with pytest.raises(ValueError):
            egate.train(model, [], EgateTrainConfig(epochs=1))


class TestCheckpoint:
    def test_round_trip_preserves_latents(self, rng):
        g = ring_graph(5)
        model = EgateModel(
            EgateConfig(layers=2, node_dim=5, edge_dim=3, pooling="linear", pooling_dim=4),
            5, 5, rng,
        )
        text = model.checkpoint_json()
        doc = json.loads(text)
        assert doc["architecture"]["merge"] == "mean"
        back = EgateModel.from_checkpoint_json(text)
        assert np.array_equal(back.encode_latent(g), model.encode_latent(g))
