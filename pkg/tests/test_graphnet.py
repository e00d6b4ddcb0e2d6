import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from trussgn.exceptions import StaleTapeError, ValidationError, WidthMismatchError
from trussgn.graph import encode_truss, permute_graph
from trussgn.graphnet import (GnBlock, GnBlockConfig, GnModel, GraphBatch, Standardizer, aggregate,
                              block_forward, model_backward, model_forward, predict)
from trussgn.presets import desk_preset, table_preset

from conftest import random_trusses


def small_model(case=3, aggregation="mean", seed=0, graphs=None):
    blocks = [
        GnBlockConfig(("edge", "global"), ("node", "global"), ("global",),
                      (None, 6, 5), (None, 6, 4), (None, 5, 3), aggregation),
        GnBlockConfig(("edge", "sender", "receiver", "global"), ("agg_edges", "node", "global"),
                      ("agg_edges", "agg_nodes", "global"), (None, 7, 4), (None, 6, 5), (None, 6, 1), aggregation),
    ]
    graphs = graphs or [encode_truss(t, case) for t in random_trusses(2, case=case, nodes=(5, 5), seed=3)]
    std = Standardizer.fit(graphs, [1.0, 2.0])
    return GnModel.build(blocks, graphs[0].widths, seed, std, case), graphs


def jitter(model, scale=0.1, seed=5):
    """Move away from the zero-bias start so most ReLUs are active and nondegenerate."""
    rng = np.random.default_rng(seed)
    model.set_parameters([p + scale * rng.standard_normal(p.shape) for p in model.parameters()])


# aggregation

def test_aggregate_examples():
    assert aggregate([[1, 3], [3, 5]], "mean").tolist() == [2, 4]
    assert aggregate([[1, 3], [3, 5]], "mean_and_variance").tolist() == [2, 4, 1, 1]
    assert aggregate([[7, 7]], "meanvar").tolist() == [7, 7, 0, 0]
    assert aggregate([], "mean_and_variance", width=3).tolist() == [0] * 6


def test_aggregate_errors():
    with pytest.raises(ValidationError):
        aggregate([[1, 2], [1, 2, 3]])
    with pytest.raises(ValidationError):
        aggregate([])
    with pytest.raises(ValidationError):
        aggregate([[1.0]], "max")


@given(st.lists(st.lists(st.floats(-1e3, 1e3), min_size=3, max_size=3), min_size=1, max_size=40),
       st.randoms(use_true_random=False))
def test_aggregate_is_order_free(rows, rnd):
    shuffled = list(rows)
    rnd.shuffle(shuffled)
    a = aggregate(rows, "mean_and_variance")
    assert np.array_equal(a, aggregate(shuffled, "mean_and_variance"))
    np.testing.assert_allclose(a[:3], np.mean(rows, axis=0), atol=1e-9)
    np.testing.assert_allclose(a[3:], np.var(rows, axis=0), rtol=1e-9, atol=1e-6)


# blocks

def test_zero_weights_give_zero_attributes():
    g = encode_truss(random_trusses(1, case=2)[0], 2)
    cfg = GnBlockConfig(("edge", "sender", "global"), ("agg_edges", "node"), ("agg_edges", "agg_nodes", "global"),
                        (None, 8, 6), (None, 8, 5), (None, 4, 2)).resolved(g.widths)
    block = GnBlock.init(cfg, np.random.default_rng(0))
    for net in block.networks():
        for w in net.weights + net.biases:
            w[...] = 0
    out = block_forward(block, g)
    assert out.widths == (6, 5, 2)
    assert not out.edges.any() and not out.nodes.any() and not out.globals_.any()
    assert np.array_equal(out.senders, g.senders)


def test_table_one_first_block_shapes():
    g = encode_truss(random_trusses(1)[0], 1)
    cfg = table_preset("table1")[0].resolved(g.widths)
    out = block_forward(GnBlock.init(cfg, np.random.default_rng(0)), g)
    assert out.widths == (32, 50, 0)


def test_absent_networks_pass_through():
    g = encode_truss(random_trusses(1, case=2)[0], 2)
    cfg = GnBlockConfig(node_layers=(4, 3)).resolved(g.widths)
    out = block_forward(GnBlock.init(cfg, np.random.default_rng(0)), g)
    assert np.array_equal(out.edges, g.edges) and np.array_equal(out.globals_, g.globals_)


def test_block_config_validation():
    with pytest.raises(ValidationError):
        GnBlockConfig(edge_inputs=("edge", "bogus"), edge_layers=(3, 2))
    with pytest.raises(ValidationError):
        GnBlockConfig()
    with pytest.raises(WidthMismatchError):
        GnBlockConfig(("edge", "sender"), edge_layers=(3, 5)).resolved((3, 4, 0))


def test_config_round_trip():
    for cfg in table_preset("table4"):
        assert type(cfg).from_dict(cfg.to_dict()) == cfg


def test_block_forward_equivariant_under_node_relabel():
    g = encode_truss(random_trusses(1, case=3, seed=7)[0], 3)
    model, _ = small_model(graphs=[g, g])
    jitter(model)
    block = model.blocks[0]
    perm = np.random.default_rng(1).permutation(g.n_nodes)
    a = permute_graph(block_forward(block, g), perm)
    b = block_forward(block, permute_graph(g, perm))
    assert a.equals(b)


# models

def test_model_requires_scalar_readout():
    with pytest.raises(ValidationError):
        GnModel.build([GnBlockConfig(node_layers=(None, 4))], (3, 4, 0), 0)


def test_model_rejects_wrong_graph():
    model, _ = small_model(case=3)
    g = encode_truss(random_trusses(1, case=2)[0], 2)
    with pytest.raises(WidthMismatchError):
        model_forward(model, g)


def test_block_composition():
    model, graphs = small_model()
    jitter(model)
    g = model.standardizer
    batch = GraphBatch.from_graphs(graphs[:1])
    e, v, u = g.transform_batch(batch)
    staged = graphs[0].replace(edges=e, nodes=v, globals_=u[0])
    for block in model.blocks:
        staged = block_forward(block, staged)
    raw = model_forward(model, graphs[:1])[0][0]
    assert raw == g.target_mean + g.target_scale * staged.globals_[0]


def test_batch_composition_does_not_change_predictions():
    trusses = random_trusses(12, case=3, seed=21)
    graphs = [encode_truss(t, 3) for t in trusses]
    model = GnModel.build(desk_preset(3, "meanvar", 8), graphs[0].widths, 0,
                          Standardizer.fit(graphs, np.arange(12.0)), 3)
    jitter(model)
    whole = predict(model, graphs)
    assert np.array_equal(whole, predict(model, graphs, batch_size=5))
    assert np.array_equal(whole, np.array([predict(model, [g])[0] for g in graphs]))
    assert np.array_equal(whole[::-1], predict(model, graphs[::-1]))


@pytest.mark.parametrize("aggregation", ["mean", "mean_and_variance"])
def test_permutation_and_edge_order_invariance(aggregation):
    graphs = [encode_truss(t, 3) for t in random_trusses(20, case=3, seed=13)]
    model = GnModel.build(desk_preset(3, aggregation, 8), graphs[0].widths, 4,
                          Standardizer.fit(graphs, np.arange(20.0)), 3)
    jitter(model)
    rng = np.random.default_rng(2)
    for g in graphs:
        base = predict(model, [g])[0]
        assert predict(model, [permute_graph(g, rng.permutation(g.n_nodes))])[0] == base
        order = rng.permutation(g.n_edges)
        shuffled = g.replace(edges=g.edges[order], senders=g.senders[order], receivers=g.receivers[order])
        assert predict(model, [shuffled])[0] == base
        # swap each anti-parallel pair
        pairs = np.arange(g.n_edges).reshape(-1, 2)[:, ::-1].reshape(-1)
        swapped = g.replace(edges=g.edges[pairs], senders=g.senders[pairs], receivers=g.receivers[pairs])
        assert predict(model, [swapped])[0] == base


@pytest.mark.parametrize("aggregation", ["mean", "mean_and_variance"])
def test_gradients_match_finite_differences(aggregation):
    model, graphs = small_model(aggregation=aggregation)
    jitter(model)
    weights = np.array([1.0, -0.7])
    _, tape = model_forward(model, graphs)
    grads = model_backward(model, tape, weights)
    h = 1e-5
    worst = 0.0
    for p, g in zip(model.parameters(), grads):
        flat, gflat = p.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + h
            up = model_forward(model, graphs)[0] @ weights
            flat[i] = old - h
            down = model_forward(model, graphs)[0] @ weights
            flat[i] = old
            fd = (up - down) / (2 * h)
            worst = max(worst, abs(fd - gflat[i]) / max(abs(fd), abs(gflat[i]), 1e-6))
    assert worst <= 1e-4


def test_zero_upstream_gradient():
    model, graphs = small_model()
    _, tape = model_forward(model, graphs)
    assert all(not g.any() for g in model_backward(model, tape, 0.0))


def test_stale_tape_rejected():
    model, graphs = small_model()
    _, tape = model_forward(model, graphs)
    model.set_parameters(model.get_parameters())
    with pytest.raises(StaleTapeError):
        model_backward(model, tape, 1.0)


def test_absent_networks_have_no_parameters():
    model = GnModel.build(desk_preset(1, "mean", 4), (3, 4, 0), 0)
    assert model.blocks[0].global_net is None
    assert len(model.parameters()) == sum(2 * (len(n.widths) - 1) for b in model.blocks for n in b.networks())
