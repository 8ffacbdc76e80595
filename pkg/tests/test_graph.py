import numpy as np
import pytest

from freenergy.core import ClampSpec, InferenceConfig, PCNetwork, energy, infer_step, settle, weight_update
from freenergy.graph import (
    GraphClamp,
    PCGraph,
    bipartite_mask,
    dense_mask,
    erdos_renyi_mask,
    from_network,
    graph_energy,
    graph_infer_step,
    graph_predict,
    graph_settle,
    graph_weight_update,
    layered_mask,
    memory_retrieve,
    memory_store,
    pack_states,
    read_mask,
    unpack_states,
    write_mask,
)
from freenergy.numerics import make_rng

from _oracles import (
    graph_state_grad,
    graph_weight_grad,
    random_graph,
    random_graph_state,
    random_net,
    random_states,
)


def two_neuron_graph(w=2.0):
    # single active edge 1 -> 0 with weight w
    mask = np.array([[0.0, 0.0], [1.0, 0.0]])
    weights = np.array([[0.0, 0.0], [w, 0.0]])
    return PCGraph(2, weights, mask, "identity")


class TestGraphPredict:
    def test_zero_state(self):
        u, e = graph_predict(two_neuron_graph(), np.zeros(2))
        np.testing.assert_array_equal(u, [0.0, 0.0])
        np.testing.assert_array_equal(e, [0.0, 0.0])

    def test_single_edge(self):
        u, e = graph_predict(two_neuron_graph(), np.array([1.0, 0.5]))
        np.testing.assert_array_equal(u, [1.0, 0.0])
        np.testing.assert_array_equal(e, [0.0, 0.5])

    def test_empty_graph(self):
        g = PCGraph(3, np.zeros((3, 3)), np.zeros((3, 3)), "identity")
        x = np.array([0.1, -0.2, 0.3])
        u, e = graph_predict(g, x)
        np.testing.assert_array_equal(u, np.zeros(3))
        np.testing.assert_array_equal(e, x)

    def test_masked_weights_zeroed_on_construction(self):
        g = PCGraph(2, np.ones((2, 2)), np.array([[0, 1], [0, 0]]), "identity")
        np.testing.assert_array_equal(g.weights, [[0.0, 1.0], [0.0, 0.0]])


class TestGraphEnergy:
    def test_zero(self):
        assert graph_energy(two_neuron_graph(), np.zeros(2)) == 0.0

    def test_two_neuron_value(self):
        assert graph_energy(two_neuron_graph(), np.array([1.0, 0.5])) == 0.125

    def test_matches_stack_on_layered_mask(self):
        rng = make_rng(4)
        net = random_net(rng, with_prior=False)
        # sourceless graph neurons see a zero prediction, which corresponds
        # to a zero-mean unit-precision prior on the stack's top layer
        net.top_prior = (np.zeros(net.layer_dims[-1]), np.ones(net.layer_dims[-1]))
        g = from_network(net)
        states = random_states(net, rng)
        np.testing.assert_allclose(
            graph_energy(g, pack_states(net, states)), energy(net, states), atol=1e-12
        )


class TestGraphInferStep:
    def test_gradient_zero_fixed_point(self):
        g = two_neuron_graph()
        x = np.array([1.0, 0.5])  # perfect prediction on the only edge, e1 free
        clamp = GraphClamp(np.array([True, True]), x)
        np.testing.assert_array_equal(graph_infer_step(g, x, clamp, 0.1), x)

    def test_two_neuron_step(self):
        g = two_neuron_graph()
        clamp = GraphClamp(np.array([True, False]), np.array([1.0, 0.0]))
        out = graph_infer_step(g, np.array([1.0, 0.0]), clamp, 0.1)
        np.testing.assert_allclose(out, [1.0, 0.2])

    def test_matches_finite_difference(self):
        rng = make_rng(8)
        clampless = GraphClamp(np.zeros(0, dtype=bool), np.zeros(0))
        for _ in range(30):
            g = random_graph(rng)
            x = random_graph_state(g, rng)
            clamp = GraphClamp(np.zeros(g.n, dtype=bool), np.zeros(g.n))
            out = graph_infer_step(g, x, clamp, 0.05)
            fd = graph_state_grad(g, x)
            np.testing.assert_allclose((out - x) / 0.05, -fd, rtol=1e-5, atol=1e-8)


class TestGraphWeightUpdate:
    def test_zero_errors(self):
        g = two_neuron_graph()
        dw = graph_weight_update(g, np.array([1.0, 0.5]), 0.1)
        np.testing.assert_array_equal(dw[1, 0], 0.0)

    def test_two_neuron_value(self):
        # e0 = 1 - 2*0.4 = 0.2, presynaptic phi(x1) = 0.4
        g = two_neuron_graph()
        dw = graph_weight_update(g, np.array([1.0, 0.4]), 0.1)
        np.testing.assert_allclose(dw[1, 0], 0.008)
        assert dw[0, 1] == 0.0  # masked edge never moves

    def test_masked_entries_stay_zero_through_updates(self):
        rng = make_rng(9)
        g = random_graph(rng)
        off = 1.0 - g.mask
        for _ in range(20):
            x = random_graph_state(g, rng)
            dw = graph_weight_update(g, x, 0.1)
            g = PCGraph(g.n, g.weights + dw, g.mask, g.activation)
            np.testing.assert_array_equal(g.weights * off, np.zeros((g.n, g.n)))

    def test_matches_finite_difference(self):
        rng = make_rng(10)
        for _ in range(20):
            g = random_graph(rng)
            x = random_graph_state(g, rng)
            dw = graph_weight_update(g, x, 1.0)
            fd = graph_weight_grad(g, x) * g.mask
            np.testing.assert_allclose(dw, -fd, rtol=1e-5, atol=1e-8)


class TestHierarchyEmbedding:
    def test_energy_trajectory_and_updates_match_stack(self):
        rng = make_rng(40)
        for _ in range(10):
            net = random_net(rng)
            net.top_prior = (np.zeros(net.layer_dims[-1]), np.ones(net.layer_dims[-1]))
            g = from_network(net)
            states = random_states(net, rng)
            x = pack_states(net, states)

            np.testing.assert_allclose(
                graph_energy(g, x), energy(net, states), atol=1e-12
            )

            clamp_net = ClampSpec(bottom=states[0])
            clamped = np.zeros(g.n, dtype=bool)
            clamped[: net.layer_dims[0]] = True
            clamp_g = GraphClamp(clamped, x)

            cur_s, cur_x = states, x
            for _ in range(5):
                cur_s = infer_step(net, cur_s, clamp_net, 0.05)
                cur_x = graph_infer_step(g, cur_x, clamp_g, 0.05)
                np.testing.assert_allclose(cur_x, pack_states(net, cur_s), atol=1e-10)

            dws = weight_update(net, cur_s, 0.3)
            dw_g = graph_weight_update(g, cur_x, 0.3)
            offsets = np.cumsum([0] + net.layer_dims)
            for l in range(net.depth):
                block = dw_g[
                    offsets[l + 1] : offsets[l + 2], offsets[l] : offsets[l + 1]
                ].T
                np.testing.assert_allclose(block, dws[l], atol=1e-10)


class TestMemory:
    def _cfg(self, **kw):
        base = dict(gamma=0.1, iterations=400, tol=1e-12, alpha=0.05, backtracking=False)
        base.update(kw)
        return InferenceConfig(**base)

    def test_zero_pattern_leaves_weights(self):
        g = PCGraph(4, np.zeros((4, 4)), dense_mask(4), "identity")
        g2 = memory_store(g, [np.zeros(4)], self._cfg(), epochs=3)
        np.testing.assert_array_equal(g2.weights, g.weights)

    def test_single_pattern_stored_to_low_energy(self):
        rng = make_rng(50)
        g = PCGraph(8, np.zeros((8, 8)), dense_mask(8), "identity")
        p = np.where(rng.random(8) < 0.5, -1.0, 1.0)
        g = memory_store(g, [p], self._cfg(alpha=0.05), epochs=300)
        assert graph_energy(g, p) < 1e-6

    def test_storage_energy_descends_with_backtracking(self):
        rng = make_rng(51)
        g = PCGraph(64, np.zeros((64, 64)), dense_mask(64), "identity")
        pats = [np.where(rng.random(64) < 0.5, -1.0, 1.0) for _ in range(10)]
        cfg = self._cfg(alpha=0.02, backtracking=True)
        energies = []
        for _ in range(15):
            g = memory_store(g, pats, cfg, epochs=1)
            energies.append(sum(graph_energy(g, p) for p in pats))
        assert all(b <= a + 1e-12 for a, b in zip(energies, energies[1:]))

    def test_retrieve_fully_known_returns_cue(self):
        g = two_neuron_graph()
        cue = np.array([0.4, -0.2])
        out = memory_retrieve(g, cue, np.array([True, True]), self._cfg())
        np.testing.assert_array_equal(out, cue)

    def test_retrieve_single_pattern_quarter_masked(self):
        rng = make_rng(52)
        n = 16
        g = PCGraph(n, np.zeros((n, n)), dense_mask(n), "identity")
        p = np.where(rng.random(n) < 0.5, -1.0, 1.0)
        g = memory_store(g, [p], self._cfg(alpha=0.05), epochs=400)
        known = np.ones(n, dtype=bool)
        known[rng.permutation(n)[: n // 4]] = False
        cue = np.where(known, p, 0.0)
        out = memory_retrieve(g, cue, known, self._cfg(iterations=2000))
        assert np.max(np.abs(out[~known] - p[~known])) < 0.1

    def test_empty_graph_settles_unknowns_to_zero(self):
        g = PCGraph(4, np.zeros((4, 4)), np.zeros((4, 4)), "identity")
        cue = np.array([1.0, 1.0, 1.0, 1.0])
        known = np.array([True, True, False, False])
        out = memory_retrieve(g, cue, known, self._cfg())
        np.testing.assert_allclose(out[2:], [0.0, 0.0], atol=1e-12)


class TestMasksAndIO:
    def test_dense_mask_has_no_self_edges(self):
        m = dense_mask(5)
        np.testing.assert_array_equal(np.diag(m), np.zeros(5))
        assert m.sum() == 20

    def test_layered_mask_shape(self):
        m = layered_mask([2, 3, 1])
        assert m.shape == (6, 6)
        # block from layer 1 (rows 2..4) into layer 0 (cols 0..1)
        np.testing.assert_array_equal(m[2:5, 0:2], np.ones((3, 2)))
        # nothing else
        assert m.sum() == 6 + 3

    def test_bipartite_mask(self):
        m = bipartite_mask(2, 3)
        assert m[:2, 2:].sum() == 6 and m[2:, :2].sum() == 6
        assert m[:2, :2].sum() == 0 and m[2:, 2:].sum() == 0

    def test_erdos_renyi_deterministic(self):
        a = erdos_renyi_mask(20, 0.3, seed=5)
        b = erdos_renyi_mask(20, 0.3, seed=5)
        np.testing.assert_array_equal(a, b)
        np.testing.assert_array_equal(np.diag(a), np.zeros(20))

    def test_mask_round_trip(self, tmp_path):
        m = erdos_renyi_mask(9, 0.4, seed=1)
        path = tmp_path / "mask.txt"
        write_mask(path, m)
        np.testing.assert_array_equal(read_mask(path), m)
        header = path.read_text().splitlines()[0]
        assert header == "9"

    def test_mask_errors(self, tmp_path):
        bad = tmp_path / "bad.txt"
        bad.write_text("2\n0 1\n")
        with pytest.raises(ValueError, match="expected 2 rows"):
            read_mask(bad)
        bad.write_text("2\n0 1\n0 2\n")
        with pytest.raises(ValueError, match="0/1"):
            read_mask(bad)

    def test_pack_unpack_round_trip(self):
        rng = make_rng(3)
        net = random_net(rng)
        states = random_states(net, rng)
        again = unpack_states(net, pack_states(net, states))
        for a, b in zip(states, again):
            np.testing.assert_array_equal(a, b)
