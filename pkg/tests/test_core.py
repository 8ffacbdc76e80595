import numpy as np
import pytest

from freenergy.backprop import MLP, mlp_backprop, mlp_forward
from freenergy.core import (
    ClampSpec,
    InferenceConfig,
    PCNetwork,
    energy,
    feedforward,
    infer_code,
    infer_step,
    init_states,
    predict,
    settle,
    train_step,
    weight_update,
)
from freenergy.numerics import activation_apply, make_rng

from _oracles import random_net, random_states, state_energy_grad, weight_energy_grad


def scalar_net(w=2.0, activation="identity"):
    return PCNetwork([1, 1], [np.array([[w]])], activation)


class TestPredict:
    def test_scalar_chain(self):
        u, e = predict(scalar_net(), [np.array([1.0]), np.array([0.0])])
        np.testing.assert_array_equal(u[0], [0.0])
        np.testing.assert_array_equal(e[0], [1.0])
        np.testing.assert_array_equal(e[1], [0.0])

    def test_zero_upper_states_predict_zero(self):
        rng = make_rng(0)
        net = random_net(rng)
        states = [rng.normal(size=net.layer_dims[0])] + [
            np.zeros(d) for d in net.layer_dims[1:]
        ]
        u, e = predict(net, states)
        for l in range(net.depth):
            if net.activation == "sigmoid":
                continue  # phi(0) != 0 for the logistic
            np.testing.assert_allclose(u[l], 0.0, atol=1e-15)
            np.testing.assert_allclose(e[l], states[l], atol=1e-15)

    def test_exact_reconstruction(self):
        u, e = predict(scalar_net(), [np.array([1.0]), np.array([0.5])])
        np.testing.assert_array_equal(u[0], [1.0])
        np.testing.assert_array_equal(e[0], [0.0])

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError, match="shape"):
            predict(scalar_net(), [np.array([1.0, 2.0]), np.array([0.0])])

    def test_top_prior_error(self):
        net = PCNetwork(
            [1, 1], [np.array([[2.0]])], "identity",
            top_prior=(np.array([0.3]), np.array([1.0])),
        )
        _, e = predict(net, [np.array([1.0]), np.array([0.5])])
        np.testing.assert_allclose(e[1], [0.2])


class TestEnergy:
    def test_zero_at_perfect_prediction(self):
        assert energy(scalar_net(), [np.array([1.0]), np.array([0.5])]) == 0.0

    def test_scalar_half(self):
        assert energy(scalar_net(), [np.array([1.0]), np.array([0.0])]) == 0.5

    def test_small_error(self):
        net = scalar_net(w=1.0)
        e = energy(net, [np.array([0.7]), np.array([0.5])])
        np.testing.assert_allclose(e, 0.02)


class TestInferStep:
    def test_scalar_derived_step(self):
        # E = 0.5 (1 - 2 x1)^2; dE/dx1 at 0 is -2, so one step moves +0.2
        net = scalar_net()
        states = [np.array([1.0]), np.array([0.0])]
        out = infer_step(net, states, ClampSpec(bottom=np.array([1.0])), 0.1)
        np.testing.assert_allclose(out[1], [0.2])
        fd = state_energy_grad(net, states, 1)
        np.testing.assert_allclose((out[1] - states[1]) / 0.1, -fd, rtol=1e-6)

    def test_fixed_point_unchanged(self):
        net = scalar_net()
        states = [np.array([1.0]), np.array([0.5])]  # the energy minimizer
        out = infer_step(net, states, ClampSpec(bottom=np.array([1.0])), 0.1)
        np.testing.assert_array_equal(out[1], states[1])

    def test_zero_gamma_is_identity(self):
        net = scalar_net()
        states = [np.array([1.0]), np.array([0.3])]
        out = infer_step(net, states, ClampSpec(bottom=np.array([1.0])), 0.0)
        np.testing.assert_array_equal(out[1], states[1])

    def test_negative_gamma_rejected(self):
        with pytest.raises(ValueError):
            infer_step(scalar_net(), [np.array([1.0]), np.array([0.0])], ClampSpec(), -0.1)

    def test_matches_energy_gradient_random(self):
        rng = make_rng(7)
        for _ in range(20):
            net = random_net(rng)
            states = random_states(net, rng)
            out = infer_step(net, states, ClampSpec(), 0.05)
            for l in range(net.depth + 1):
                fd = state_energy_grad(net, states, l)
                np.testing.assert_allclose(
                    (out[l] - states[l]) / 0.05, -fd, rtol=1e-5, atol=1e-8
                )


class TestSettle:
    def test_scalar_converges_to_minimizer(self):
        net = scalar_net()
        cfg = InferenceConfig(gamma=0.1, iterations=500, tol=1e-10)
        states, trace = settle(
            net, [np.array([1.0]), np.array([0.0])], ClampSpec(bottom=np.array([1.0])), cfg
        )
        np.testing.assert_allclose(states[1], [0.5], atol=1e-8)
        assert trace[-1] < 1e-12

    def test_converged_start_gives_length_one_trace(self):
        net = scalar_net()
        cfg = InferenceConfig(gamma=0.1, iterations=100, tol=1e-10)
        states, trace = settle(
            net, [np.array([1.0]), np.array([0.5])], ClampSpec(bottom=np.array([1.0])), cfg
        )
        assert len(trace) == 1
        np.testing.assert_array_equal(states[1], [0.5])

    def test_backtracking_tames_adversarial_gamma(self):
        net = scalar_net()
        cfg = InferenceConfig(gamma=10.0, iterations=60, tol=0.0, backtracking=True)
        _, trace = settle(
            net, [np.array([1.0]), np.array([0.0])], ClampSpec(bottom=np.array([1.0])), cfg
        )
        assert all(b <= a + 1e-15 for a, b in zip(trace, trace[1:]))
        assert trace[-1] < trace[0]

    def test_clamped_layers_bit_identical(self):
        rng = make_rng(21)
        net = random_net(rng)
        bottom = rng.normal(size=net.layer_dims[0])
        top = rng.normal(size=net.layer_dims[-1])
        clamp = ClampSpec(bottom=bottom, top=top)
        init = init_states(net, clamp, rng)
        out, _ = settle(net, init, clamp, InferenceConfig(gamma=0.05, iterations=40, tol=0.0))
        np.testing.assert_array_equal(out[0], bottom)
        np.testing.assert_array_equal(out[-1], top)

    def test_permutation_equivariance(self):
        rng = make_rng(33)
        net = random_net(rng, activation="tanh")
        l = 1  # permute the first hidden layer
        perm = rng.permutation(net.layer_dims[l])
        ws = [w.copy() for w in net.weights]
        ws[l - 1] = ws[l - 1][:, perm]
        ws[l] = ws[l][perm, :]
        net_p = PCNetwork(net.layer_dims, ws, net.activation)
        clamp = ClampSpec(bottom=rng.normal(size=net.layer_dims[0]))
        init = [rng.normal(size=d) for d in net.layer_dims]
        init_p = [s.copy() for s in init]
        init_p[l] = init_p[l][perm]
        cfg = InferenceConfig(gamma=0.05, iterations=30, tol=0.0)
        _, trace = settle(net, init, clamp, cfg)
        _, trace_p = settle(net_p, init_p, clamp, cfg)
        np.testing.assert_allclose(trace, trace_p, rtol=1e-9)


class TestWeightUpdate:
    def test_zero_presynaptic_activity(self):
        net = scalar_net()
        dw = weight_update(net, [np.array([1.0]), np.array([0.0])], 0.1)
        np.testing.assert_array_equal(dw[0], [[0.0]])

    def test_scalar_outer_product(self):
        # e0 = 1 - 2*0.4 = 0.2, presynaptic phi(x1) = 0.4
        dw = weight_update(scalar_net(), [np.array([1.0]), np.array([0.4])], 0.1)
        np.testing.assert_allclose(dw[0], [[0.008]])

    def test_zero_errors(self):
        dw = weight_update(scalar_net(), [np.array([1.0]), np.array([0.5])], 0.1)
        np.testing.assert_array_equal(dw[0], [[0.0]])

    def test_matches_energy_gradient_random(self):
        rng = make_rng(17)
        for _ in range(20):
            net = random_net(rng)
            states = random_states(net, rng)
            dws = weight_update(net, states, 1.0)
            for l in range(net.depth):
                fd = weight_energy_grad(net, states, l)
                np.testing.assert_allclose(dws[l], -fd, rtol=1e-5, atol=1e-8)

    def test_precision_scaling_still_descends(self):
        rng = make_rng(18)
        net = random_net(rng, with_precisions=True, with_prior=True)
        states = random_states(net, rng)
        dws = weight_update(net, states, 1.0)
        for l in range(net.depth):
            fd = weight_energy_grad(net, states, l)
            np.testing.assert_allclose(dws[l], -fd, rtol=1e-5, atol=1e-8)


class TestFeedforward:
    def test_identity_pipeline(self):
        net = PCNetwork([2, 2], [np.eye(2)], "identity")
        np.testing.assert_array_equal(feedforward(net, np.array([0.3, -0.7])), [0.3, -0.7])

    def test_scalar_multiply(self):
        np.testing.assert_allclose(feedforward(scalar_net(), np.array([0.5])), [1.0])

    def test_zero_source(self):
        rng = make_rng(2)
        net = random_net(rng, activation="tanh")
        np.testing.assert_allclose(
            feedforward(net, np.zeros(net.layer_dims[-1])), np.zeros(net.layer_dims[0]), atol=1e-15
        )


class TestInferCode:
    def test_scalar_code(self):
        cfg = InferenceConfig(gamma=0.1, iterations=500, tol=1e-12)
        code = infer_code(scalar_net(), np.array([1.0]), cfg, make_rng(0))
        np.testing.assert_allclose(code, [0.5], atol=1e-6)

    def test_consistent_pair_reaches_zero_energy(self):
        rng = make_rng(5)
        w = rng.uniform(0.5, 1.5, size=(3, 3)) + np.eye(3)  # well-conditioned square
        net = PCNetwork([3, 3], [w], "identity")
        true_code = rng.normal(size=3)
        obs = feedforward(net, true_code)
        cfg = InferenceConfig(gamma=0.05, iterations=5000, tol=0.0)
        code = infer_code(net, obs, cfg, make_rng(1))
        np.testing.assert_allclose(feedforward(net, code), obs, atol=1e-6)

    def test_zero_observation_zero_code(self):
        cfg = InferenceConfig(gamma=0.1, iterations=2000, tol=0.0)
        code = infer_code(scalar_net(), np.array([0.0]), cfg, make_rng(3))
        np.testing.assert_allclose(code, [0.0], atol=1e-8)


class TestTrainStep:
    def _cfg(self, schedule="standard", **kw):
        base = dict(gamma=0.1, iterations=300, tol=1e-12, alpha=0.05, schedule=schedule)
        base.update(kw)
        return InferenceConfig(**base)

    def test_energy_zero_leaves_net_unchanged(self):
        net = scalar_net()
        clamp = ClampSpec(bottom=np.array([1.0]), top=np.array([0.5]))
        new_net, m = train_step(net, clamp, self._cfg())
        np.testing.assert_array_equal(new_net.weights[0], net.weights[0])
        assert m["energy"] == 0.0

    def test_standard_matches_settle_plus_update(self):
        rng = make_rng(11)
        net = random_net(rng, activation="tanh")
        clamp = ClampSpec(
            bottom=rng.normal(size=net.layer_dims[0]), top=rng.normal(size=net.layer_dims[-1])
        )
        cfg = self._cfg()
        new_net, _ = train_step(net, clamp, cfg, make_rng(0))
        states = init_states(net, clamp, make_rng(0))
        settled, _ = settle(net, states, clamp, cfg)
        dws = weight_update(net, settled, cfg.alpha)
        for l in range(net.depth):
            np.testing.assert_allclose(new_net.weights[l], net.weights[l] + dws[l], atol=1e-12)

    def test_empty_batch_rejected(self):
        with pytest.raises(ValueError, match="clamp"):
            train_step(scalar_net(), ClampSpec(), self._cfg())

    def test_unknown_schedule_rejected(self):
        with pytest.raises(ValueError, match="schedule"):
            self._cfg(schedule="waterfall")

    def test_incremental_reduces_energy(self):
        rng = make_rng(12)
        net = random_net(rng, activation="tanh")
        clamp = ClampSpec(
            bottom=rng.normal(size=net.layer_dims[0]), top=rng.normal(size=net.layer_dims[-1])
        )
        states = init_states(net, clamp)
        e0 = energy(net, states)
        new_net, m = train_step(net, clamp, self._cfg(schedule="incremental", alpha=0.01), make_rng(0))
        assert m["energy"] < e0

    def test_fixed_prediction_equals_backprop_gradient(self):
        rng = make_rng(13)
        for _ in range(5):
            net = random_net(rng, activation="tanh")
            o = rng.normal(size=net.layer_dims[-1])
            y = rng.normal(size=net.layer_dims[0])
            cfg = self._cfg(schedule="fixed_prediction", gamma=0.5, iterations=20000, tol=1e-15)
            new_net, _ = train_step(net, ClampSpec(bottom=y, top=o), cfg)
            L = net.depth
            mlp = MLP(
                list(reversed(net.layer_dims)),
                [net.weights[L - 1 - k].copy() for k in range(L)],
                net.activation,
                "squared_error",
            )
            inter = mlp_forward(mlp, activation_apply(net.activation, o))
            grads = mlp_backprop(mlp, inter, y)
            for l in range(L):
                delta = (new_net.weights[l] - net.weights[l]) / cfg.alpha
                np.testing.assert_allclose(
                    delta, -grads[L - 1 - l], rtol=1e-6, atol=1e-10
                )

    def test_batched_update_is_mean_of_items(self):
        rng = make_rng(14)
        net = random_net(rng, activation="identity")
        B = 3
        bottoms = rng.normal(size=(net.layer_dims[0], B))
        tops = rng.normal(size=(net.layer_dims[-1], B))
        # tol=0 with a fixed budget: every element runs the same number of
        # steps whether settled jointly or alone.
        cfg = self._cfg(tol=0.0, iterations=80)
        batched, _ = train_step(net, ClampSpec(bottom=bottoms, top=tops), cfg, make_rng(0))
        singles = []
        for b in range(B):
            one, _ = train_step(
                net, ClampSpec(bottom=bottoms[:, b], top=tops[:, b]), cfg, make_rng(0)
            )
            singles.append(one)
        for l in range(net.depth):
            expected = net.weights[l] + np.mean(
                [s.weights[l] - net.weights[l] for s in singles], axis=0
            )
            np.testing.assert_allclose(batched.weights[l], expected, atol=1e-10)
