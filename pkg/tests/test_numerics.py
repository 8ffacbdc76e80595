import numpy as np
import pytest

from freenergy.numerics import (
    ACTIVATION_KINDS,
    activation_apply,
    activation_deriv,
    finite_diff_grad,
    make_rng,
)


class TestActivationApply:
    def test_identity(self):
        np.testing.assert_array_equal(activation_apply("identity", [1.5, -2.0]), [1.5, -2.0])

    def test_relu(self):
        np.testing.assert_array_equal(activation_apply("relu", [1.5, -2.0]), [1.5, 0.0])

    def test_tanh_odd_fixed_point(self):
        np.testing.assert_array_equal(activation_apply("tanh", [0.0]), [0.0])

    def test_sigmoid_range(self):
        v = np.linspace(-50, 50, 101)
        s = activation_apply("sigmoid", v)
        assert np.all(s >= 0) and np.all(s <= 1)

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError, match="non-finite"):
            activation_apply("tanh", [np.nan])
        with pytest.raises(ValueError, match="non-finite"):
            activation_apply("relu", [np.inf])

    def test_rejects_unknown_kind(self):
        with pytest.raises(ValueError, match="unknown activation"):
            activation_apply("swish", [0.0])


class TestActivationDeriv:
    def test_identity(self):
        np.testing.assert_array_equal(activation_deriv("identity", [7.0]), [1.0])

    def test_relu_subgradient_convention(self):
        np.testing.assert_array_equal(activation_deriv("relu", [-3.0, 2.0]), [0.0, 1.0])
        # the kink itself is pinned to 0
        np.testing.assert_array_equal(activation_deriv("relu", [0.0]), [0.0])

    def test_tanh_against_finite_difference(self):
        # independent oracle: central difference of the applied function
        h = 1e-6
        expected = (activation_apply("tanh", [0.5 + h]) - activation_apply("tanh", [0.5 - h])) / (2 * h)
        got = activation_deriv("tanh", [0.5])
        np.testing.assert_allclose(got, expected, rtol=1e-8)
        np.testing.assert_allclose(got, [0.7864477], rtol=1e-6)

    @pytest.mark.parametrize("kind", ACTIVATION_KINDS)
    def test_matches_finite_difference_everywhere(self, kind):
        rng = make_rng(99)
        h = 1e-6
        pts = rng.uniform(-4, 4, size=1000)
        if kind == "relu":
            pts = pts[np.abs(pts) > h]  # derivative jump at the kink
        for x in pts:
            fd = finite_diff_grad(lambda v: float(activation_apply(kind, v)[0]), np.array([x]), h)
            an = activation_deriv(kind, np.array([x]))
            np.testing.assert_allclose(an, fd, rtol=1e-5, atol=1e-8)


class TestRng:
    def test_equal_seeds_equal_streams(self):
        a = make_rng(123456789)
        b = make_rng(123456789)
        np.testing.assert_array_equal(a.random(10_000), b.random(10_000))

    def test_different_seeds_differ(self):
        assert not np.array_equal(make_rng(1).random(100), make_rng(2).random(100))


class TestFiniteDiffGrad:
    def test_square(self):
        g = finite_diff_grad(lambda x: float(x[0] ** 2), np.array([3.0]), 1e-5)
        np.testing.assert_allclose(g, [6.0], atol=1e-6)

    def test_quadratic_from_symbolic_derivative(self):
        # f(x) = 0.5 (1 - 2x)^2, f'(x) = -2 (1 - 2x); at x = 0 that is -2
        g = finite_diff_grad(lambda x: 0.5 * float((1 - 2 * x[0]) ** 2), np.array([0.0]), 1e-5)
        np.testing.assert_allclose(g, [-2.0], atol=1e-6)

    def test_constant(self):
        g = finite_diff_grad(lambda x: 4.2, np.array([1.0, -1.0, 0.3]), 1e-5)
        np.testing.assert_array_equal(g, [0.0, 0.0, 0.0])

    def test_rejects_nan_objective(self):
        with pytest.raises(ValueError, match="NaN"):
            finite_diff_grad(lambda x: float("nan"), np.array([0.0]), 1e-5)

    def test_rejects_bad_step(self):
        with pytest.raises(ValueError, match="positive"):
            finite_diff_grad(lambda x: 0.0, np.array([0.0]), 0.0)
