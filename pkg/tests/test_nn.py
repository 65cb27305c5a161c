import math

import numpy as np
import pytest

from chainrisk.errors import InvalidArgument, TrainingDivergence
from chainrisk.nn import (
    AdamState,
    adam_step,
    bce_logit_grad,
    bce_loss,
    dropout,
    grad_check,
    relu,
    sigmoid,
)
from chainrisk.rng import make_rng


class TestActivations:
    def test_relu_values(self):
        x = np.array([[-2.0, 3.0, 0.0]])
        assert np.array_equal(relu(x), [[0.0, 3.0, 0.0]])

    def test_sigmoid_midpoint(self):
        assert sigmoid(np.array([0.0]))[0] == 0.5

    def test_sigmoid_symmetry(self):
        x = np.linspace(-30, 30, 101)
        assert np.allclose(sigmoid(x) + sigmoid(-x), 1.0, atol=1e-15)

    def test_sigmoid_extreme_negative_stays_positive_and_finite(self):
        out = sigmoid(np.array([-710.0]))
        assert np.isfinite(out[0])
        assert out[0] > 0.0

    def test_sigmoid_extreme_positive(self):
        out = sigmoid(np.array([710.0]))
        assert np.isfinite(out[0])
        assert out[0] == 1.0 or out[0] < 1.0 + 1e-15


class TestBce:
    def test_confident_correct_is_near_zero(self):
        assert bce_loss(np.array([1.0]), np.array([1])) < 1e-11

    def test_coin_flip_is_ln2(self):
        loss = bce_loss(np.array([0.5, 0.5]), np.array([1, 0]))
        assert abs(loss - math.log(2.0)) < 1e-15

    def test_matches_scalar_loop_oracle(self, rng):
        y_hat = rng.uniform(0.01, 0.99, size=32)
        y = rng.integers(0, 2, size=32)
        total = 0.0
        for p, label in zip(y_hat.tolist(), y.tolist()):
            total += -(label * math.log(p) + (1 - label) * math.log(1.0 - p))
        assert abs(bce_loss(y_hat, y) - total / 32) < 1e-12

    def test_nonnegative_over_random_batches(self, rng):
        for _ in range(50):
            y_hat = rng.uniform(0.0, 1.0, size=16)
            y = rng.integers(0, 2, size=16)
            assert bce_loss(y_hat, y) >= 0.0

    def test_length_mismatch_rejected(self):
        with pytest.raises(InvalidArgument):
            bce_loss(np.array([0.5, 0.5]), np.array([1]))

    def test_logit_grad_matches_finite_difference(self, rng):
        logits = rng.normal(size=8)
        y = rng.integers(0, 2, size=8).astype(float)

        def f(params):
            (z,) = params
            probs = sigmoid(z)
            return bce_loss(probs, y), [bce_logit_grad(probs, y)]

        assert grad_check(f, [logits]) < 1e-9


class TestAdam:
    def test_zero_grad_zero_decay_is_noop(self):
        p = np.array([[1.0, -2.0]])
        state = AdamState([p])
        adam_step([p], [np.zeros_like(p)], state, lr=0.01)
        assert np.array_equal(p, [[1.0, -2.0]])

    def test_first_step_is_bias_corrected(self):
        # m_hat = g, v_hat = g^2 after one step, so the move is -lr * g/|g|
        p = np.array([0.0])
        state = AdamState([p])
        adam_step([p], [np.array([1.0])], state, lr=0.001)
        assert abs(p[0] + 0.001) < 1e-9

    def test_decay_only_shrinks_parameter(self):
        p = np.array([1.0])
        state = AdamState([p])
        adam_step([p], [np.zeros(1)], state, lr=0.001, weight_decay=1e-4)
        assert p[0] < 1.0

    def test_zero_learning_rate_freezes_parameters(self):
        p = np.array([3.0, -1.0])
        state = AdamState([p])
        for _ in range(5):
            adam_step([p], [np.array([1.0, 2.0])], state, lr=0.0)
        assert np.array_equal(p, [3.0, -1.0])

    def test_nonfinite_gradient_raises(self):
        p = np.array([1.0])
        state = AdamState([p])
        with pytest.raises(TrainingDivergence):
            adam_step([p], [np.array([np.nan])], state, lr=0.001)

    def test_step_counter_increases(self):
        p = np.array([1.0])
        state = AdamState([p])
        adam_step([p], [np.ones(1)], state, lr=0.001)
        adam_step([p], [np.ones(1)], state, lr=0.001)
        assert state.step_count == 2


class TestDropout:
    def test_rate_zero_is_identity(self):
        x = np.arange(6.0).reshape(2, 3)
        out, mask = dropout(x, 0.0, make_rng(0, 9), training=True)
        assert mask is None
        assert np.array_equal(out, x)

    def test_eval_mode_is_identity(self):
        x = np.ones((4, 4))
        out, mask = dropout(x, 0.9, make_rng(0, 9), training=False)
        assert mask is None
        assert np.array_equal(out, x)

    def test_inverted_scaling_preserves_mean(self):
        x = np.ones((1000, 100))
        out, _ = dropout(x, 0.5, make_rng(7, 9), training=True)
        assert 0.99 <= out.mean() <= 1.01

    def test_bad_rate_rejected(self):
        with pytest.raises(InvalidArgument):
            dropout(np.ones(3), 1.0, make_rng(0, 9), training=True)


class TestGradCheck:
    def test_sum_of_squares_is_exact(self):
        p = np.array([[1.0, -2.0], [0.5, 3.0]])

        def f(params):
            (w,) = params
            return float(np.sum(w * w)), [2.0 * w]

        assert grad_check(f, [p]) < 1e-9

    def test_constant_function_has_zero_gradients(self):
        p = np.array([1.0, 2.0])

        def f(params):
            return 42.0, [np.zeros_like(params[0])]

        assert grad_check(f, [p]) < 1e-12
