import numpy as np
import pytest

from uapkit.classifier import (
    Network,
    NeuralNetClassifier,
    build_preset,
    classify,
    logits,
    loss_and_input_grad,
    train,
)
from uapkit.layers import Dense, Flatten


def linear_net(in_shape=(2, 2, 1), n_classes=4):
    return Network([Flatten(), Dense(int(np.prod(in_shape)), n_classes)],
                   in_shape, n_classes)


class TestClassify:
    def test_bias_dominates(self):
        net = linear_net()
        net.layers[1].params[1] = np.array([0, 0, 0, 10.0], dtype=np.float32)
        assert classify(net, np.zeros((2, 2, 1))) == 3

    def test_tie_breaks_to_lowest_index(self):
        net = linear_net(n_classes=3)
        net.layers[1].params[1] = np.array([0.1, 0.9, 0.9], dtype=np.float32)
        assert classify(net, np.zeros((2, 2, 1))) == 1

    def test_agrees_with_argmax_of_logits(self, rng):
        net = linear_net()
        net.init_weights(3)
        for _ in range(100):
            x = rng.uniform(0, 1, (2, 2, 1))
            assert classify(net, x) == int(np.argmax(logits(net, x)))

    def test_shape_mismatch(self):
        net = linear_net()
        with pytest.raises(ValueError, match="shape"):
            classify(net, np.zeros((3, 3, 1)))

    def test_shift_invariant(self, rng):
        net = linear_net()
        net.init_weights(3)
        shifted = linear_net()
        shifted.layers[1].params[0] = net.layers[1].params[0].copy()
        shifted.layers[1].params[1] = net.layers[1].params[1] + np.float32(5.0)
        for _ in range(20):
            x = rng.uniform(0, 1, (2, 2, 1))
            assert classify(net, x) == classify(shifted, x)


class TestLogits:
    def test_zero_weights_zero_logits(self):
        net = linear_net()
        np.testing.assert_array_equal(logits(net, np.ones((2, 2, 1))), np.zeros(4))

    def test_final_layer_linearity(self, rng):
        net = Network(build_preset("mlp", (4, 4, 1), 5), (4, 4, 1), 5)
        net.init_weights(1)
        x = rng.uniform(0, 1, (4, 4, 1))
        base = logits(net, x)
        final = net.layers[-1]
        final.params[0] = final.params[0] * np.float32(2.0)
        final.params[1] = final.params[1] * np.float32(2.0)
        np.testing.assert_allclose(logits(net, x), 2.0 * base, rtol=1e-6)


class TestLoss:
    def test_uniform_logits_give_ln_k(self):
        net = linear_net(n_classes=4)
        lg = loss_and_input_grad(net, np.ones((2, 2, 1)), 2)
        assert lg.value == pytest.approx(np.log(4), abs=1e-6)

    def test_saturated_fixture(self):
        net = linear_net(n_classes=4)
        net.layers[1].params[1] = np.array([0, 0, 100.0, 0], dtype=np.float32)
        lg = loss_and_input_grad(net, np.ones((2, 2, 1)), 2)
        assert lg.value == pytest.approx(0.0, abs=1e-6)
        assert np.max(np.abs(lg.grad_input)) < 1e-6

    def test_loss_non_negative(self, rng):
        net = linear_net()
        net.init_weights(9)
        for _ in range(20):
            lg = loss_and_input_grad(net, rng.uniform(0, 1, (2, 2, 1)), 0)
            assert lg.value >= 0.0

    def test_invalid_class(self):
        net = linear_net(n_classes=4)
        with pytest.raises(ValueError):
            loss_and_input_grad(net, np.zeros((2, 2, 1)), 4)


class TestTrain:
    def _blobs(self, rng, n=60):
        a = rng.normal(0.3, 0.03, (n, 2, 2, 1))
        b = rng.normal(0.7, 0.03, (n, 2, 2, 1))
        X = np.clip(np.concatenate([a, b]), 0, 1)
        y = np.array([0] * n + [1] * n)
        return X, y

    def test_zero_epochs_is_identity(self, rng):
        net = linear_net(n_classes=2)
        net.init_weights(5)
        before = [w.copy() for w in net.layers[1].params]
        X, y = self._blobs(rng)
        train(net, X, y, epochs=0)
        for w0, w1 in zip(before, net.layers[1].params):
            np.testing.assert_array_equal(w0, w1)

    def test_separable_blobs_learned(self, rng):
        X, y = self._blobs(rng)
        net = linear_net(n_classes=2)
        net.init_weights(5)
        train(net, X, y, epochs=50, learning_rate=0.5, batch_size=16, seed=5)
        assert net.accuracy(X, y) >= 0.99

    def test_same_seed_bit_identical(self, rng):
        X, y = self._blobs(rng)
        nets = []
        for _ in range(2):
            net = linear_net(n_classes=2)
            net.init_weights(5)
            train(net, X, y, epochs=5, learning_rate=0.1, batch_size=16, seed=11)
            nets.append(net)
        for w0, w1 in zip(nets[0].layers[1].params, nets[1].layers[1].params):
            np.testing.assert_array_equal(w0, w1)

    def test_empty_data_rejected(self):
        net = linear_net(n_classes=2)
        with pytest.raises(ValueError):
            train(net, np.zeros((0, 2, 2, 1)), np.zeros(0, dtype=int), epochs=1)


class TestEstimator:
    def test_fit_predict(self, rng):
        X = np.clip(np.concatenate([
            rng.normal(0.3, 0.03, (40, 2, 2, 1)),
            rng.normal(0.7, 0.03, (40, 2, 2, 1)),
        ]), 0, 1)
        y = np.array([0] * 40 + [1] * 40)
        est = NeuralNetClassifier(preset="mlp", epochs=40, learning_rate=0.5,
                                  batch_size=16, random_state=0)
        est.fit(X, y)
        assert (est.predict(X) == y).mean() >= 0.99
        assert est.decision_function(X).shape == (80, 2)

    def test_get_params_round_trip(self):
        est = NeuralNetClassifier(epochs=7, learning_rate=0.2)
        clone = NeuralNetClassifier(**est.get_params())
        assert clone.get_params() == est.get_params()
