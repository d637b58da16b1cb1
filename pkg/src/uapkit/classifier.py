"""Trainable image classifier with exact input gradients.

``Network`` is the immutable-after-training core: an ordered stack of
layers, forward logits, softmax cross-entropy loss and its reverse-mode
gradient with respect to the input pixels. ``NeuralNetClassifier`` wraps
it in a scikit-learn estimator (fit / predict / decision_function).
"""

import json
import struct
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from .exceptions import FormatError
from .layers import Conv2D, Dense, Flatten, Layer, MaxPool2D, ReLU, layer_from_config
from .validation import check_image_batch, check_labels

MODEL_MAGIC = b"UAPM"
MODEL_VERSION = 1

PRESETS = ("mlp", "cnn")


@dataclass
class LossGradient:
    """Scalar loss with the gradient of the loss w.r.t. input pixels."""

    value: float
    grad_input: np.ndarray


def build_preset(name, input_shape, n_classes):
    """Layer stack for a named architecture preset."""
    h, w, c = input_shape
    if name == "mlp":
        d = h * w * c
        return [Flatten(), Dense(d, 128), ReLU(), Dense(128, n_classes)]
    if name == "cnn":
        layers = [
            Conv2D(c, 16, 3, stride=1, padding=1),
            ReLU(),
            MaxPool2D(2),
            Conv2D(16, 32, 3, stride=1, padding=1),
            ReLU(),
            MaxPool2D(2),
            Flatten(),
        ]
        shape = tuple(input_shape)
        for layer in layers:
            shape = layer.output_shape(shape)
        layers.append(Dense(shape[0], n_classes))
        return layers
    raise ValueError(f"unknown preset {name!r}; choose from {PRESETS}")


def softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


class Network:
    """Layer stack with forward logits and reverse-mode gradients."""

    def __init__(self, layers, input_shape, n_classes, init_seed=0):
        self.layers = list(layers)
        self.input_shape = tuple(int(d) for d in input_shape)
        self.n_classes = int(n_classes)
        self.init_seed = int(init_seed)
        shape = self.input_shape
        for layer in self.layers:
            shape = layer.output_shape(shape)
        if shape != (self.n_classes,):
            raise ValueError(
                f"layer stack produces shape {shape}, expected ({self.n_classes},)"
            )

    def init_weights(self, seed):
        self.init_seed = int(seed)
        rng = np.random.default_rng(seed)
        for layer in self.layers:
            layer.init_params(rng)

    # -- forward ---------------------------------------------------------

    def logits_batch(self, X):
        X = check_image_batch(X, self.input_shape)
        out = X
        for layer in self.layers:
            out, _ = layer.forward(out)
        return out

    def logits(self, x):
        return self.logits_batch(x)[0]

    def predict_batch(self, X):
        # argmax takes the first maximum, so ties break to the lowest index
        return np.argmax(self.logits_batch(X), axis=1)

    def classify(self, x):
        return int(self.predict_batch(x)[0])

    # -- loss and gradients ----------------------------------------------

    def _forward_caches(self, X):
        caches = []
        out = X
        for layer in self.layers:
            out, cache = layer.forward(out)
            caches.append(cache)
        return out, caches

    def _loss_grads(self, X, y):
        """Mean cross-entropy over the batch; returns (loss, grad_x, grads)."""
        n = X.shape[0]
        logits, caches = self._forward_caches(X)
        probs = softmax(logits)
        eps = np.finfo(np.float64).tiny
        loss = float(-np.mean(np.log(probs[np.arange(n), y] + eps)))
        grad = probs
        grad[np.arange(n), y] -= 1.0
        grad /= n
        param_grads = [None] * len(self.layers)
        for i in range(len(self.layers) - 1, -1, -1):
            grad, pg = self.layers[i].backward(grad, caches[i])
            param_grads[i] = pg
        return loss, grad, param_grads

    def loss_and_input_grad(self, x, y):
        """Softmax cross-entropy and its exact gradient w.r.t. pixels."""
        X = check_image_batch(x, self.input_shape)
        if X.shape[0] != 1:
            raise ValueError("loss_and_input_grad expects a single image")
        y = int(y)
        if not 0 <= y < self.n_classes:
            raise ValueError(f"class id {y} out of range [0, {self.n_classes})")
        loss, grad_x, _ = self._loss_grads(X, np.array([y]))
        return LossGradient(value=loss, grad_input=grad_x[0])

    # -- training ----------------------------------------------------------

    def train_sgd(self, X, y, epochs, learning_rate, batch_size, seed):
        """Mini-batch SGD on cross-entropy; deterministic given seed."""
        X = check_image_batch(X, self.input_shape)
        y = check_labels(y, self.n_classes)
        if X.shape[0] != y.shape[0]:
            raise ValueError("X and y lengths differ")
        n = X.shape[0]
        for epoch in range(int(epochs)):
            rng = np.random.default_rng(np.random.SeedSequence([int(seed), epoch]))
            order = rng.permutation(n)
            for start in range(0, n, int(batch_size)):
                idx = order[start : start + int(batch_size)]
                _, _, param_grads = self._loss_grads(X[idx], y[idx])
                for layer, grads in zip(self.layers, param_grads):
                    for k, g in enumerate(grads):
                        w64 = layer.params[k].astype(np.float64)
                        w64 -= learning_rate * g
                        layer.params[k] = w64.astype(np.float32)
        return self

    def accuracy(self, X, y):
        y = check_labels(y, self.n_classes)
        return float(np.mean(self.predict_batch(X) == y))

    # -- serialization -----------------------------------------------------

    def save(self, path):
        save_model(self, path)


# -- module-level functional surface --------------------------------------


def classify(network, x):
    """Predicted class id: argmax of logits, ties to the lowest index."""
    return network.classify(x)


def logits(network, x):
    return network.logits(x)


def loss_and_input_grad(network, x, y):
    return network.loss_and_input_grad(x, y)


def train(network, X, y, epochs, learning_rate=0.1, batch_size=32, seed=0):
    if np.asarray(X).shape[0] == 0:
        raise ValueError("training data must be non-empty")
    return network.train_sgd(X, y, epochs, learning_rate, batch_size, seed)


# -- model file format (UAPM) ----------------------------------------------


def save_model(network, path):
    """Write the UAPM binary format (atomically via a temp file)."""
    meta = {
        "layers": [layer.config() for layer in network.layers],
        "input_shape": list(network.input_shape),
        "n_classes": network.n_classes,
        "init_seed": network.init_seed,
    }
    meta_bytes = json.dumps(meta, sort_keys=True).encode("utf-8")
    blob = bytearray()
    blob += MODEL_MAGIC
    blob += struct.pack("<I", MODEL_VERSION)
    blob += struct.pack("<I", len(meta_bytes))
    blob += meta_bytes
    for layer in network.layers:
        for w in layer.params:
            blob += np.ascontiguousarray(w, dtype="<f4").tobytes()
    from .fileio import atomic_write_bytes

    atomic_write_bytes(path, bytes(blob))


def load_model(path):
    """Read a UAPM file back into a Network; round-trip is bit-exact."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 12:
        raise FormatError(f"model file truncated at offset {len(raw)}: header needs 12 bytes")
    if raw[:4] != MODEL_MAGIC:
        raise FormatError(f"bad magic at offset 0: expected {MODEL_MAGIC!r}, got {raw[:4]!r}")
    (version,) = struct.unpack_from("<I", raw, 4)
    if version != MODEL_VERSION:
        raise FormatError(f"unsupported model format version {version}")
    (meta_len,) = struct.unpack_from("<I", raw, 8)
    off = 12
    if len(raw) < off + meta_len:
        raise FormatError(f"model file truncated at offset {len(raw)}: metadata ends at {off + meta_len}")
    try:
        meta = json.loads(raw[off : off + meta_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"bad metadata at offset {off}: {exc}") from exc
    off += meta_len
    layers = [layer_from_config(cfg) for cfg in meta["layers"]]
    net = Network(layers, meta["input_shape"], meta["n_classes"], meta.get("init_seed", 0))
    for layer in net.layers:
        for k, w in enumerate(layer.params):
            nbytes = w.size * 4
            if len(raw) < off + nbytes:
                raise FormatError(
                    f"model file truncated at offset {len(raw)}: weight blob ends at {off + nbytes}"
                )
            arr = np.frombuffer(raw, dtype="<f4", count=w.size, offset=off)
            layer.params[k] = arr.reshape(w.shape).copy()
            off += nbytes
    if off != len(raw):
        raise FormatError(f"trailing bytes at offset {off}")
    return net


# -- sklearn estimator -------------------------------------------------------


class NeuralNetClassifier(ClassifierMixin, BaseEstimator):
    """Image classifier over (n, H, W, C) batches with pixel gradients.

    Parameters
    ----------
    preset : {'mlp', 'cnn'}
        Architecture preset; layer sizes derive from the data at fit time.
    epochs, learning_rate, batch_size : SGD hyperparameters.
    n_classes : int or None
        Number of classes; inferred from ``y`` when None.
    random_state : int
        Seeds both weight init and epoch shuffling.
    """

    def __init__(self, preset="mlp", epochs=30, learning_rate=0.1,
                 batch_size=32, n_classes=None, random_state=0):
        self.preset = preset
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.n_classes = n_classes
        self.random_state = random_state

    def fit(self, X, y):
        X = check_image_batch(X)
        k = self.n_classes if self.n_classes is not None else int(np.max(y)) + 1
        y = check_labels(y, k)
        net = Network(build_preset(self.preset, X.shape[1:], k), X.shape[1:], k)
        net.init_weights(self.random_state)
        net.train_sgd(X, y, self.epochs, self.learning_rate,
                      self.batch_size, self.random_state)
        self.network_ = net
        self.classes_ = np.arange(k)
        return self

    def decision_function(self, X):
        return self.network_.logits_batch(X)

    def predict(self, X):
        return self.network_.predict_batch(X)
