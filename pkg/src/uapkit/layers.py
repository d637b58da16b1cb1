"""Network layers with explicit forward and backward passes.

Data layout is channels-last: batches are (n, H, W, C), dense inputs are
(n, features). Parameters are stored as float32 (the on-disk precision);
all arithmetic runs in float64.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def _glorot_uniform(rng, shape, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    w = rng.uniform(-limit, limit, size=shape)
    return w.astype(np.float32)


class Layer:
    """Base class: a layer owns its parameters and shape arithmetic."""

    params: list

    def __init__(self):
        self.params = []

    def init_params(self, rng):
        pass

    def output_shape(self, in_shape):
        raise NotImplementedError

    def forward(self, x):
        """Return (output, cache) for a batch x."""
        raise NotImplementedError

    def backward(self, grad_out, cache):
        """Return (grad_input, grad_params) given upstream gradient."""
        raise NotImplementedError

    def config(self):
        raise NotImplementedError


class Dense(Layer):
    def __init__(self, in_features, out_features):
        super().__init__()
        if in_features < 1 or out_features < 1:
            raise ValueError("dense layer sizes must be positive")
        self.in_features = int(in_features)
        self.out_features = int(out_features)
        self.params = [
            np.zeros((self.in_features, self.out_features), dtype=np.float32),
            np.zeros(self.out_features, dtype=np.float32),
        ]

    def init_params(self, rng):
        self.params[0] = _glorot_uniform(
            rng, (self.in_features, self.out_features),
            self.in_features, self.out_features,
        )
        self.params[1] = np.zeros(self.out_features, dtype=np.float32)

    def output_shape(self, in_shape):
        if len(in_shape) != 1 or in_shape[0] != self.in_features:
            raise ValueError(
                f"dense layer expects ({self.in_features},), got {in_shape}"
            )
        return (self.out_features,)

    def forward(self, x):
        w = self.params[0].astype(np.float64)
        b = self.params[1].astype(np.float64)
        return x @ w + b, x

    def backward(self, grad_out, cache):
        x = cache
        w = self.params[0].astype(np.float64)
        grad_in = grad_out @ w.T
        grad_w = x.T @ grad_out
        grad_b = grad_out.sum(axis=0)
        return grad_in, [grad_w, grad_b]

    def config(self):
        return {"kind": "dense", "in": self.in_features, "out": self.out_features}


class ReLU(Layer):
    def output_shape(self, in_shape):
        return tuple(in_shape)

    def forward(self, x):
        mask = x > 0
        return x * mask, mask

    def backward(self, grad_out, cache):
        return grad_out * cache, []

    def config(self):
        return {"kind": "relu"}


class Flatten(Layer):
    def output_shape(self, in_shape):
        return (int(np.prod(in_shape)),)

    def forward(self, x):
        return x.reshape(x.shape[0], -1), x.shape

    def backward(self, grad_out, cache):
        return grad_out.reshape(cache), []

    def config(self):
        return {"kind": "flatten"}


class Conv2D(Layer):
    """2-D convolution (cross-correlation), channels-last, zero padding."""

    def __init__(self, in_channels, out_channels, kernel_size, stride=1, padding=0):
        super().__init__()
        self.in_channels = int(in_channels)
        self.out_channels = int(out_channels)
        self.kernel_size = int(kernel_size)
        self.stride = int(stride)
        self.padding = int(padding)
        if min(self.in_channels, self.out_channels, self.kernel_size, self.stride) < 1:
            raise ValueError("conv2d sizes must be positive")
        if self.padding < 0:
            raise ValueError("conv2d padding must be non-negative")
        k = self.kernel_size
        self.params = [
            np.zeros((k, k, self.in_channels, self.out_channels), dtype=np.float32),
            np.zeros(self.out_channels, dtype=np.float32),
        ]

    def init_params(self, rng):
        k = self.kernel_size
        fan_in = k * k * self.in_channels
        fan_out = k * k * self.out_channels
        self.params[0] = _glorot_uniform(
            rng, (k, k, self.in_channels, self.out_channels), fan_in, fan_out
        )
        self.params[1] = np.zeros(self.out_channels, dtype=np.float32)

    def _out_hw(self, h, w):
        k, s, p = self.kernel_size, self.stride, self.padding
        ho = (h + 2 * p - k) // s + 1
        wo = (w + 2 * p - k) // s + 1
        if ho < 1 or wo < 1:
            raise ValueError("conv2d kernel larger than padded input")
        return ho, wo

    def output_shape(self, in_shape):
        if len(in_shape) != 3 or in_shape[2] != self.in_channels:
            raise ValueError(
                f"conv2d expects (H, W, {self.in_channels}), got {in_shape}"
            )
        ho, wo = self._out_hw(in_shape[0], in_shape[1])
        return (ho, wo, self.out_channels)

    def _im2col(self, xp, ho, wo):
        k, s = self.kernel_size, self.stride
        # (n, ho', wo', C, k, k) -> stride-subsampled windows
        win = sliding_window_view(xp, (k, k), axis=(1, 2))[:, ::s, ::s]
        win = win[:, :ho, :wo]
        # -> (n, ho, wo, k, k, C) so columns are ordered (kh, kw, C)
        win = win.transpose(0, 1, 2, 4, 5, 3)
        n = xp.shape[0]
        return win.reshape(n * ho * wo, k * k * self.in_channels)

    def forward(self, x):
        k, s, p = self.kernel_size, self.stride, self.padding
        n, h, w, _ = x.shape
        ho, wo = self._out_hw(h, w)
        xp = np.pad(x, ((0, 0), (p, p), (p, p), (0, 0))) if p else x
        cols = self._im2col(xp, ho, wo)
        wmat = self.params[0].astype(np.float64).reshape(-1, self.out_channels)
        out = cols @ wmat + self.params[1].astype(np.float64)
        out = out.reshape(n, ho, wo, self.out_channels)
        return out, (cols, xp.shape, (h, w))

    def backward(self, grad_out, cache):
        cols, xp_shape, (h, w) = cache
        k, s, p = self.kernel_size, self.stride, self.padding
        n, ho, wo, _ = grad_out.shape
        wmat = self.params[0].astype(np.float64).reshape(-1, self.out_channels)
        gmat = grad_out.reshape(-1, self.out_channels)

        grad_w = (cols.T @ gmat).reshape(self.params[0].shape)
        grad_b = gmat.sum(axis=0)

        gcols = (gmat @ wmat.T).reshape(n, ho, wo, k, k, self.in_channels)
        gxp = np.zeros(xp_shape, dtype=np.float64)
        for i in range(k):
            for j in range(k):
                gxp[:, i : i + s * ho : s, j : j + s * wo : s, :] += gcols[:, :, :, i, j, :]
        grad_in = gxp[:, p : p + h, p : p + w, :] if p else gxp
        return grad_in, [grad_w, grad_b]

    def config(self):
        return {
            "kind": "conv2d",
            "in_channels": self.in_channels,
            "out_channels": self.out_channels,
            "kernel_size": self.kernel_size,
            "stride": self.stride,
            "padding": self.padding,
        }


class MaxPool2D(Layer):
    """Max pooling; ties within a window route the gradient to the first max."""

    def __init__(self, window, stride=None):
        super().__init__()
        self.window = int(window)
        self.stride = int(stride) if stride is not None else self.window
        if self.window < 1 or self.stride < 1:
            raise ValueError("maxpool2d sizes must be positive")

    def _out_hw(self, h, w):
        ho = (h - self.window) // self.stride + 1
        wo = (w - self.window) // self.stride + 1
        if ho < 1 or wo < 1:
            raise ValueError("maxpool2d window larger than input")
        return ho, wo

    def output_shape(self, in_shape):
        if len(in_shape) != 3:
            raise ValueError(f"maxpool2d expects (H, W, C), got {in_shape}")
        ho, wo = self._out_hw(in_shape[0], in_shape[1])
        return (ho, wo, in_shape[2])

    def forward(self, x):
        k, s = self.window, self.stride
        n, h, w, c = x.shape
        ho, wo = self._out_hw(h, w)
        win = sliding_window_view(x, (k, k), axis=(1, 2))[:, ::s, ::s]
        win = win[:, :ho, :wo].reshape(n, ho, wo, c, k * k)
        idx = win.argmax(axis=-1)
        out = np.take_along_axis(win, idx[..., np.newaxis], axis=-1)[..., 0]
        return out, (idx, x.shape)

    def backward(self, grad_out, cache):
        idx, x_shape = cache
        k, s = self.window, self.stride
        n, ho, wo, c = grad_out.shape
        ni, hi, wi, ci = np.indices((n, ho, wo, c), sparse=False)
        hpos = hi * s + idx // k
        wpos = wi * s + idx % k
        grad_in = np.zeros(x_shape, dtype=np.float64)
        np.add.at(grad_in, (ni, hpos, wpos, ci), grad_out)
        return grad_in, []

    def config(self):
        return {"kind": "maxpool2d", "window": self.window, "stride": self.stride}


def layer_from_config(cfg):
    """Build a layer from its config() dict."""
    kind = cfg.get("kind")
    if kind == "dense":
        return Dense(cfg["in"], cfg["out"])
    if kind == "relu":
        return ReLU()
    if kind == "flatten":
        return Flatten()
    if kind == "conv2d":
        return Conv2D(
            cfg["in_channels"], cfg["out_channels"], cfg["kernel_size"],
            stride=cfg.get("stride", 1), padding=cfg.get("padding", 0),
        )
    if kind == "maxpool2d":
        return MaxPool2D(cfg["window"], stride=cfg.get("stride"))
    raise ValueError(f"unknown layer kind {kind!r}")
