"""Layers with explicit forward/backward passes over NCHW arrays.

Layers hold only configuration. Parameters live in a flat ``{name: array}``
mapping passed to every call, so a forward pass never mutates anything.
``forward`` returns ``(y, cache, updates)`` where ``updates`` carries new
running statistics in training mode; ``backward`` returns ``(dx, grads)``.
"""
from __future__ import annotations

import numpy as np

from radioflow import kernels

BN_MOMENTUM = 0.1
BN_EPS = 1e-5


class Layer:
    name: str = ""

    def param_shapes(self) -> dict:
        """Trainable parameter shapes keyed by full name."""
        return {}

    def buffer_shapes(self) -> dict:
        """Non-trainable state (running statistics) keyed by full name."""
        return {}

    def init_params(self, rng) -> dict:
        return {}

    def init_buffers(self) -> dict:
        return {}

    def out_shape(self, in_shape: tuple) -> tuple:
        return in_shape

    def forward(self, w, x, train=False):
        raise NotImplementedError

    def backward(self, w, cache, dy):
        raise NotImplementedError


class Conv2d(Layer):
    def __init__(self, name, in_ch, out_ch, kernel=3, stride=1, pad=None, bias=True):
        self.name, self.in_ch, self.out_ch = name, in_ch, out_ch
        self.k, self.stride = kernel, stride
        self.pad = kernel // 2 if pad is None else pad
        self.bias = bias

    def param_shapes(self):
        shapes = {f"{self.name}.weight": (self.out_ch, self.in_ch, self.k, self.k)}
        if self.bias:
            shapes[f"{self.name}.bias"] = (self.out_ch,)
        return shapes

    def init_params(self, rng):
        fan_in = self.in_ch * self.k * self.k
        p = {f"{self.name}.weight": rng.standard_normal(
            (self.out_ch, self.in_ch, self.k, self.k)) * np.sqrt(2.0 / fan_in)}
        if self.bias:
            p[f"{self.name}.bias"] = np.zeros(self.out_ch)
        return p

    def out_shape(self, in_shape):
        c, h, wd = in_shape
        if c != self.in_ch:
            raise ValueError(f"{self.name}: expected {self.in_ch} channels, got {c}")
        ho = (h + 2 * self.pad - self.k) // self.stride + 1
        wo = (wd + 2 * self.pad - self.k) // self.stride + 1
        if ho < 1 or wo < 1:
            raise ValueError(f"{self.name}: input {h}x{wd} too small")
        return (self.out_ch, ho, wo)

    def forward(self, w, x, train=False):
        n = x.shape[0]
        _, ho, wo = self.out_shape(x.shape[1:])
        cols = kernels.im2col(x, self.k, self.k, self.stride, self.pad)
        wmat = w[f"{self.name}.weight"].reshape(self.out_ch, -1)
        y = cols @ wmat.T
        if self.bias:
            y += w[f"{self.name}.bias"]
        y = y.reshape(n, ho, wo, self.out_ch).transpose(0, 3, 1, 2)
        return np.ascontiguousarray(y), (x.shape, cols), {}

    def backward(self, w, cache, dy):
        x_shape, cols = cache
        d2 = dy.transpose(0, 2, 3, 1).reshape(-1, self.out_ch)
        wmat = w[f"{self.name}.weight"].reshape(self.out_ch, -1)
        grads = {f"{self.name}.weight": (d2.T @ cols).reshape(w[f"{self.name}.weight"].shape)}
        if self.bias:
            grads[f"{self.name}.bias"] = d2.sum(axis=0)
        dx = kernels.col2im(np.ascontiguousarray(d2 @ wmat), x_shape, self.k, self.k,
                            self.stride, self.pad)
        return dx, grads


class BatchNorm2d(Layer):
    """Per-channel normalization; batch statistics in training, running ones otherwise."""

    def __init__(self, name, channels):
        self.name, self.ch = name, channels

    def param_shapes(self):
        return {f"{self.name}.gamma": (self.ch,), f"{self.name}.beta": (self.ch,)}

    def buffer_shapes(self):
        return {f"{self.name}.running_mean": (self.ch,), f"{self.name}.running_var": (self.ch,)}

    def init_params(self, rng):
        return {f"{self.name}.gamma": np.ones(self.ch), f"{self.name}.beta": np.zeros(self.ch)}

    def init_buffers(self):
        return {f"{self.name}.running_mean": np.zeros(self.ch),
                f"{self.name}.running_var": np.ones(self.ch)}

    def forward(self, w, x, train=False):
        gamma = w[f"{self.name}.gamma"][None, :, None, None]
        beta = w[f"{self.name}.beta"][None, :, None, None]
        updates = {}
        if train:
            mean = x.mean(axis=(0, 2, 3))
            var = x.var(axis=(0, 2, 3))
            m = x.shape[0] * x.shape[2] * x.shape[3]
            unbiased = var * m / max(m - 1, 1)
            rm, rv = w[f"{self.name}.running_mean"], w[f"{self.name}.running_var"]
            updates = {f"{self.name}.running_mean": ((1 - BN_MOMENTUM) * rm + BN_MOMENTUM * mean).astype(rm.dtype),
                       f"{self.name}.running_var": ((1 - BN_MOMENTUM) * rv + BN_MOMENTUM * unbiased).astype(rv.dtype)}
        else:
            mean = w[f"{self.name}.running_mean"]
            var = w[f"{self.name}.running_var"]
        inv = 1.0 / np.sqrt(var + BN_EPS)
        xhat = (x - mean[None, :, None, None]) * inv[None, :, None, None]
        y = gamma * xhat + beta
        return y.astype(x.dtype, copy=False), (xhat, inv, train), updates

    def backward(self, w, cache, dy):
        xhat, inv, train = cache
        gamma = w[f"{self.name}.gamma"]
        grads = {f"{self.name}.gamma": (dy * xhat).sum(axis=(0, 2, 3)),
                 f"{self.name}.beta": dy.sum(axis=(0, 2, 3))}
        dxhat = dy * gamma[None, :, None, None]
        if not train:
            return dxhat * inv[None, :, None, None], grads
        mean_d = dxhat.mean(axis=(0, 2, 3), keepdims=True)
        mean_dx = (dxhat * xhat).mean(axis=(0, 2, 3), keepdims=True)
        dx = (dxhat - mean_d - xhat * mean_dx) * inv[None, :, None, None]
        return dx, grads


class ReLU(Layer):
    def __init__(self, name=""):
        self.name = name

    def forward(self, w, x, train=False):
        mask = x > 0
        return x * mask, mask, {}

    def backward(self, w, cache, dy):
        return dy * cache, {}


class GlobalAvgPool(Layer):
    """``(N, C, H, W) -> (N, C)``."""

    def __init__(self, name=""):
        self.name = name

    def out_shape(self, in_shape):
        return (in_shape[0],)

    def forward(self, w, x, train=False):
        return x.mean(axis=(2, 3)), x.shape, {}

    def backward(self, w, cache, dy):
        n, c, h, wd = cache
        dx = np.broadcast_to(dy[:, :, None, None] / (h * wd), cache)
        return np.ascontiguousarray(dx), {}


class Flatten(Layer):
    def __init__(self, name=""):
        self.name = name

    def out_shape(self, in_shape):
        return (int(np.prod(in_shape)),)

    def forward(self, w, x, train=False):
        return x.reshape(x.shape[0], -1), x.shape, {}

    def backward(self, w, cache, dy):
        return dy.reshape(cache), {}


class Linear(Layer):
    def __init__(self, name, in_features, out_features):
        self.name, self.n_in, self.n_out = name, in_features, out_features

    def param_shapes(self):
        return {f"{self.name}.weight": (self.n_out, self.n_in), f"{self.name}.bias": (self.n_out,)}

    def init_params(self, rng):
        bound = 1.0 / np.sqrt(self.n_in)
        return {f"{self.name}.weight": rng.uniform(-bound, bound, (self.n_out, self.n_in)),
                f"{self.name}.bias": np.zeros(self.n_out)}

    def out_shape(self, in_shape):
        if in_shape != (self.n_in,):
            raise ValueError(f"{self.name}: expected ({self.n_in},), got {in_shape}")
        return (self.n_out,)

    def forward(self, w, x, train=False):
        return x @ w[f"{self.name}.weight"].T + w[f"{self.name}.bias"], x, {}

    def backward(self, w, cache, dy):
        grads = {f"{self.name}.weight": dy.T @ cache, f"{self.name}.bias": dy.sum(axis=0)}
        return dy @ w[f"{self.name}.weight"], grads


class Sequential(Layer):
    """Chain of layers; also the building block of composite layers."""

    def __init__(self, name, layers):
        self.name, self.layers = name, list(layers)

    def param_shapes(self):
        out = {}
        for layer in self.layers:
            out.update(layer.param_shapes())
        return out

    def buffer_shapes(self):
        out = {}
        for layer in self.layers:
            out.update(layer.buffer_shapes())
        return out

    def init_params(self, rng):
        out = {}
        for layer in self.layers:
            out.update(layer.init_params(rng))
        return out

    def init_buffers(self):
        out = {}
        for layer in self.layers:
            out.update(layer.init_buffers())
        return out

    def out_shape(self, in_shape):
        for layer in self.layers:
            in_shape = layer.out_shape(in_shape)
        return in_shape

    def forward(self, w, x, train=False):
        caches, updates = [], {}
        for layer in self.layers:
            x, cache, upd = layer.forward(w, x, train)
            caches.append(cache)
            updates.update(upd)
        return x, caches, updates

    def backward(self, w, cache, dy):
        grads = {}
        for layer, c in zip(reversed(self.layers), reversed(cache)):
            dy, g = layer.backward(w, c, dy)
            grads.update(g)
        return dy, grads


class ResidualBlock(Sequential):
    """Two 3x3 conv+norm layers plus a shortcut, then ReLU.

    The shortcut is a strided 1x1 conv+norm projection whenever the block
    changes width or resolution, identity otherwise.
    """

    def __init__(self, name, in_ch, out_ch, stride=1):
        main = [Conv2d(f"{name}.conv1", in_ch, out_ch, 3, stride, bias=False),
                BatchNorm2d(f"{name}.bn1", out_ch), ReLU(),
                Conv2d(f"{name}.conv2", out_ch, out_ch, 3, 1, bias=False),
                BatchNorm2d(f"{name}.bn2", out_ch)]
        super().__init__(name, main)
        self.main = Sequential(f"{name}.main", main)
        if stride != 1 or in_ch != out_ch:
            self.shortcut = Sequential(f"{name}.proj", [
                Conv2d(f"{name}.proj", in_ch, out_ch, 1, stride, pad=0, bias=False),
                BatchNorm2d(f"{name}.proj_bn", out_ch)])
            self.layers = main + self.shortcut.layers
        else:
            self.shortcut = None

    def out_shape(self, in_shape):
        return self.main.out_shape(in_shape)

    def forward(self, w, x, train=False):
        y, main_cache, updates = self.main.forward(w, x, train)
        if self.shortcut is not None:
            s, sc_cache, upd = self.shortcut.forward(w, x, train)
            updates.update(upd)
        else:
            s, sc_cache = x, None
        z = y + s
        mask = z > 0
        return z * mask, (main_cache, sc_cache, mask), updates

    def backward(self, w, cache, dy):
        main_cache, sc_cache, mask = cache
        dz = dy * mask
        dx, grads = self.main.backward(w, main_cache, dz)
        if self.shortcut is not None:
            dxs, g = self.shortcut.backward(w, sc_cache, dz)
            grads.update(g)
            dx = dx + dxs
        else:
            dx = dx + dz
        return dx, grads
