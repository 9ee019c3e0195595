"""Layer specs, architecture presets, weights and the functional forward/backward."""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass
from functools import lru_cache

import numpy as np

from radioflow.nn.layers import (BatchNorm2d, Conv2d, Flatten, GlobalAvgPool, Linear, ReLU,
                                 ResidualBlock, Sequential)

KINDS = ("conv", "residual", "pool", "flatten", "fc")
DEFAULT_WIDTHS = (16, 32, 64, 128)


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    channels: int = 0       # output channels, or output features for "fc"
    stride: int = 1
    activation: bool = True  # conv only: append ReLU

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if self.kind in ("conv", "residual", "fc") and self.channels < 1:
            raise ValueError(f"{self.kind} layer needs channels >= 1")
        if self.stride < 1:
            raise ValueError("stride must be >= 1")


def _stages(widths, n_stages, blocks_per_stage=0):
    specs = []
    for i in range(n_stages):
        stride = 1 if i == 0 else 2
        if blocks_per_stage:
            specs += [LayerSpec("residual", widths[i], stride)]
            specs += [LayerSpec("residual", widths[i])] * (blocks_per_stage - 1)
        else:
            specs.append(LayerSpec("conv", widths[i], stride))
    return specs


def architecture(name: str, outputs: int, widths=DEFAULT_WIDTHS) -> tuple:
    """Preset layer list: ``nano`` / ``micro`` / ``mini`` conv stages, or ``resnet18``."""
    name = name.lower()
    head = [LayerSpec("pool"), LayerSpec("flatten"), LayerSpec("fc", outputs)]
    stages = {"nano": 1, "micro": 2, "mini": 4}
    if name in stages:
        body = _stages(widths, stages[name])
    elif name == "resnet18":
        body = [LayerSpec("conv", widths[0])] + _stages(widths, 4, blocks_per_stage=2)
    else:
        raise ValueError(f"unknown architecture {name!r}")
    return tuple(body + head)


def arch_json(specs, input_shape) -> str:
    return json.dumps({"input_shape": list(input_shape), "layers": [asdict(s) for s in specs]},
                      sort_keys=True, separators=(",", ":"))


def fingerprint(specs, input_shape) -> str:
    return hashlib.sha256(arch_json(specs, input_shape).encode()).hexdigest()


class Network(Sequential):
    """Concrete layer chain for a spec list and a ``(C, H, W)`` input shape."""

    def __init__(self, specs, input_shape):
        specs = tuple(specs)
        input_shape = tuple(int(v) for v in input_shape)
        layers = []
        shape = input_shape
        for i, s in enumerate(specs):
            name = f"l{i}"
            if s.kind == "conv":
                parts = [Conv2d(f"{name}.conv", shape[0], s.channels, 3, s.stride, bias=False),
                         BatchNorm2d(f"{name}.bn", s.channels)]
                if s.activation:
                    parts.append(ReLU())
                layer = Sequential(name, parts)
            elif s.kind == "residual":
                layer = ResidualBlock(name, shape[0], s.channels, s.stride)
            elif s.kind == "pool":
                if len(shape) != 3:
                    raise ValueError(f"layer {i}: pool needs a (C, H, W) input, got {shape}")
                layer = GlobalAvgPool(name)
            elif s.kind == "flatten":
                layer = Flatten(name)
            else:
                if len(shape) != 1:
                    raise ValueError(f"layer {i}: fc needs a flat input, got {shape}")
                layer = Linear(name, shape[0], s.channels)
            shape = layer.out_shape(shape)
            layers.append(layer)
        super().__init__("net", layers)
        self.specs = specs
        self.input_shape = input_shape
        self.output_shape = shape
        self.fingerprint = fingerprint(specs, input_shape)

    def init_weights(self, seed=0, dtype=np.float32) -> "ModelWeights":
        rng = np.random.default_rng(seed)
        tensors = {}
        tensors.update(self.init_params(rng))
        tensors.update(self.init_buffers())
        order = list(self.param_shapes()) + list(self.buffer_shapes())
        return ModelWeights({k: np.asarray(tensors[k], dtype=dtype) for k in order},
                            self.fingerprint, self.specs, self.input_shape)


@lru_cache(maxsize=64)
def network_for(specs: tuple, input_shape: tuple) -> Network:
    return Network(specs, input_shape)


@dataclass(frozen=True, eq=False)
class ModelWeights:
    tensors: dict
    arch_fingerprint: str
    specs: tuple
    input_shape: tuple

    def __post_init__(self):
        net = self.network
        if net.fingerprint != self.arch_fingerprint:
            raise ValueError("architecture fingerprint does not match the layer specs")
        expected = {**net.param_shapes(), **net.buffer_shapes()}
        if set(expected) != set(self.tensors):
            missing = sorted(set(expected) ^ set(self.tensors))
            raise ValueError(f"tensor names do not match architecture: {missing[:4]}")
        for k, shape in expected.items():
            if self.tensors[k].shape != tuple(shape):
                raise ValueError(f"{k}: shape {self.tensors[k].shape} != {tuple(shape)}")
            if not np.all(np.isfinite(self.tensors[k])):
                raise ValueError(f"{k}: non-finite values")

    @property
    def network(self) -> Network:
        return network_for(tuple(self.specs), tuple(self.input_shape))

    @property
    def trainable(self) -> tuple:
        return tuple(self.network.param_shapes())

    def replace(self, updates: dict) -> "ModelWeights":
        t = dict(self.tensors)
        for k, v in updates.items():
            t[k] = np.asarray(v, dtype=self.tensors[k].dtype)
        return ModelWeights(t, self.arch_fingerprint, self.specs, self.input_shape)

    def astype(self, dtype) -> "ModelWeights":
        return ModelWeights({k: v.astype(dtype) for k, v in self.tensors.items()},
                            self.arch_fingerprint, self.specs, self.input_shape)


def _check_input(weights: ModelWeights, x):
    x = np.asarray(x)
    if x.ndim != 4 or tuple(x.shape[1:]) != tuple(weights.input_shape):
        raise ValueError(f"input shape {x.shape} does not match (N,) + {tuple(weights.input_shape)}")
    dtype = next(iter(weights.tensors.values())).dtype
    return np.ascontiguousarray(x, dtype=dtype)


def forward(weights: ModelWeights, x) -> np.ndarray:
    """Inference pass on an ``(N, C, H, W)`` batch using running statistics."""
    y, _, _ = weights.network.forward(weights.tensors, _check_input(weights, x), train=False)
    return y


def forward_train(weights: ModelWeights, x, train=True):
    """Returns ``(output, cache, running-stat updates)`` for :func:`backward`."""
    return weights.network.forward(weights.tensors, _check_input(weights, x), train=train)


def backward(weights: ModelWeights, cache, dout) -> dict:
    """Gradients of every trainable tensor given d(loss)/d(output)."""
    _, grads = weights.network.backward(weights.tensors, cache, dout)
    return grads
