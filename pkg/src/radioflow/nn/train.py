"""Mini-batch training loop with best-validation checkpointing."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from radioflow.nn.losses import LOSSES
from radioflow.nn.model import ModelWeights, backward, forward, forward_train
from radioflow.nn.optim import AdamConfig, AdamState, adam_step

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 128
    learning_rate: float = 1e-4
    max_epochs: int = 200
    loss: str = "rmse"
    seed: int = 0
    adam: AdamConfig = field(default_factory=AdamConfig)

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if self.max_epochs < 0:
            raise ValueError("max_epochs must be >= 0")
        if self.loss not in LOSSES:
            raise ValueError(f"unknown loss {self.loss!r}")


@dataclass(frozen=True, eq=False)
class TrainResult:
    weights: ModelWeights
    best_epoch: int           # 0 = the initialization was never beaten
    best_val_loss: float
    history: tuple            # (epoch, train_loss, val_loss) per epoch


def predict(weights: ModelWeights, x, batch_size: int = 256) -> np.ndarray:
    x = np.asarray(x)
    outs = [forward(weights, x[i:i + batch_size]) for i in range(0, len(x), batch_size)]
    return np.concatenate(outs) if outs else np.zeros((0,) + weights.network.output_shape)


def evaluate(weights: ModelWeights, x, y, loss: str) -> float:
    value, _ = LOSSES[loss](predict(weights, x), y)
    return value


def train(weights: ModelWeights, x_train, y_train, config: TrainConfig, x_val=None, y_val=None,
          on_epoch=None) -> TrainResult:
    """Adam training from ``weights``; returns the best-validation checkpoint.

    Without a validation set the training loss selects the checkpoint.
    Shuffling uses ``config.seed`` only, so runs are repeatable.
    """
    x_train = np.asarray(x_train)
    y_train = np.asarray(y_train)
    if len(x_train) == 0:
        raise ValueError("empty training set")
    if len(x_train) != len(y_train):
        raise ValueError("inputs and targets differ in length")
    if x_val is None:
        x_val, y_val = x_train, y_train
    loss_fn = LOSSES[config.loss]
    rng = np.random.default_rng(config.seed)

    best = weights
    best_val = evaluate(weights, x_val, y_val, config.loss)
    best_epoch = 0
    history = []
    params = dict(weights.tensors)
    state = AdamState()
    trainable = weights.trainable
    n = len(x_train)
    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(n)
        total, seen = 0.0, 0
        for i in range(0, n, config.batch_size):
            idx = order[i:i + config.batch_size]
            if len(idx) < 2 and n >= 2:
                continue  # batch statistics need two samples
            current = ModelWeights(params, weights.arch_fingerprint, weights.specs, weights.input_shape)
            out, cache, updates = forward_train(current, x_train[idx])
            value, dout = loss_fn(out, y_train[idx])
            grads = backward(current, cache, dout.astype(out.dtype))
            params, state = adam_step(params, {k: grads[k] for k in trainable}, state,
                                      config.learning_rate, config.adam)
            params.update(updates)
            total += value * len(idx)
            seen += len(idx)
        current = ModelWeights(params, weights.arch_fingerprint, weights.specs, weights.input_shape)
        val = evaluate(current, x_val, y_val, config.loss)
        history.append((epoch, total / max(seen, 1), val))
        log.debug("epoch %d train %.5f val %.5f", epoch, history[-1][1], val)
        if on_epoch is not None:
            on_epoch(epoch, history[-1][1], val)
        if val < best_val:
            best, best_val, best_epoch = current, val, epoch
    return TrainResult(best, best_epoch, float(best_val), tuple(history))
