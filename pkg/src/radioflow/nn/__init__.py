"""Small numpy network engine: layers, presets, Adam, training and weight files."""
from radioflow.nn.losses import cross_entropy, rmse, softmax
from radioflow.nn.model import (LayerSpec, ModelWeights, Network, architecture, backward, forward,
                                forward_train)
from radioflow.nn.optim import AdamConfig, AdamState, adam_step
from radioflow.nn.train import TrainConfig, TrainResult, evaluate, predict, train
from radioflow.nn.weights_io import load_weights, save_weights

__all__ = ["LayerSpec", "ModelWeights", "Network", "architecture", "forward", "forward_train",
           "backward", "rmse", "cross_entropy", "softmax", "AdamConfig", "AdamState", "adam_step",
           "TrainConfig", "TrainResult", "train", "predict", "evaluate", "save_weights",
           "load_weights"]
