"""Importance-aware ring-topology quantum convolutional classifier, simulated on a dense state vector."""
from .circuit import build_model_circuit, execute, parameter_count
from .model import ModelParams, forward, forward_batch
from .train import TrainConfig

__all__ = [
    "build_model_circuit", "execute", "parameter_count",
    "ModelParams", "forward", "forward_batch",
    "TrainConfig",
]
__version__ = "0.1.0"
