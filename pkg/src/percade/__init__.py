"""Trait-aware cascade prediction: coupled graph networks with edge gates."""

__version__ = "0.1.0"

from .autodiff import Tape, Tensor, finite_diff_check
from .graphs import Graph, structural_features
from .models import ModelConfig, ParameterStore, forward_cascade, init_params
from .training import TrainConfig, evaluate, train

__all__ = [
    "Tape", "Tensor", "finite_diff_check",
    "Graph", "structural_features",
    "ModelConfig", "ParameterStore", "forward_cascade", "init_params",
    "TrainConfig", "evaluate", "train",
    "__version__",
]
