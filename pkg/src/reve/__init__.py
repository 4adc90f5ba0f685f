"""REVE: variational regularization of the prediction-relevant part of a representation."""
from .core import BIMODAL, SINGLE_GAUSSIAN, GmmParams, ReveConfig, reve_loss, total_objective
from .linalg import CompactSvd, ProjectionMatrix, compact_svd, kernel_complement_projection
from .tensor import Tape, Tensor

__version__ = "0.1.0"

__all__ = [
    "BIMODAL", "SINGLE_GAUSSIAN", "GmmParams", "ReveConfig", "reve_loss", "total_objective",
    "CompactSvd", "ProjectionMatrix", "compact_svd", "kernel_complement_projection",
    "Tape", "Tensor",
]
