"""Complement objective training for small MLP classifiers."""

from .numerics import Rng, log_sum_exp, matmul, softmax
from .objectives import (
    LossResult,
    complement_entropy,
    complement_loss,
    cross_entropy,
    finite_difference_grad,
    normalized_complement_entropy,
)

__all__ = [
    "LossResult",
    "Rng",
    "complement_entropy",
    "complement_loss",
    "cross_entropy",
    "finite_difference_grad",
    "log_sum_exp",
    "matmul",
    "normalized_complement_entropy",
    "softmax",
]
__version__ = "0.1.0"
