"""Minimal reverse-mode automatic differentiation over numpy arrays."""

from .ops import ShapeError, SingularMatrixError
from .optim import AdamState, NonFiniteGradientError, ParamSet, adam_step
from .tensor import Tape, TapeError, Tensor, active_tape, as_tensor

__all__ = [
    "AdamState",
    "NonFiniteGradientError",
    "ParamSet",
    "ShapeError",
    "SingularMatrixError",
    "Tape",
    "TapeError",
    "Tensor",
    "active_tape",
    "adam_step",
    "as_tensor",
]
