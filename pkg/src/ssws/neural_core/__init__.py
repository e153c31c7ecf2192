"""Tensor math with reverse-mode differentiation and the Adam optimizer."""

from ssws.neural_core import kernels, ops
from ssws.neural_core.checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from ssws.neural_core.optim import (
    AdamState,
    LearningRateSchedule,
    NonFiniteGradientError,
    adam_step,
)
from ssws.neural_core.params import Parameters, uniform_init
from ssws.neural_core.tensor import AutodiffError, Tensor, no_grad

__all__ = [
    "AdamState",
    "AutodiffError",
    "CheckpointError",
    "LearningRateSchedule",
    "NonFiniteGradientError",
    "Parameters",
    "Tensor",
    "adam_step",
    "kernels",
    "load_checkpoint",
    "no_grad",
    "ops",
    "save_checkpoint",
    "uniform_init",
]
