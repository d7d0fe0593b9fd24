"""Deterministic float64 neural-network substrate with hand-written backprop."""

from .gradcheck import grad_check, numeric_grad, rel_error
from .layers import (
    DimensionError,
    affine_backward,
    affine_forward,
    attention_backward,
    attention_forward,
    gelu_backward,
    gelu_forward,
    gru_cell_backward,
    gru_cell_forward,
    layer_norm_backward,
    layer_norm_forward,
    lstm_cell_backward,
    lstm_cell_forward,
    sigmoid,
    softmax,
    softmax_backward,
)
from .params import (
    CheckpointError,
    NonFiniteGradientError,
    ParamStore,
    adam_step,
    load_checkpoint,
    save_checkpoint,
)
from .recurrent import RecurrentStack
from .rng import make_rng

__all__ = [
    "CheckpointError", "DimensionError", "NonFiniteGradientError", "ParamStore", "RecurrentStack",
    "adam_step", "affine_backward", "affine_forward", "attention_backward", "attention_forward",
    "gelu_backward", "gelu_forward", "grad_check", "gru_cell_backward", "gru_cell_forward",
    "layer_norm_backward", "layer_norm_forward", "load_checkpoint", "lstm_cell_backward",
    "lstm_cell_forward", "make_rng", "numeric_grad", "rel_error", "save_checkpoint", "sigmoid",
    "softmax", "softmax_backward",
]
