"""
Minimal reverse-mode gradient engine.

Tensors, MLP layers, Adam and a finite-difference checker: enough to train
small encoder/decoder networks without a deep-learning framework.
"""

from .tensor import (
    Tensor,
    no_grad,
    as_tensor,
    add,
    sub,
    mul,
    div,
    neg,
    power,
    square,
    relu,
    exp,
    log,
    sqrt,
    floor,
    tsum,
    mean,
    softmax,
    matmul,
    transpose,
    take,
)
from .layers import LinearLayer, Mlp, mlp_forward, backward, zero_grads, glorot_uniform
from .optim import Adam, AdamState, adam_step
from .gradcheck import GradCheckReport, grad_check, relative_error
from .checkpoint import save_checkpoint, load_checkpoint

__all__ = [
    "Tensor",
    "no_grad",
    "as_tensor",
    "add",
    "sub",
    "mul",
    "div",
    "neg",
    "power",
    "square",
    "relu",
    "exp",
    "log",
    "sqrt",
    "floor",
    "tsum",
    "mean",
    "softmax",
    "matmul",
    "transpose",
    "take",
    "LinearLayer",
    "Mlp",
    "mlp_forward",
    "backward",
    "zero_grads",
    "glorot_uniform",
    "Adam",
    "AdamState",
    "adam_step",
    "GradCheckReport",
    "grad_check",
    "relative_error",
    "save_checkpoint",
    "load_checkpoint",
]
