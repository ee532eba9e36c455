"""Minimal float64 autodiff tensor library and the layers the networks need."""

from .core import (
    DTYPE,
    LOG_EPS,
    ShapeError,
    Tensor,
    as_tensor,
    concat,
    conv1d_causal,
    cross_entropy,
    global_avg_pool,
    is_grad_enabled,
    l1_loss,
    log,
    log_softmax,
    logistic,
    matmul,
    no_grad,
    relu,
    sigmoid,
    softmax,
    stack,
    tanh,
    tensor,
    unbind,
    zeros,
)
from .nn import GRU, LSTM, BatchNorm1d, CausalConv1d, Dropout, Linear, Module, Parameter
from .optim import SGD, Adam, make_optimizer

__all__ = [
    "DTYPE",
    "LOG_EPS",
    "ShapeError",
    "Tensor",
    "as_tensor",
    "concat",
    "conv1d_causal",
    "cross_entropy",
    "global_avg_pool",
    "is_grad_enabled",
    "l1_loss",
    "log",
    "log_softmax",
    "logistic",
    "matmul",
    "no_grad",
    "relu",
    "sigmoid",
    "softmax",
    "stack",
    "tanh",
    "tensor",
    "unbind",
    "zeros",
    "GRU",
    "LSTM",
    "BatchNorm1d",
    "CausalConv1d",
    "Dropout",
    "Linear",
    "Module",
    "Parameter",
    "SGD",
    "Adam",
    "make_optimizer",
]
