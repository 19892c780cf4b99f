from .convops import bilinear_upsample, conv2d
from .gradcheck import gradcheck, numerical_gradient
from .optim import Adam
from .tensor import (
    DimensionError,
    Tape,
    Tensor,
    add,
    backward,
    concat,
    div,
    exp,
    l2_normalize,
    layer_norm,
    log,
    logsumexp,
    matmul,
    minimum_const,
    mul,
    relu,
    reshape,
    sigmoid,
    softmax,
    softplus,
    stack,
    sub,
    take,
    tape_section,
    tmean,
    transpose,
    tsum,
)

__all__ = [
    "Adam",
    "DimensionError",
    "Tape",
    "Tensor",
    "add",
    "backward",
    "bilinear_upsample",
    "concat",
    "conv2d",
    "div",
    "exp",
    "gradcheck",
    "l2_normalize",
    "layer_norm",
    "log",
    "logsumexp",
    "matmul",
    "minimum_const",
    "mul",
    "numerical_gradient",
    "relu",
    "reshape",
    "sigmoid",
    "softmax",
    "softplus",
    "stack",
    "sub",
    "take",
    "tape_section",
    "tmean",
    "transpose",
    "tsum",
]
