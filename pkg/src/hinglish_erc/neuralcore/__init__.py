"""Minimal reverse-mode autodiff and the layers the ERC models need."""

from .checkpoint import load_checkpoint, save_checkpoint
from .gradcheck import GradCheckReport, grad_check, relative_error
from .layers import (
    ENCODER_GROUP,
    MAIN_GROUP,
    BatchNorm1d,
    Embedding,
    GRUStack,
    Linear,
    MultiHeadAttention,
    Parameter,
    ParamStore,
    linear_forward,
)
from .tensor import (
    Tensor,
    add,
    as_tensor,
    batch_norm_train,
    concat,
    cross_entropy,
    dropout,
    exp,
    get_default_dtype,
    gru_layer,
    index,
    leaky_relu,
    log,
    log_softmax,
    matmul,
    mean,
    mul,
    neg,
    relu,
    reshape,
    set_default_dtype,
    sigmoid,
    softmax,
    stack,
    sum_,
    tanh,
    transpose,
)
