"""Minimal dense-tensor arithmetic with reverse-mode autodiff.

Exactly the operations the translation model needs: matmul, elementwise
arithmetic, sigmoid/tanh, softmax, concat/stack, sum, embedding lookup and
fused cross-entropy. Float64 throughout.
"""

from .backend import backend_name
from .gradcheck import GradCheckReport, grad_check
from .tape import (
    Tape,
    Tensor,
    add,
    backward,
    check_finite,
    concat,
    cross_entropy_logits,
    forward_op,
    lookup,
    matmul,
    mul,
    neg,
    scale,
    sigmoid,
    softmax,
    stack,
    sub,
    sum_all,
    tanh,
    zero_grads,
    zeros,
)

__all__ = [
    "Tape",
    "Tensor",
    "GradCheckReport",
    "add",
    "backend_name",
    "backward",
    "check_finite",
    "concat",
    "cross_entropy_logits",
    "forward_op",
    "grad_check",
    "lookup",
    "matmul",
    "mul",
    "neg",
    "scale",
    "sigmoid",
    "softmax",
    "stack",
    "sub",
    "sum_all",
    "tanh",
    "zero_grads",
    "zeros",
]
