from .tensor import (
    DEFAULT_DTYPE,
    DomainError,
    GraphError,
    ShapeError,
    Tape,
    Tensor,
    absolute,
    active_tape,
    add,
    affine,
    affine_jvp,
    affine_softplus_jvp,
    clamp,
    concat,
    cos,
    cumsum,
    div,
    exp,
    gather_rows,
    log,
    matmul,
    max0,
    mul,
    narrow,
    neg,
    no_grad,
    permute,
    reduce_mean,
    reduce_sum,
    reshape,
    sigmoid,
    sin,
    softplus,
    softplus_and_sigmoid,
    sqrt,
    square,
    sub,
    tensor,
    tile_rows,
    transpose2d,
    zeros,
)
from .conv import conv2d, upsample_nearest2

__all__ = [
    "DEFAULT_DTYPE",
    "DomainError",
    "GraphError",
    "ShapeError",
    "Tape",
    "Tensor",
    "absolute",
    "active_tape",
    "add",
    "affine",
    "affine_jvp",
    "affine_softplus_jvp",
    "clamp",
    "concat",
    "conv2d",
    "cos",
    "cumsum",
    "div",
    "exp",
    "gather_rows",
    "log",
    "matmul",
    "max0",
    "mul",
    "narrow",
    "neg",
    "no_grad",
    "permute",
    "reduce_mean",
    "reduce_sum",
    "reshape",
    "sigmoid",
    "sin",
    "softplus",
    "softplus_and_sigmoid",
    "sqrt",
    "square",
    "sub",
    "tensor",
    "tile_rows",
    "transpose2d",
    "upsample_nearest2",
    "zeros",
]
