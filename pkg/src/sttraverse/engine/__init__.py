"""Minimal reverse-mode tensor engine backing the forecasting layers."""

from .tensor import (
    DEFAULT_DTYPE,
    Tape,
    Tensor,
    active_tape,
    as_tensor,
    leaky_relu,
    matmul,
)
from .segments import (
    ScatterPlan,
    SegmentIndex,
    concat_rows,
    gather_rows,
    segment_softmax,
    segment_sum,
    slice_rows,
    uniform_segment_weights,
)
from .functional import BatchNormState, batchnorm_node, conv_time, dropout
from .optim import Adam, adam_step

__all__ = [
    "DEFAULT_DTYPE",
    "Tape",
    "Tensor",
    "active_tape",
    "as_tensor",
    "leaky_relu",
    "matmul",
    "ScatterPlan",
    "SegmentIndex",
    "concat_rows",
    "gather_rows",
    "segment_softmax",
    "segment_sum",
    "slice_rows",
    "uniform_segment_weights",
    "BatchNormState",
    "batchnorm_node",
    "conv_time",
    "dropout",
    "Adam",
    "adam_step",
]
