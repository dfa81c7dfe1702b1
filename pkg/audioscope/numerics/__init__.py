"""
Differentiable tensor substrate
"""

from .gradcheck import grad_check, grad_check_module, grad_check_report
from .tensor import (
    Axis,
    DenseLayer,
    FeatureTensor,
    LayerNorm,
    dense,
    dropout,
    ensure_finite,
    layer_norm,
    query_axis,
    softmax_over_axes,
    tensor_inner_product,
)

__all__ = [
    "Axis",
    "DenseLayer",
    "FeatureTensor",
    "LayerNorm",
    "dense",
    "dropout",
    "ensure_finite",
    "grad_check",
    "grad_check_module",
    "grad_check_report",
    "layer_norm",
    "query_axis",
    "softmax_over_axes",
    "tensor_inner_product",
]
