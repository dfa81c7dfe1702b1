"""
Named-Axis Tensors - differentiable primitives the attention stack is built from

Every primitive takes and returns a FeatureTensor, a torch tensor paired with an
ordered tuple of axis labels. Reverse-mode gradients come from torch autograd.
"""
import logging
import math
import string
from dataclasses import dataclass
from typing import Dict, Iterable, Mapping, Optional, Sequence, Tuple

import torch
from torch import nn

from audioscope.exceptions import ContractException, DimensionException, NumericException

logger = logging.getLogger(__name__)


class Axis:
    """Axis labels used across the package"""
    SRC = "M"
    SPACE = "G"
    JOINT = "M+G"
    TIME = "T"
    DEPTH = "D"
    SAMPLE = "T'"
    BATCH = "B"
    HEAD = "H"


QUERY_PREFIX = "q:"
LAYER_NORM_EPS = 1e-6


def query_axis(axis: str) -> str:
    """Label a query-side copy of an attended axis"""
    return f"{QUERY_PREFIX}{axis}"


@dataclass(frozen=True)
class FeatureTensor:
    """Dense real array with named axes"""
    data: torch.Tensor
    axes: Tuple[str, ...]

    def __post_init__(self):
        axes = tuple(self.axes)
        object.__setattr__(self, "axes", axes)
        if len(set(axes)) != len(axes):
            raise ContractException(f"Duplicate axis labels: {axes}")
        if self.data.dim() != len(axes):
            raise DimensionException(
                f"Tensor has {self.data.dim()} dims but {len(axes)} axis labels",
                details={"axes": list(axes), "shape": list(self.data.shape)},
            )
        if any(size < 1 for size in self.data.shape):
            raise DimensionException(f"Empty axis in shape {tuple(self.data.shape)}", details={"axes": list(axes)})

    @property
    def shape(self) -> Dict[str, int]:
        return dict(zip(self.axes, self.data.shape))

    def size(self, axis: str) -> int:
        return self.data.shape[self.index(axis)]

    def index(self, axis: str) -> int:
        try:
            return self.axes.index(axis)
        except ValueError:
            raise ContractException(f"Axis '{axis}' not in {self.axes}")

    def has(self, axis: str) -> bool:
        return axis in self.axes

    def with_data(self, data: torch.Tensor) -> "FeatureTensor":
        return FeatureTensor(data, self.axes)

    def rename(self, mapping: Mapping[str, str]) -> "FeatureTensor":
        return FeatureTensor(self.data, tuple(mapping.get(a, a) for a in self.axes))

    def permute(self, axes: Sequence[str]) -> "FeatureTensor":
        axes = tuple(axes)
        if sorted(axes) != sorted(self.axes):
            raise ContractException(f"Cannot permute {self.axes} to {axes}")
        if axes == self.axes:
            return self
        return FeatureTensor(self.data.permute(*[self.index(a) for a in axes]), axes)

    def narrow(self, axis: str, start: int, length: int) -> "FeatureTensor":
        return FeatureTensor(self.data.narrow(self.index(axis), start, length), self.axes)

    def sum(self, axes: Iterable[str]) -> "FeatureTensor":
        axes = list(axes)
        dims = [self.index(a) for a in axes]
        return FeatureTensor(self.data.sum(dim=dims), tuple(a for a in self.axes if a not in axes))

    @staticmethod
    def concat(tensors: Sequence["FeatureTensor"], axis: str) -> "FeatureTensor":
        first = tensors[0]
        for other in tensors[1:]:
            if other.axes != first.axes:
                raise DimensionException(f"Cannot concatenate {other.axes} onto {first.axes}")
        return FeatureTensor(torch.cat([t.data for t in tensors], dim=first.index(axis)), first.axes)


def ensure_finite(x: FeatureTensor, op: str) -> FeatureTensor:
    if not bool(torch.isfinite(x.data).all()):
        raise NumericException(f"Non-finite values after {op}", details={"axes": list(x.axes)})
    return x


def _subscripts(*axis_lists: Sequence[str]) -> Dict[str, str]:
    letters: Dict[str, str] = {}
    pool = iter(string.ascii_letters)
    for axes in axis_lists:
        for axis in axes:
            if axis not in letters:
                letters[axis] = next(pool)
    return letters


def tensor_inner_product(z1: FeatureTensor, z2: FeatureTensor, reduce_axes: Iterable[str]) -> FeatureTensor:
    """
    Generalized inner product of two named tensors.

    Axes shared by z1 and z2 that are not reduced are aligned elementwise; every
    other non-reduced axis contributes an outer product. Output axes are z1's
    non-reduced axes followed by z2's own non-reduced axes.

    Args:
        z1: Left operand (keys side in attention scores)
        z2: Right operand (queries side in attention scores)
        reduce_axes: Axes summed over; each must be present in z2

    Returns:
        FeatureTensor with the surviving axes
    """
    reduce = set(reduce_axes)
    missing = [a for a in reduce if a not in z2.axes]
    if missing:
        raise ContractException(f"Reduce axes {missing} absent from {z2.axes}")

    for axis in z1.axes:
        if axis in z2.axes and z1.size(axis) != z2.size(axis):
            raise DimensionException(
                f"Axis '{axis}' has length {z1.size(axis)} vs {z2.size(axis)}",
                details={"left": list(z1.axes), "right": list(z2.axes)},
            )

    out_axes = [a for a in z1.axes if a not in reduce]
    out_axes += [a for a in z2.axes if a not in reduce and a not in z1.axes]

    letters = _subscripts(z1.axes, z2.axes)
    equation = "{},{}->{}".format(
        "".join(letters[a] for a in z1.axes),
        "".join(letters[a] for a in z2.axes),
        "".join(letters[a] for a in out_axes),
    )
    out = FeatureTensor(torch.einsum(equation, z1.data, z2.data), tuple(out_axes))
    return ensure_finite(out, "tensor_inner_product")


def softmax_over_axes(scores: FeatureTensor, norm_axes: Iterable[str]) -> FeatureTensor:
    """Softmax normalized jointly over the product of norm_axes"""
    norm_axes = list(norm_axes)
    if not norm_axes:
        raise ContractException("softmax_over_axes needs at least one axis")
    dims = [scores.index(a) for a in norm_axes]
    shifted = scores.data - scores.data.amax(dim=dims, keepdim=True).detach()
    weights = torch.exp(shifted)
    weights = weights / weights.sum(dim=dims, keepdim=True)
    return ensure_finite(scores.with_data(weights), "softmax_over_axes")


class DenseLayer(nn.Module):
    """
    Affine map on the DEPTH axis.

    With `heads` set, holds one independent map per head and applies it along the
    HEAD axis of the input; an input without a HEAD axis is fed to every head.
    """

    def __init__(self, in_features: int, out_features: int, heads: Optional[int] = None):
        super().__init__()
        self.in_features = in_features
        self.out_features = out_features
        self.heads = heads
        prefix = (heads,) if heads else ()
        self.weight = nn.Parameter(torch.empty(*prefix, in_features, out_features))
        self.bias = nn.Parameter(torch.zeros(*prefix, out_features))
        self.reset_parameters()

    def reset_parameters(self) -> None:
        std = 1.0 / math.sqrt(self.in_features)
        nn.init.trunc_normal_(self.weight, mean=0.0, std=std, a=-2 * std, b=2 * std)
        nn.init.zeros_(self.bias)

    def forward(self, x: FeatureTensor) -> FeatureTensor:
        return dense(x, self)


def dense(x: FeatureTensor, layer: DenseLayer) -> FeatureTensor:
    """Apply a DenseLayer to the last axis of x"""
    depth_axis = x.axes[-1]
    if x.size(depth_axis) != layer.in_features:
        raise DimensionException(
            f"Dense expects last axis {layer.in_features}, got {x.size(depth_axis)}",
            details={"axes": list(x.axes)},
        )

    if layer.heads is None:
        out = torch.matmul(x.data, layer.weight) + layer.bias
        return ensure_finite(x.with_data(out), "dense")

    if not x.has(Axis.HEAD):
        # Every head reads the full input and opens a HEAD axis before DEPTH
        out = torch.einsum("...i,hio->...ho", x.data, layer.weight) + layer.bias
        return ensure_finite(FeatureTensor(out, x.axes[:-1] + (Axis.HEAD, depth_axis)), "dense")
    if x.size(Axis.HEAD) != layer.heads:
        raise DimensionException(f"Per-head dense needs a HEAD axis of length {layer.heads}", details={"axes": list(x.axes)})
    letters = _subscripts(x.axes, ["__out__"])
    head, d_in, d_out = letters[Axis.HEAD], letters[depth_axis], letters["__out__"]
    lhs = "".join(letters[a] for a in x.axes)
    out_sub = lhs[:-1] + d_out
    out = torch.einsum(f"{lhs},{head}{d_in}{d_out}->{out_sub}", x.data, layer.weight)
    bias_shape = [1] * out.dim()
    bias_shape[x.index(Axis.HEAD)] = layer.heads
    bias_shape[-1] = layer.out_features
    out = out + layer.bias.reshape(bias_shape)
    return ensure_finite(x.with_data(out), "dense")


class LayerNorm(nn.Module):
    """Layer normalization over DEPTH with learned scale and shift"""

    def __init__(self, depth: int, eps: float = LAYER_NORM_EPS):
        super().__init__()
        self.eps = eps
        self.scale = nn.Parameter(torch.ones(depth))
        self.shift = nn.Parameter(torch.zeros(depth))

    def forward(self, x: FeatureTensor) -> FeatureTensor:
        return layer_norm(x, self.scale, self.shift, self.eps)


def layer_norm(
    x: FeatureTensor,
    scale: Optional[torch.Tensor] = None,
    shift: Optional[torch.Tensor] = None,
    eps: float = LAYER_NORM_EPS,
) -> FeatureTensor:
    dim = x.index(Axis.DEPTH)
    depth = x.data.shape[dim]
    mean = x.data.mean(dim=dim, keepdim=True)
    var = x.data.var(dim=dim, unbiased=False, keepdim=True)
    out = (x.data - mean) / torch.sqrt(var + eps)

    broadcast = [1] * x.data.dim()
    broadcast[dim] = depth
    if scale is not None:
        if scale.numel() != depth:
            raise DimensionException(f"LayerNorm scale has {scale.numel()} entries for depth {depth}")
        out = out * scale.reshape(broadcast)
    if shift is not None:
        out = out + shift.reshape(broadcast)
    return ensure_finite(x.with_data(out), "layer_norm")


def dropout(x: FeatureTensor, rate: float, training: bool) -> FeatureTensor:
    """Inverted dropout; identity outside training or at rate 0"""
    if not 0.0 <= rate < 1.0:
        raise ContractException(f"Dropout rate must lie in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    return x.with_data(nn.functional.dropout(x.data, p=rate, training=True))
