"""
Gradient Oracle - central finite differences against torch autograd
"""
import logging
from typing import Callable, Dict, Mapping, Sequence

import torch
from torch import nn

from audioscope.exceptions import ContractException, NumericException

logger = logging.getLogger(__name__)

FINITE_DIFFERENCE_STEP = 1e-5
RELATIVE_ERROR_FLOOR = 1e-8


def _evaluate(fn: Callable[[], torch.Tensor]) -> torch.Tensor:
    value = fn()
    if value.numel() != 1:
        raise ContractException(f"Gradient check needs a scalar function, got shape {tuple(value.shape)}")
    if not bool(torch.isfinite(value).all()):
        raise NumericException(f"Non-finite function value {value.item()}")
    return value.reshape(())


def grad_check_report(
    fn: Callable[[], torch.Tensor],
    tensors: Mapping[str, torch.Tensor],
    step: float = FINITE_DIFFERENCE_STEP,
    floor: float = RELATIVE_ERROR_FLOOR,
) -> Dict[str, float]:
    """
    Compare autograd against central differences for every tensor fn reads.

    The tensors are perturbed in place, so fn must read them directly (module
    parameters or leaf inputs) rather than copies.

    Args:
        fn: Zero-argument closure returning a scalar tensor
        tensors: Named leaf tensors, double precision, requiring grad
        step: Central-difference step
        floor: Denominator floor; gradients below it are compared in absolute terms

    Returns:
        Max relative error per named tensor
    """
    names = list(tensors)
    leaves = [tensors[n] for n in names]
    for name, leaf in zip(names, leaves):
        if leaf.dtype != torch.float64:
            raise ContractException(f"Gradient check runs in double precision; '{name}' is {leaf.dtype}")

    value = _evaluate(fn)
    analytic = torch.autograd.grad(value, leaves, allow_unused=True)

    report: Dict[str, float] = {}
    with torch.no_grad():
        for name, leaf, grad in zip(names, leaves, analytic):
            grad = torch.zeros_like(leaf) if grad is None else grad
            flat = leaf.data.view(-1)
            worst = 0.0
            for i in range(flat.numel()):
                original = flat[i].item()
                flat[i] = original + step
                upper = _evaluate(fn).item()
                flat[i] = original - step
                lower = _evaluate(fn).item()
                flat[i] = original
                numeric = (upper - lower) / (2.0 * step)
                exact = grad.reshape(-1)[i].item()
                scale = max(abs(exact), abs(numeric), floor)
                worst = max(worst, abs(exact - numeric) / scale)
            report[name] = worst

    logger.debug(f"Gradient check over {len(names)} tensors: max error {max(report.values(), default=0.0):.3e}")
    return report


def grad_check(
    fn: Callable[[], torch.Tensor],
    tensors: Sequence[torch.Tensor],
    step: float = FINITE_DIFFERENCE_STEP,
    floor: float = RELATIVE_ERROR_FLOOR,
) -> float:
    """Max relative error between analytic and numeric gradients over all entries"""
    report = grad_check_report(fn, {str(i): t for i, t in enumerate(tensors)}, step, floor)
    return max(report.values(), default=0.0)


def grad_check_module(
    module: nn.Module,
    loss: Callable[[], torch.Tensor],
    inputs: Sequence[torch.Tensor] = (),
    step: float = FINITE_DIFFERENCE_STEP,
    floor: float = RELATIVE_ERROR_FLOOR,
) -> Dict[str, float]:
    """Run the gradient oracle over every trainable parameter of a module plus given inputs"""
    tensors = {name: p for name, p in module.named_parameters() if p.requires_grad}
    for i, x in enumerate(inputs):
        tensors[f"input_{i}"] = x
    return grad_check_report(loss, tensors, step, floor)
