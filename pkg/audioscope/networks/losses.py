"""
Training Objectives - thresholded SNR, mixture invariant assignment and on-screen classification losses
"""
import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Sequence, Tuple, Union

import torch

from audioscope.exceptions import ContractException, DimensionException, NoActiveSourceException
from audioscope.models.audio import ExampleKind, SourceEstimates, WaveBuffer
from audioscope.models.records import MixAssignment

logger = logging.getLogger(__name__)

MAX_EXHAUSTIVE_SOURCES = 8
DEGENERATE_REFERENCE_EPS = 1e-8
DEFAULT_CLAMP = 1e-7

Signal = Union[WaveBuffer, torch.Tensor]


def _samples(x: Signal) -> torch.Tensor:
    return x.samples if isinstance(x, WaveBuffer) else x


def thresholded_snr_loss(ref: Signal, est: Signal, tau: float = 1e-3) -> torch.Tensor:
    """
    Negative SNR with a soft threshold, batched over leading dimensions:
    10 log10(|r - e|^2 + tau |r|^2) - 10 log10(|r|^2).

    A silent reference falls back to 10 log10(|e|^2 + 1e-8).
    """
    ref, est = _samples(ref), _samples(est)
    if ref.shape[-1] != est.shape[-1]:
        raise DimensionException(f"Reference has {ref.shape[-1]} samples, estimate {est.shape[-1]}")
    ref_power = (ref ** 2).sum(dim=-1)
    error_power = ((ref - est) ** 2).sum(dim=-1)
    silent = ref_power <= 0
    safe_ref = torch.where(silent, torch.ones_like(ref_power), ref_power)
    regular = 10.0 * torch.log10(error_power + tau * safe_ref) - 10.0 * torch.log10(safe_ref)
    degenerate = 10.0 * torch.log10((est ** 2).sum(dim=-1) + DEGENERATE_REFERENCE_EPS)
    return torch.where(silent, degenerate, regular)


# ==================== Mixture Invariant Training ====================

@lru_cache(maxsize=None)
def _assignment_table(num_sources: int) -> torch.Tensor:
    # Index k assigns source m to row (k >> m) & 1
    table = torch.zeros(2 ** num_sources, 2, num_sources, dtype=torch.float64)
    for k in range(2 ** num_sources):
        for m in range(num_sources):
            table[k, (k >> m) & 1, m] = 1.0
    return table


def mixing_matrices(num_sources: int, dtype: torch.dtype = torch.float64) -> torch.Tensor:
    """All 2^M binary 2 x M mixing matrices in enumeration order, shape (2^M, 2, M)"""
    if num_sources > MAX_EXHAUSTIVE_SOURCES:
        raise ContractException(
            f"Exhaustive assignment supports at most {MAX_EXHAUSTIVE_SOURCES} sources, got {num_sources}; "
            f"see mixit_greedy",
            details={"num_sources": num_sources},
        )
    if num_sources < 1:
        raise ContractException("Assignment needs at least one source")
    return _assignment_table(num_sources).to(dtype)


def assignment_losses(r1: torch.Tensor, r2: torch.Tensor, sources: torch.Tensor, tau: float) -> torch.Tensor:
    """
    Loss of every assignment.

    Args:
        r1, r2: (..., T') references
        sources: (..., M, T') estimates

    Returns:
        (..., 2^M) summed losses in enumeration order
    """
    table = mixing_matrices(sources.shape[-2], sources.dtype).to(sources.device)
    remixes = torch.einsum("krm,...mt->...krt", table, sources)
    first = thresholded_snr_loss(r1.unsqueeze(-2), remixes[..., 0, :], tau)
    second = thresholded_snr_loss(r2.unsqueeze(-2), remixes[..., 1, :], tau)
    return first + second


def mixit_loss(r1: Signal, r2: Signal, estimates: Union[SourceEstimates, torch.Tensor], tau: float = 1e-3) -> MixAssignment:
    """Best 2 x M assignment of estimated sources to the two references, lowest index on ties"""
    sources = estimates.sources if isinstance(estimates, SourceEstimates) else estimates
    losses = assignment_losses(_samples(r1).to(sources.dtype), _samples(r2).to(sources.dtype), sources, tau)
    index = int(torch.argmin(losses.detach()))
    matrix = _assignment_table(sources.shape[0])[index].to(torch.int64).tolist()
    return MixAssignment(matrix=matrix, loss=float(losses[index]), pseudo_labels=list(matrix[0]), index=index)


@dataclass
class BatchAssignment:
    """Batched MixIT result; loss keeps the autograd graph"""
    loss: torch.Tensor
    labels: torch.Tensor
    index: torch.Tensor


def mixit_batch(r1: torch.Tensor, r2: torch.Tensor, sources: torch.Tensor, tau: float) -> BatchAssignment:
    """MixIT over a batch: r1, r2 are (B, T'), sources (B, M, T')"""
    losses = assignment_losses(r1, r2, sources, tau)
    index = torch.argmin(losses.detach(), dim=-1)
    table = mixing_matrices(sources.shape[-2], sources.dtype).to(sources.device)
    labels = table[index, 0, :]
    return BatchAssignment(loss=losses.gather(-1, index.unsqueeze(-1)).squeeze(-1), labels=labels, index=index)


def mixit_greedy(r1: Signal, r2: Signal, estimates: SourceEstimates, tau: float = 1e-3) -> MixAssignment:
    """
    Placeholder for sources counts beyond exhaustive search.

    A greedy or Hungarian-style assignment would be needed for M > 8; it is not
    provided, and exhaustive search is the only supported strategy.
    """
    raise ContractException(
        f"Greedy assignment is not implemented; exhaustive search supports M <= {MAX_EXHAUSTIVE_SOURCES}",
        details={"num_sources": estimates.num_sources},
    )


# ==================== Classification ====================

def _cross_entropy(labels: torch.Tensor, probs: torch.Tensor, clamp: float) -> torch.Tensor:
    p = probs.clamp(clamp, 1.0 - clamp)
    return -(labels * torch.log(p) + (1.0 - labels) * torch.log(1.0 - p))


def exact_ce_loss(y: torch.Tensor, probs: torch.Tensor, clamp: float = DEFAULT_CLAMP) -> torch.Tensor:
    """Sum over sources of binary cross-entropy in nats; batched over leading dims"""
    y = torch.as_tensor(y, dtype=probs.dtype, device=probs.device)
    return _cross_entropy(y, probs, clamp).sum(dim=-1)


@lru_cache(maxsize=None)
def _nonzero_settings(num_sources: int) -> torch.Tensor:
    return _assignment_table(num_sources)[1:, 1, :].clone()


def active_combinations_batch(
    y: torch.Tensor, probs: torch.Tensor, clamp: float = DEFAULT_CLAMP
) -> Tuple[torch.Tensor, torch.Tensor]:
    """
    Minimum cross-entropy over label settings l <= y with at least one active source.

    Args:
        y: (B, M) pseudo-labels
        probs: (B, M) predicted probabilities

    Returns:
        (loss, valid): per-example loss (0 where invalid) and the mask of examples
        with at least one active pseudo-label
    """
    y = torch.as_tensor(y, dtype=probs.dtype, device=probs.device)
    settings = _nonzero_settings(probs.shape[-1]).to(probs.dtype).to(probs.device)
    allowed = (settings.unsqueeze(0) <= y.unsqueeze(-2)).all(dim=-1)

    p = probs.clamp(clamp, 1.0 - clamp)
    on_cost, off_cost = -torch.log(p), -torch.log(1.0 - p)
    cost = settings @ on_cost.unsqueeze(-1) + (1.0 - settings) @ off_cost.unsqueeze(-1)
    cost = torch.where(allowed, cost.squeeze(-1), torch.full_like(cost.squeeze(-1), float("inf")))

    valid = y.sum(dim=-1) > 0
    best = cost.min(dim=-1).values
    return torch.where(valid, best, torch.zeros_like(best)), valid


def active_combinations_loss(y: torch.Tensor, probs: torch.Tensor, clamp: float = DEFAULT_CLAMP) -> torch.Tensor:
    """Single-example active-combinations loss; raises when no source is active"""
    y = torch.as_tensor(y, dtype=probs.dtype, device=probs.device)
    if float(y.sum()) < 1:
        raise NoActiveSourceException(details={"labels": y.tolist()})
    loss, _ = active_combinations_batch(y.unsqueeze(0), probs.unsqueeze(0), clamp)
    return loss[0]


def classification_term(
    kind: ExampleKind, pseudo_labels: torch.Tensor, probs: torch.Tensor, clamp: float = DEFAULT_CLAMP
) -> torch.Tensor:
    """Active combinations for noisy-labeled examples, exact cross-entropy for labeled ones"""
    if kind is ExampleKind.NON:
        return active_combinations_loss(pseudo_labels, probs, clamp)
    if kind.offscreen:
        return exact_ce_loss(torch.zeros_like(probs), probs, clamp)
    return exact_ce_loss(pseudo_labels, probs, clamp)


def classification_batch(
    kinds: Sequence[ExampleKind], labels: torch.Tensor, probs: torch.Tensor, clamp: float = DEFAULT_CLAMP
) -> Tuple[torch.Tensor, torch.Tensor]:
    """
    Per-example classification term for a mixed batch.

    Returns:
        (term, valid): the term is 0 where `valid` is False, i.e. for noisy-labeled
        examples whose pseudo-labels hold no active source
    """
    labels = labels.to(probs.dtype)
    noisy = torch.tensor([k is ExampleKind.NON for k in kinds], device=probs.device)
    offscreen = torch.tensor([k.offscreen for k in kinds], device=probs.device)

    active, active_valid = active_combinations_batch(labels, probs, clamp)
    targets = torch.where(offscreen.unsqueeze(-1), torch.zeros_like(labels), labels)
    exact = exact_ce_loss(targets, probs, clamp)
    term = torch.where(noisy, active, exact)
    valid = torch.where(noisy, active_valid, torch.ones_like(active_valid))
    return term, valid


def total_loss(
    kind: ExampleKind, mixit: torch.Tensor, classification: Optional[torch.Tensor], weight: float
) -> torch.Tensor:
    """
    L = L_MixIT + lambda L_cls. A missing classification term (noisy-labeled example
    without active pseudo-labels) leaves the MixIT term alone.
    """
    if classification is None or weight == 0:
        return mixit
    return mixit + weight * classification
