"""
On-Screen Classifier - tied per-source logit head and probability-weighted mixdowns
"""
import logging
from typing import Sequence, Tuple, Union

import torch
from torch import nn

from audioscope.exceptions import ConfigException, DimensionException
from audioscope.models.audio import SourceEstimates, WaveBuffer
from audioscope.models.records import OnScreenPrediction
from audioscope.numerics.tensor import Axis, DenseLayer, FeatureTensor

logger = logging.getLogger(__name__)

Probabilities = Union[torch.Tensor, Sequence[float]]


class OnScreenClassifier(nn.Module):
    """A single dense layer f_z shared by all sources, producing one logit each"""

    def __init__(self, depth: int, out_features: int = 1):
        super().__init__()
        if out_features != 1:
            raise ConfigException(f"Classifier head must emit one logit, got width {out_features}", key="out_features")
        self.head = DenseLayer(depth, out_features)

    def forward(self, z: FeatureTensor) -> Tuple[torch.Tensor, torch.Tensor]:
        return classify(z, self.head)


def classify(z: FeatureTensor, head: DenseLayer) -> Tuple[torch.Tensor, torch.Tensor]:
    """
    Per-source logits and probabilities.

    Args:
        z: Embeddings with axes (..., M, D)
        head: Dense layer with output width 1

    Returns:
        (logits, probs), each shaped like z without DEPTH
    """
    if head.out_features != 1:
        raise ConfigException(f"Classifier head must emit one logit, got width {head.out_features}")
    logits = head(z.permute([a for a in z.axes if a != Axis.DEPTH] + [Axis.DEPTH])).data[..., 0]
    return logits, torch.sigmoid(logits)


def _as_tensor(values: Probabilities, like: torch.Tensor) -> torch.Tensor:
    return torch.as_tensor(values, dtype=like.dtype, device=like.device)


def onscreen_mixdown(probs: Probabilities, estimates: SourceEstimates) -> WaveBuffer:
    """x_on = sum_m p_m s_m"""
    weights = _as_tensor(probs, estimates.sources)
    if weights.shape != (estimates.num_sources,):
        raise DimensionException(f"{weights.numel()} probabilities for {estimates.num_sources} sources")
    return WaveBuffer(samples=weights @ estimates.sources, sample_rate=estimates.sample_rate)


def calibrated_mixdown(logits: Probabilities, estimates: SourceEstimates, theta: float) -> WaveBuffer:
    """x_on(theta) = sum_m sigmoid(l_m + theta) s_m; theta = 0 reproduces onscreen_mixdown"""
    shifted = _as_tensor(logits, estimates.sources) + theta
    return onscreen_mixdown(torch.sigmoid(shifted), estimates)


def predict(logits: Probabilities, estimates: SourceEstimates, theta: float = 0.0) -> OnScreenPrediction:
    shifted = _as_tensor(logits, estimates.sources) + theta
    probs = torch.sigmoid(shifted)
    return OnScreenPrediction(
        logits=[float(v) for v in _as_tensor(logits, estimates.sources)],
        probs=[float(p) for p in probs],
        mixdown=onscreen_mixdown(probs, estimates),
        theta=theta,
    )
