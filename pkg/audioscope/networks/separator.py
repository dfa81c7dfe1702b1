"""
Separation Network - learnable filterbank masking separator with mixture consistency
"""
import logging

import torch
from torch import nn

from audioscope.exceptions import ContractException, DimensionException
from audioscope.models.audio import SourceEstimates, WaveBuffer
from audioscope.models.configs import SeparatorConfig

logger = logging.getLogger(__name__)


def mixture_consistency(sources: torch.Tensor, mixture: torch.Tensor) -> torch.Tensor:
    """
    Project estimates so they sum to the mixture: s'_m = s_m + (x - sum_k s_k) / M.

    Args:
        sources: (..., M, T') estimates
        mixture: (..., T') mixture waveform

    Returns:
        Projected estimates, same shape as sources
    """
    num_sources = sources.shape[-2]
    if num_sources == 0:
        raise ContractException("Mixture consistency needs at least one source")
    if sources.shape[-1] != mixture.shape[-1]:
        raise DimensionException(f"Sources have {sources.shape[-1]} samples, mixture {mixture.shape[-1]}")
    residual = mixture - sources.sum(dim=-2)
    return sources + residual.unsqueeze(-2) / num_sources


def project_estimates(estimates: SourceEstimates, mixture: WaveBuffer) -> SourceEstimates:
    return SourceEstimates(
        sources=mixture_consistency(estimates.sources, mixture.samples.to(estimates.sources.dtype)),
        sample_rate=estimates.sample_rate,
    )


class MaskNetwork(nn.Module):
    """Dilated temporal convolutions producing one sigmoid mask per source and basis"""

    def __init__(self, cfg: SeparatorConfig):
        super().__init__()
        layers = []
        channels = cfg.bases
        for dilation in cfg.dilations:
            layers += [
                nn.Conv1d(
                    channels,
                    cfg.hidden_channels,
                    kernel_size=cfg.kernel_size,
                    dilation=dilation,
                    padding=dilation * (cfg.kernel_size - 1) // 2,
                ),
                nn.PReLU(),
            ]
            channels = cfg.hidden_channels
        self.body = nn.Sequential(*layers)
        self.head = nn.Conv1d(channels, cfg.num_sources * cfg.bases, kernel_size=1)
        self.num_sources = cfg.num_sources
        self.bases = cfg.bases

    def forward(self, latents: torch.Tensor) -> torch.Tensor:
        frames = latents.shape[-1]
        masks = torch.sigmoid(self.head(self.body(latents)))
        return masks.reshape(latents.shape[0], self.num_sources, self.bases, frames)


class Separator(nn.Module):
    """
    Waveform-in, M-sources-out masking separator.

    A strided 1-D convolution encodes the mixture into N basis activations, the mask
    network predicts M non-negative masks over them, and a transposed convolution
    with the same window and hop synthesizes each masked latent back to a waveform.
    """

    def __init__(self, cfg: SeparatorConfig):
        super().__init__()
        self.cfg = cfg
        self.encoder = nn.Conv1d(1, cfg.bases, kernel_size=cfg.window, stride=cfg.hop, bias=False)
        self.masks = MaskNetwork(cfg)
        self.decoder = nn.ConvTranspose1d(cfg.bases, 1, kernel_size=cfg.window, stride=cfg.hop, bias=False)

    @property
    def num_sources(self) -> int:
        return self.cfg.num_sources

    def _padded_length(self, length: int) -> int:
        window, hop = self.cfg.window, self.cfg.hop
        if length <= window:
            return window
        frames = -(-(length - window) // hop)
        return frames * hop + window

    def forward(self, mixture: torch.Tensor) -> torch.Tensor:
        """
        Separate a batch of mixtures.

        Args:
            mixture: (B, T') waveforms

        Returns:
            (B, M, T') mixture-consistent source estimates
        """
        if mixture.dim() != 2:
            raise DimensionException(f"Separator expects (B, T'), got {tuple(mixture.shape)}")
        batch, length = mixture.shape
        padded = nn.functional.pad(mixture, (0, self._padded_length(length) - length))

        latents = self.encoder(padded.unsqueeze(1))
        masked = self.masks(latents) * latents.unsqueeze(1)
        frames = masked.shape[-1]
        decoded = self.decoder(masked.reshape(batch * self.num_sources, self.cfg.bases, frames))
        sources = decoded.reshape(batch, self.num_sources, -1)[..., :length]
        return mixture_consistency(sources, mixture)


def separate(x: WaveBuffer, separator: Separator) -> SourceEstimates:
    """Separate one mixture into M consistent estimates"""
    param = next(separator.parameters())
    sources = separator(x.samples.to(param.dtype).unsqueeze(0))[0]
    return SourceEstimates(sources=sources, sample_rate=x.sample_rate)
