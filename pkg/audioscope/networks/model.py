"""
Audio-Visual Model - separator, embedders, attention encoder and classifier wired together
"""
import logging
from dataclasses import dataclass
from typing import Optional

import torch
from torch import nn

from audioscope.exceptions import DimensionException
from audioscope.models.configs import AttentionConfig, EmbeddingConfig, SeparatorConfig
from audioscope.networks.attention import AttentionMap, AudioVisualEncoder, build_encoder
from audioscope.networks.classifier import OnScreenClassifier
from audioscope.networks.embedders import AudioEmbedder, VideoEmbedder
from audioscope.networks.separator import Separator

logger = logging.getLogger(__name__)


@dataclass
class ForwardOutput:
    """Batched outputs of one forward pass"""
    sources: torch.Tensor  # (B, M, T')
    logits: torch.Tensor  # (B, M)
    probs: torch.Tensor  # (B, M)
    attention: Optional[AttentionMap] = None


class AudioVisualModel(nn.Module):
    """
    Full on-screen separation model.

    The mixture is separated into M sources, each source and the video are
    embedded, the encoder fuses them into one embedding per source and the
    classifier scores every source as on-screen or not.
    """

    def __init__(self, separator_cfg: SeparatorConfig, embedding_cfg: EmbeddingConfig, attention_cfg: AttentionConfig):
        super().__init__()
        if embedding_cfg.depth != attention_cfg.depth:
            raise DimensionException(
                f"Embedding depth {embedding_cfg.depth} differs from attention depth {attention_cfg.depth}"
            )
        self.separator_cfg = separator_cfg
        self.embedding_cfg = embedding_cfg
        self.attention_cfg = attention_cfg

        self.separator = Separator(separator_cfg)
        self.audio_embedder = AudioEmbedder(embedding_cfg)
        self.video_embedder = VideoEmbedder(embedding_cfg)
        self.encoder: AudioVisualEncoder = build_encoder(attention_cfg)
        self.classifier = OnScreenClassifier(attention_cfg.depth)
        if embedding_cfg.freeze:
            self.freeze_embedders()

    @property
    def num_sources(self) -> int:
        return self.separator_cfg.num_sources

    def freeze_embedders(self) -> None:
        for module in (self.audio_embedder, self.video_embedder):
            for param in module.parameters():
                param.requires_grad_(False)
        logger.info("Embedder parameters frozen")

    def finetune_separator(self, enabled: bool) -> None:
        for param in self.separator.parameters():
            param.requires_grad_(enabled)

    def forward(self, mixture: torch.Tensor, frames: torch.Tensor, capture_attention: bool = False) -> ForwardOutput:
        """
        Args:
            mixture: (B, T') input mixtures
            frames: (B, T, H, W, C) video clips in [0, 1]
            capture_attention: Record the encoder's spatial attention map

        Returns:
            ForwardOutput with separated sources and per-source on-screen scores
        """
        if mixture.shape[0] != frames.shape[0]:
            raise DimensionException(f"{mixture.shape[0]} mixtures for {frames.shape[0]} clips")
        sources = self.separator(mixture)
        z_a = self.audio_embedder(sources, frames.shape[1])
        z_v = self.video_embedder(frames)

        self.encoder.capture_maps(capture_attention)
        z = self.encoder(z_a, z_v)
        logits, probs = self.classifier(z)
        attention = self.encoder.attention_map(self.num_sources) if capture_attention else None
        return ForwardOutput(sources=sources, logits=logits, probs=probs, attention=attention)
