"""
Neural network components: separator, embedders, attention encoders, classifier and losses
"""

from .attention import (
    ENCODERS,
    AttentionMap,
    AudioVisualEncoder,
    ScoreCounter,
    build_encoder,
    multi_head_attention,
)
from .classifier import OnScreenClassifier, calibrated_mixdown, classify, onscreen_mixdown, predict
from .embedders import AudioEmbedder, VideoEmbedder, embed_audio, embed_video, log_mel
from .losses import (
    active_combinations_loss,
    exact_ce_loss,
    mixit_batch,
    mixit_loss,
    thresholded_snr_loss,
    total_loss,
)
from .model import AudioVisualModel, ForwardOutput
from .separator import Separator, mixture_consistency, separate

__all__ = [
    "ENCODERS",
    "AttentionMap",
    "AudioEmbedder",
    "AudioVisualEncoder",
    "AudioVisualModel",
    "ForwardOutput",
    "OnScreenClassifier",
    "ScoreCounter",
    "Separator",
    "VideoEmbedder",
    "active_combinations_loss",
    "build_encoder",
    "calibrated_mixdown",
    "classify",
    "embed_audio",
    "embed_video",
    "exact_ce_loss",
    "log_mel",
    "mixit_batch",
    "mixit_loss",
    "mixture_consistency",
    "multi_head_attention",
    "onscreen_mixdown",
    "predict",
    "separate",
    "thresholded_snr_loss",
    "total_loss",
]
