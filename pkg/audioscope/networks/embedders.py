"""
Embedding Networks - log-mel audio embedder and per-frame video embedder

Both produce features with a shared TIME axis of length T (the video frame count)
and a common DEPTH D, ready for the audio-visual encoders.
"""
import logging

import torch
import torchaudio
from torch import nn

from audioscope.exceptions import ConfigException, ContractException, DimensionException
from audioscope.models.audio import SourceEstimates, VideoClip, WaveBuffer
from audioscope.models.configs import EmbeddingConfig
from audioscope.numerics.tensor import Axis, DenseLayer, FeatureTensor

logger = logging.getLogger(__name__)

LOG_MEL_FLOOR = 1e-5
MEL_FRAME_AXIS = "frame"
MEL_BIN_AXIS = "mel"


class LogMel(nn.Module):
    """Log mel power spectrogram without centering, so frames = 1 + (T' - win) // hop"""

    def __init__(self, cfg: EmbeddingConfig):
        super().__init__()
        self.window = cfg.window_samples
        self.hop = cfg.hop_samples
        self.spectrogram = torchaudio.transforms.MelSpectrogram(
            sample_rate=cfg.sample_rate,
            n_fft=self.window,
            win_length=self.window,
            hop_length=self.hop,
            f_min=0.0,
            f_max=cfg.sample_rate / 2.0,
            n_mels=cfg.mel_bins,
            power=2.0,
            center=False,
            mel_scale="htk",
        )

    def num_frames(self, length: int) -> int:
        return 1 + (length - self.window) // self.hop

    def forward(self, waves: torch.Tensor) -> torch.Tensor:
        """(..., T') waveforms to (..., frames, mel_bins) log-mel features"""
        if waves.shape[-1] < self.window:
            raise ContractException(
                f"Clip of {waves.shape[-1]} samples is shorter than one {self.window}-sample window"
            )
        mel = self.spectrogram(waves)
        return torch.log(torch.clamp(mel, min=LOG_MEL_FLOOR)).transpose(-1, -2)


def log_mel(s: WaveBuffer, cfg: EmbeddingConfig) -> FeatureTensor:
    transform = LogMel(cfg).to(s.samples.dtype)
    return FeatureTensor(transform(s.samples), (MEL_FRAME_AXIS, MEL_BIN_AXIS))


class AudioEmbedder(nn.Module):
    """
    Per-source log-mel, two strided convolutions, mean over mel, linear
    resampling of the frame axis to T, dense to D.
    """

    def __init__(self, cfg: EmbeddingConfig):
        super().__init__()
        self.cfg = cfg
        self.log_mel = LogMel(cfg)
        channels = cfg.audio_channels
        self.convs = nn.Sequential(
            nn.Conv2d(1, channels, kernel_size=3, stride=2, padding=1),
            nn.ReLU(),
            nn.Conv2d(channels, channels, kernel_size=3, stride=2, padding=1),
            nn.ReLU(),
        )
        self.project = DenseLayer(channels, cfg.depth)

    def forward(self, sources: torch.Tensor, num_frames: int) -> FeatureTensor:
        """
        Embed separated sources.

        Args:
            sources: (B, M, T') waveforms
            num_frames: Video frame count T to align to

        Returns:
            FeatureTensor with axes (B, M, T, D)
        """
        if sources.dim() != 3:
            raise DimensionException(f"Audio embedder expects (B, M, T'), got {tuple(sources.shape)}")
        batch, num_sources, _ = sources.shape
        features = self.log_mel(sources)
        frames, bins = features.shape[-2:]

        x = self.convs(features.reshape(batch * num_sources, 1, frames, bins))
        x = x.mean(dim=-1)
        x = nn.functional.interpolate(x, size=num_frames, mode="linear", align_corners=True)
        x = x.transpose(1, 2).reshape(batch, num_sources, num_frames, -1)
        return self.project(FeatureTensor(x, (Axis.BATCH, Axis.SRC, Axis.TIME, Axis.DEPTH)))


class VideoEmbedder(nn.Module):
    """Strided patch convolutions applied to every frame independently, then dense to D"""

    def __init__(self, cfg: EmbeddingConfig):
        super().__init__()
        self.cfg = cfg
        layers = []
        channels = cfg.channels
        for i, stride in enumerate(cfg.video_strides):
            layers.append(
                nn.Conv2d(channels, cfg.video_channels, kernel_size=stride, stride=stride, bias=cfg.video_bias)
            )
            if i < len(cfg.video_strides) - 1:
                layers.append(nn.ReLU())
            channels = cfg.video_channels
        self.convs = nn.Sequential(*layers)
        self.project = DenseLayer(cfg.video_channels, cfg.depth)
        self.reduction = 1
        for stride in cfg.video_strides:
            self.reduction *= stride

    def feature_map(self, frames: torch.Tensor) -> torch.Tensor:
        """(B, T, H, W, C) pixels to (B, T, channels, g, g) activations"""
        if frames.dim() != 5:
            raise DimensionException(f"Video embedder expects (B, T, H, W, C), got {tuple(frames.shape)}")
        batch, num_frames, height, width, channels = frames.shape
        if height % self.reduction or width % self.reduction:
            raise ConfigException(
                f"Frame {height}x{width} not divisible by stride product {self.reduction}", key="video_strides"
            )
        x = frames.permute(0, 1, 4, 2, 3).reshape(batch * num_frames, channels, height, width)
        x = self.convs(x)
        return x.reshape(batch, num_frames, *x.shape[1:])

    def forward(self, frames: torch.Tensor) -> FeatureTensor:
        """
        Embed a batch of clips.

        Returns:
            FeatureTensor with axes (B, G, T, D)
        """
        maps = self.feature_map(frames)
        batch, num_frames, channels = maps.shape[:3]
        x = maps.reshape(batch, num_frames, channels, -1).permute(0, 3, 1, 2)
        return self.project(FeatureTensor(x, (Axis.BATCH, Axis.SPACE, Axis.TIME, Axis.DEPTH)))


def embed_audio(estimates: SourceEstimates, num_frames: int, embedder: AudioEmbedder) -> FeatureTensor:
    """Single-example audio embedding with axes (M, T, D)"""
    z = embedder(estimates.sources.unsqueeze(0), num_frames)
    return FeatureTensor(z.data[0], z.axes[1:])


def embed_video(clip: VideoClip, embedder: VideoEmbedder) -> FeatureTensor:
    """Single-example video embedding with axes (G, T, D)"""
    param = next(embedder.parameters())
    z = embedder(clip.frames.to(param.dtype).unsqueeze(0))
    return FeatureTensor(z.data[0], z.axes[1:])
