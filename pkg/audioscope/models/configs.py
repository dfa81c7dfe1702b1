"""
Configuration Models for the separation, attention and training stack
"""
from enum import Enum
from typing import Tuple

from pydantic import BaseModel, Field, model_validator

from audioscope.exceptions import ConfigException


class AttentionVariant(str, Enum):
    JOINT_SA = "joint_sa"
    SEP_SA = "sep_sa"
    JOINT_CMA = "joint_cma"
    SEP_CMA = "sep_cma"
    SHALLOW = "shallow"


class SamplingMode(str, Enum):
    UNSUPERVISED = "unsupervised"
    SEMI_SUPERVISED = "semi-supervised"


class AttentionConfig(BaseModel):
    num_heads: int = Field(default=4, ge=1, description="Attention heads H")
    depth: int = Field(default=32, ge=1, description="Feature depth D, divisible by H")
    num_blocks: int = Field(default=4, ge=1, description="Stacked blocks L")
    dropout_rate: float = Field(default=0.2, ge=0.0, lt=1.0, description="Dropout probability")
    variant: AttentionVariant = Field(default=AttentionVariant.JOINT_CMA, description="Encoder architecture")

    @model_validator(mode="after")
    def _heads_divide_depth(self) -> "AttentionConfig":
        if self.depth % self.num_heads != 0:
            raise ConfigException(
                f"Depth {self.depth} is not divisible by {self.num_heads} heads",
                key="num_heads",
            )
        return self

    @property
    def head_depth(self) -> int:
        return self.depth // self.num_heads


class EmbeddingConfig(BaseModel):
    sample_rate: int = Field(default=8000, gt=0, description="Audio sample rate in Hz")
    depth: int = Field(default=32, ge=1, description="Common embedding depth D")
    grid_side: int = Field(default=4, ge=1, description="Spatial grid side g, G = g^2")
    mel_bins: int = Field(default=32, ge=1, description="Mel filterbank size")
    stft_window_ms: float = Field(default=25.0, gt=0, description="Spectrogram window in ms")
    stft_hop_ms: float = Field(default=10.0, gt=0, description="Spectrogram hop in ms")
    video_fps: int = Field(default=16, gt=0, description="Video frame rate")
    frame_size: int = Field(default=32, gt=0, description="Frame height and width in pixels")
    channels: int = Field(default=1, ge=1, description="Pixel channels")
    audio_channels: int = Field(default=16, ge=1, description="Audio conv channels")
    video_channels: int = Field(default=16, ge=1, description="Video conv channels")
    video_strides: Tuple[int, ...] = Field(default=(2, 2, 2), description="Per-layer video conv strides")
    video_bias: bool = Field(default=True, description="Use biases in the video conv stack")
    freeze: bool = Field(default=False, description="Freeze embedder parameters")

    @model_validator(mode="after")
    def _grid_matches_strides(self) -> "EmbeddingConfig":
        reduction = 1
        for stride in self.video_strides:
            reduction *= stride
        if self.frame_size % reduction != 0:
            raise ConfigException(
                f"Frame size {self.frame_size} not divisible by stride product {reduction}",
                key="video_strides",
            )
        if self.frame_size // reduction != self.grid_side:
            raise ConfigException(
                f"Strides {self.video_strides} reduce {self.frame_size}px to {self.frame_size // reduction}, "
                f"expected grid side {self.grid_side}",
                key="grid_side",
            )
        return self

    @property
    def grid_size(self) -> int:
        return self.grid_side ** 2

    @property
    def window_samples(self) -> int:
        return int(round(self.sample_rate * self.stft_window_ms / 1000.0))

    @property
    def hop_samples(self) -> int:
        return int(round(self.sample_rate * self.stft_hop_ms / 1000.0))


class SeparatorConfig(BaseModel):
    num_sources: int = Field(default=4, ge=1, description="Estimated sources M")
    window: int = Field(default=32, ge=2, description="Encoder window in samples")
    hop: int = Field(default=16, ge=1, description="Encoder hop in samples")
    bases: int = Field(default=64, ge=1, description="Encoder basis signals N")
    hidden_channels: int = Field(default=64, ge=1, description="Mask network width")
    kernel_size: int = Field(default=3, ge=1, description="Mask network kernel size, odd")
    dilations: Tuple[int, ...] = Field(default=(1, 2, 4), description="Mask network dilations")

    @model_validator(mode="after")
    def _hop_within_window(self) -> "SeparatorConfig":
        if self.hop > self.window:
            raise ConfigException(f"Hop {self.hop} exceeds window {self.window}", key="hop")
        if self.kernel_size % 2 == 0:
            raise ConfigException(
                f"Kernel size {self.kernel_size} must be odd to keep the frame count", key="kernel_size"
            )
        return self


class LossConfig(BaseModel):
    snr_threshold: float = Field(default=1e-3, gt=0, description="Soft threshold tau (power ratio)")
    classification_weight: float = Field(default=1.0, ge=0, description="Weight lambda of the classification term")
    probability_clamp: float = Field(default=1e-7, gt=0, lt=0.5, description="Cross-entropy clamp")


class TrainConfig(BaseModel):
    learning_rate: float = Field(default=1e-4, gt=0, description="Adam learning rate")
    beta1: float = Field(default=0.9, gt=0, lt=1)
    beta2: float = Field(default=0.999, gt=0, lt=1)
    adam_eps: float = Field(default=1e-8, gt=0)
    batch_size: int = Field(default=8, ge=1)
    steps: int = Field(default=2000, ge=1)
    eval_every: int = Field(default=250, ge=1)
    eval_count: int = Field(default=64, ge=1, description="Validation examples per kind")
    seed: int = Field(default=0)
    mode: SamplingMode = Field(default=SamplingMode.UNSUPERVISED)
    finetune_separator: bool = Field(default=True)
    freeze_embedders: bool = Field(default=False)
    loss: LossConfig = Field(default_factory=LossConfig)


SOURCE_FAMILIES = ("tone", "noise-burst", "chirp")


class SceneConfig(BaseModel):
    min_sources: int = Field(default=1, ge=1, description="Fewest sources per scene")
    max_sources: int = Field(default=3, ge=1, description="Most sources per scene")
    on_fraction: float = Field(default=0.5, ge=0, le=1, description="Probability a source is on-screen")
    clip_seconds: float = Field(default=2.0, gt=0)
    sample_rate: int = Field(default=8000, gt=0)
    video_fps: int = Field(default=16, gt=0)
    frame_size: int = Field(default=32, ge=8)
    noise_floor: float = Field(default=0.0, ge=0, description="Std of on-scene white noise")
    blob_sigma: float = Field(default=2.0, gt=0, description="Blob radius in pixels")
    peak_level: float = Field(default=0.45, gt=0, lt=0.5, description="Soundtrack peak limit")
    families: Tuple[str, ...] = Field(default=SOURCE_FAMILIES, description="Signal families to draw from")
    seed: int = Field(default=0)

    @model_validator(mode="after")
    def _source_range(self) -> "SceneConfig":
        if self.min_sources > self.max_sources:
            raise ConfigException(
                f"min_sources {self.min_sources} exceeds max_sources {self.max_sources}", key="min_sources"
            )
        unknown = [f for f in self.families if f not in SOURCE_FAMILIES]
        if unknown or not self.families:
            raise ConfigException(f"Unknown source families {unknown or self.families}", key="families")
        if self.sample_rate % self.video_fps or self.num_frames * self.samples_per_frame != self.num_samples:
            raise ConfigException("Clip length and frame rate must give whole samples per frame", key="video_fps")
        return self

    @property
    def num_samples(self) -> int:
        return int(self.sample_rate * self.clip_seconds)

    @property
    def num_frames(self) -> int:
        return int(round(self.video_fps * self.clip_seconds))

    @property
    def samples_per_frame(self) -> int:
        return self.sample_rate // self.video_fps


class BenchConfig(BaseModel):
    variants: Tuple[AttentionVariant, ...] = Field(default=tuple(AttentionVariant))
    frames: Tuple[int, ...] = Field(default=(32, 64, 128, 256), description="T grid")
    num_sources: int = Field(default=4, ge=1)
    grid_size: int = Field(default=64, ge=1)
    depth: int = Field(default=128, ge=1)
    num_heads: int = Field(default=4, ge=1)
    num_blocks: int = Field(default=4, ge=1)
    repeats: int = Field(default=5, ge=5, description="Timed repeats per point")
    budget_bytes: int = Field(default=2 * 1024 ** 3, gt=0, description="Allocator budget per measurement")
    seed: int = Field(default=0)
