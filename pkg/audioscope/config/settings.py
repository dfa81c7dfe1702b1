"""
Run Settings - one flat key=value namespace for every command

Precedence, lowest first: field defaults, AUDIOSCOPE_* environment and .env,
the --config file, --set overrides and per-command flags.
"""
import logging
from enum import Enum
from pathlib import Path
from typing import Dict, Iterable, Mapping, Optional, Tuple

from dotenv import dotenv_values, load_dotenv
from pydantic import Field, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from audioscope.exceptions import ConfigException
from audioscope.models.configs import (
    SOURCE_FAMILIES,
    AttentionConfig,
    AttentionVariant,
    BenchConfig,
    EmbeddingConfig,
    LossConfig,
    SamplingMode,
    SceneConfig,
    SeparatorConfig,
    TrainConfig,
)

logger = logging.getLogger(__name__)

RESOLVED_FILE = "config.resolved"
BENCH_MIN_FRAMES = 32


def _csv(value, cast) -> str:
    """Canonical comma list; raises ValueError on items `cast` rejects"""
    if isinstance(value, str):
        items = [item.strip() for item in value.split(",") if item.strip()]
    else:
        items = [item.value if isinstance(item, Enum) else item for item in value]
    return ",".join(str(cast(item)) for item in items)


def _split(value: str, cast) -> Tuple:
    return tuple(cast(item) for item in value.split(",") if item)


def _format(value) -> str:
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


class Settings(BaseSettings):
    model_config = SettingsConfigDict(
        env_prefix="AUDIOSCOPE_",
        env_file=".env",
        extra="forbid",
    )

    # ==================== Run ====================
    seed: int = Field(default=0, description="Seed for data, parameters and sampling")
    out: str = Field(default="runs", description="Output directory for every artifact")
    log_level: str = Field(default="INFO", description="Logging level")
    workers: int = Field(default=1, ge=1, description="Processes for dataset generation")

    # ==================== Data ====================
    count: int = Field(default=64, ge=1, description="Examples written by gen-data or sampled for training")
    mode: SamplingMode = Field(default=SamplingMode.UNSUPERVISED, description="Batch sampling mode")
    data: Optional[str] = Field(default=None, description="Dataset directory; synthetic stream when unset")
    min_sources: int = Field(default=1, ge=1)
    max_sources: int = Field(default=3, ge=1)
    on_fraction: float = Field(default=0.5, ge=0, le=1)
    clip_seconds: float = Field(default=2.0, gt=0)
    sample_rate: int = Field(default=8000, gt=0)
    video_fps: int = Field(default=16, gt=0)
    frame_size: int = Field(default=32, ge=8)
    noise_floor: float = Field(default=0.0, ge=0)
    blob_sigma: float = Field(default=2.0, gt=0)
    families: str = Field(default=",".join(SOURCE_FAMILIES), description="Comma list of source families")

    # ==================== Separator ====================
    num_sources: int = Field(default=4, ge=1, description="Separated sources M")
    mask_window: int = Field(default=32, ge=2)
    mask_hop: int = Field(default=16, ge=1)
    bases: int = Field(default=64, ge=1)
    hidden_channels: int = Field(default=64, ge=1)
    kernel_size: int = Field(default=3, ge=1)
    mask_dilations: str = Field(default="1,2,4", description="Comma list of mask network dilations")

    # ==================== Embedding and attention ====================
    depth: int = Field(default=32, ge=1, description="Shared embedding and attention depth D")
    grid_side: int = Field(default=4, ge=1)
    mel_bins: int = Field(default=32, ge=1)
    stft_window_ms: float = Field(default=25.0, gt=0)
    stft_hop_ms: float = Field(default=10.0, gt=0)
    audio_channels: int = Field(default=16, ge=1)
    video_channels: int = Field(default=16, ge=1)
    video_strides: str = Field(default="2,2,2", description="Comma list of video conv strides")
    freeze_embedders: bool = Field(default=False)
    variant: AttentionVariant = Field(default=AttentionVariant.JOINT_CMA)
    num_heads: int = Field(default=4, ge=1)
    num_blocks: int = Field(default=4, ge=1)
    dropout_rate: float = Field(default=0.2, ge=0, lt=1)

    # ==================== Loss and training ====================
    snr_threshold: float = Field(default=1e-3, gt=0)
    classification_weight: float = Field(default=1.0, ge=0)
    probability_clamp: float = Field(default=1e-7, gt=0, lt=0.5)
    learning_rate: float = Field(default=1e-4, gt=0)
    beta1: float = Field(default=0.9, gt=0, lt=1)
    beta2: float = Field(default=0.999, gt=0, lt=1)
    adam_eps: float = Field(default=1e-8, gt=0)
    batch_size: int = Field(default=8, ge=1)
    steps: int = Field(default=2000, ge=1)
    eval_every: int = Field(default=250, ge=1)
    eval_count: int = Field(default=64, ge=1)
    finetune_separator: bool = Field(default=True)
    separator_checkpoint: Optional[str] = Field(default=None, description="Pretrained separator for train")
    checkpoint: Optional[str] = Field(default=None, description="Audio-visual checkpoint for eval and export-attn")

    # ==================== Evaluation ====================
    target_osr: float = Field(default=6.0, description="Calibration target in dB")
    calibration_targets: str = Field(default="6,10,15", description="Comma list of report targets in dB")
    records: Optional[str] = Field(default=None, description="Records CSV for calibrate")

    # ==================== Benchmark and diagnostics ====================
    variants: str = Field(default=",".join(v.value for v in AttentionVariant))
    tmax: int = Field(default=256, ge=1, description="Longest benchmarked input in frames")
    budget: int = Field(default=2 * 1024 ** 3, gt=0, description="Allocator budget in bytes per point")
    repeats: int = Field(default=5, ge=5)
    bench_sources: int = Field(default=4, ge=1)
    bench_grid: int = Field(default=64, ge=1)
    bench_depth: int = Field(default=128, ge=1)
    bench_heads: int = Field(default=4, ge=1)
    bench_blocks: int = Field(default=4, ge=1)
    module: str = Field(default="attention", description="Network family checked by gradcheck")
    example: int = Field(default=0, ge=0, description="Example index for export-attn")

    @field_validator("families", mode="before")
    @classmethod
    def _families(cls, value):
        return _csv(value, str)

    @field_validator("mask_dilations", "video_strides", mode="before")
    @classmethod
    def _int_lists(cls, value):
        return _csv(value, int)

    @field_validator("calibration_targets", mode="before")
    @classmethod
    def _float_list(cls, value):
        return _csv(value, float)

    @field_validator("variants", mode="before")
    @classmethod
    def _variant_list(cls, value):
        return _csv(value, lambda v: AttentionVariant(v).value)

    # ==================== Typed views ====================

    def scene_config(self) -> SceneConfig:
        return SceneConfig(
            min_sources=self.min_sources,
            max_sources=self.max_sources,
            on_fraction=self.on_fraction,
            clip_seconds=self.clip_seconds,
            sample_rate=self.sample_rate,
            video_fps=self.video_fps,
            frame_size=self.frame_size,
            noise_floor=self.noise_floor,
            blob_sigma=self.blob_sigma,
            families=_split(self.families, str),
            seed=self.seed,
        )

    def separator_config(self) -> SeparatorConfig:
        return SeparatorConfig(
            num_sources=self.num_sources,
            window=self.mask_window,
            hop=self.mask_hop,
            bases=self.bases,
            hidden_channels=self.hidden_channels,
            kernel_size=self.kernel_size,
            dilations=_split(self.mask_dilations, int),
        )

    def embedding_config(self) -> EmbeddingConfig:
        return EmbeddingConfig(
            sample_rate=self.sample_rate,
            depth=self.depth,
            grid_side=self.grid_side,
            mel_bins=self.mel_bins,
            stft_window_ms=self.stft_window_ms,
            stft_hop_ms=self.stft_hop_ms,
            video_fps=self.video_fps,
            frame_size=self.frame_size,
            audio_channels=self.audio_channels,
            video_channels=self.video_channels,
            video_strides=_split(self.video_strides, int),
            freeze=self.freeze_embedders,
        )

    def attention_config(self) -> AttentionConfig:
        return AttentionConfig(
            num_heads=self.num_heads,
            depth=self.depth,
            num_blocks=self.num_blocks,
            dropout_rate=self.dropout_rate,
            variant=self.variant,
        )

    def loss_config(self) -> LossConfig:
        return LossConfig(
            snr_threshold=self.snr_threshold,
            classification_weight=self.classification_weight,
            probability_clamp=self.probability_clamp,
        )

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            learning_rate=self.learning_rate,
            beta1=self.beta1,
            beta2=self.beta2,
            adam_eps=self.adam_eps,
            batch_size=self.batch_size,
            steps=self.steps,
            eval_every=self.eval_every,
            eval_count=self.eval_count,
            seed=self.seed,
            mode=self.mode,
            finetune_separator=self.finetune_separator,
            freeze_embedders=self.freeze_embedders,
            loss=self.loss_config(),
        )

    def bench_frames(self) -> Tuple[int, ...]:
        """Powers of two from 32 up to tmax"""
        if self.tmax < BENCH_MIN_FRAMES:
            return (self.tmax,)
        frames, T = [], BENCH_MIN_FRAMES
        while T <= self.tmax:
            frames.append(T)
            T *= 2
        return tuple(frames)

    def bench_config(self) -> BenchConfig:
        return BenchConfig(
            variants=_split(self.variants, AttentionVariant),
            frames=self.bench_frames(),
            num_sources=self.bench_sources,
            grid_size=self.bench_grid,
            depth=self.bench_depth,
            num_heads=self.bench_heads,
            num_blocks=self.bench_blocks,
            repeats=self.repeats,
            budget_bytes=self.budget,
            seed=self.seed,
        )

    def calibration_target_list(self) -> Tuple[float, ...]:
        return _split(self.calibration_targets, float)

    # ==================== Echo ====================

    def resolved(self) -> str:
        """Sorted key=value lines; unset optional keys are omitted"""
        values = self.model_dump()
        lines = [f"{key}={_format(values[key])}" for key in sorted(values) if values[key] is not None]
        return "\n".join(lines) + "\n"

    def write_resolved(self, out_dir: Optional[Path] = None) -> Path:
        out_dir = Path(out_dir or self.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        path = out_dir / RESOLVED_FILE
        path.write_text(self.resolved())
        logger.info(f"Effective configuration written to {path}")
        return path


def _normalize(key: str) -> str:
    return key.strip().lower().replace("-", "_")


def parse_overrides(pairs: Iterable[str]) -> Dict[str, str]:
    """`key=value` strings from repeated --set flags"""
    overrides = {}
    for pair in pairs:
        key, sep, value = pair.partition("=")
        if not sep or not key.strip():
            raise ConfigException(f"Override '{pair}' is not of the form key=value", key=pair)
        overrides[_normalize(key)] = value.strip()
    return overrides


def read_config_file(path: Path) -> Dict[str, str]:
    path = Path(path)
    if not path.is_file():
        raise ConfigException(f"Config file {path} does not exist", key="config")
    values = dotenv_values(path)
    return {_normalize(key): value for key, value in values.items() if value is not None}


def load_settings(config_path: Optional[Path] = None, overrides: Optional[Mapping[str, object]] = None) -> Settings:
    """
    Build the effective settings.

    Args:
        config_path: Flat key=value file, e.g. a previous run's config.resolved
        overrides: Highest-precedence values (--set pairs and command flags)

    Raises:
        pydantic.ValidationError: Unknown keys or values of the wrong type
    """
    load_dotenv()
    values: Dict[str, object] = {}
    if config_path is not None:
        values.update(read_config_file(config_path))
    values.update({_normalize(k): v for k, v in (overrides or {}).items() if v is not None})
    return Settings(**values)
