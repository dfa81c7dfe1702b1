"""
Data Models for the AudioScope pipeline
"""

from .audio import ExampleKind, MoMExample, SceneBundle, SceneTruth, SourceEstimates, VideoClip, WaveBuffer
from .configs import (
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
from .records import (
    BenchPoint,
    CalibrationResult,
    CheckpointInfo,
    EvalRecord,
    MixAssignment,
    OnScreenPrediction,
    RecordKind,
)

__all__ = [
    "AttentionConfig",
    "AttentionVariant",
    "BenchConfig",
    "BenchPoint",
    "CalibrationResult",
    "CheckpointInfo",
    "EmbeddingConfig",
    "EvalRecord",
    "ExampleKind",
    "LossConfig",
    "MixAssignment",
    "MoMExample",
    "OnScreenPrediction",
    "RecordKind",
    "SamplingMode",
    "SceneBundle",
    "SceneConfig",
    "SceneTruth",
    "SeparatorConfig",
    "SourceEstimates",
    "TrainConfig",
    "VideoClip",
    "WaveBuffer",
]
