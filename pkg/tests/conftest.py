"""
Shared fixtures: miniature configurations, a tiny model and record builders
"""
import numpy as np
import pytest
import torch

from audioscope.models.configs import (
    AttentionConfig,
    AttentionVariant,
    EmbeddingConfig,
    LossConfig,
    SamplingMode,
    SceneConfig,
    SeparatorConfig,
    TrainConfig,
)
from audioscope.models.records import EvalRecord, RecordKind
from audioscope.networks.model import AudioVisualModel
from audioscope.services.metrics_service import build_record


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def scene_cfg():
    # 0.5 s at 8 kHz, 8 frames of 16x16 pixels
    return SceneConfig(clip_seconds=0.5, sample_rate=8000, video_fps=16, frame_size=16)


@pytest.fixture
def separator_cfg():
    return SeparatorConfig(num_sources=2, window=16, hop=8, bases=8, hidden_channels=8, kernel_size=3,
                           dilations=(1, 2))


@pytest.fixture
def embedding_cfg():
    return EmbeddingConfig(sample_rate=8000, depth=8, grid_side=2, mel_bins=8, video_fps=16, frame_size=16,
                           audio_channels=4, video_channels=4, video_strides=(2, 2, 2))


@pytest.fixture
def attention_cfg():
    return AttentionConfig(num_heads=2, depth=8, num_blocks=1, dropout_rate=0.0, variant=AttentionVariant.JOINT_CMA)


@pytest.fixture
def tiny_model(separator_cfg, embedding_cfg, attention_cfg):
    torch.manual_seed(0)
    return AudioVisualModel(separator_cfg, embedding_cfg, attention_cfg)


@pytest.fixture
def train_cfg():
    return TrainConfig(learning_rate=1e-3, batch_size=2, steps=3, eval_every=2, eval_count=1, seed=0,
                       mode=SamplingMode.UNSUPERVISED, loss=LossConfig())


@pytest.fixture
def offscreen_record():
    """Builds an off-screen record whose mixture is the sum of its sources"""

    def build(example_id, logits, sources):
        sources = np.asarray(sources, dtype=np.float64)
        return build_record(
            example_id=example_id,
            offscreen=True,
            logits=logits,
            sources=sources,
            reference=np.zeros(sources.shape[1]),
            mixture=sources.sum(axis=0),
            labels=[0] * sources.shape[0],
        )

    return build


@pytest.fixture
def scored_record():
    """Minimal single-source record carrying only the given metric"""

    def build(example_id, snr=None, osr=None):
        kind = RecordKind.OFF_SCREEN if osr is not None else RecordKind.ON_SCREEN
        return EvalRecord(
            example_id=example_id,
            kind=kind,
            snr=snr,
            osr=osr,
            logits=[0.0],
            probs=[0.5],
            powers=[1.0],
            labels=[int(kind is RecordKind.ON_SCREEN)],
            gram=[1.0],
            mixture_power=1.0,
        )

    return build
