import math

import numpy as np
import pytest
import torch

from audioscope.exceptions import ConfigException, ContractException, DimensionException
from audioscope.models.audio import SourceEstimates, VideoClip, WaveBuffer
from audioscope.models.configs import EmbeddingConfig
from audioscope.networks.embedders import (
    LOG_MEL_FLOOR,
    MEL_BIN_AXIS,
    MEL_FRAME_AXIS,
    AudioEmbedder,
    LogMel,
    VideoEmbedder,
    embed_audio,
    embed_video,
    log_mel,
)
from audioscope.numerics.tensor import Axis


def _htk_centers(cfg):
    top = 2595 * math.log10(1 + (cfg.sample_rate / 2) / 700)
    mels = np.linspace(0, top, cfg.mel_bins + 2)[1:-1]
    return 700 * (10 ** (mels / 2595) - 1)


def _tone(freq, cfg, seconds=0.5):
    t = np.arange(int(cfg.sample_rate * seconds)) / cfg.sample_rate
    return WaveBuffer.from_numpy(np.sin(2 * np.pi * freq * t), cfg.sample_rate)


@pytest.fixture
def audio_embedder(embedding_cfg):
    torch.manual_seed(0)
    return AudioEmbedder(embedding_cfg).double()


@pytest.fixture
def video_embedder(embedding_cfg):
    torch.manual_seed(0)
    return VideoEmbedder(embedding_cfg).double()


class TestLogMel:
    def test_frame_count(self, embedding_cfg):
        assert embedding_cfg.window_samples == 200
        assert embedding_cfg.hop_samples == 80
        features = log_mel(WaveBuffer.silence(4000, 8000), embedding_cfg)
        assert features.axes == (MEL_FRAME_AXIS, MEL_BIN_AXIS)
        assert features.data.shape == (LogMel(embedding_cfg).num_frames(4000), 8)
        assert features.data.shape[0] == 48

    def test_silence_hits_the_floor(self, embedding_cfg):
        features = log_mel(WaveBuffer.silence(400, 8000), embedding_cfg)
        np.testing.assert_allclose(features.data.numpy(), math.log(LOG_MEL_FLOOR), rtol=1e-6)

    @pytest.mark.parametrize("band", [1, 2, 3, 4, 5, 6])
    def test_tone_energy_lands_in_nearest_band(self, embedding_cfg, band):
        # Tones on the 40 Hz analysis grid nearest each band centre
        freq = 40 * round(_htk_centers(embedding_cfg)[band] / 40)
        features = log_mel(_tone(freq, embedding_cfg), embedding_cfg)
        assert int(torch.argmax(features.data.mean(dim=0))) == band

    def test_short_clip(self, embedding_cfg):
        with pytest.raises(ContractException):
            log_mel(WaveBuffer.silence(199, 8000), embedding_cfg)


class TestAudioEmbedder:
    def test_output_axes(self, audio_embedder, rng):
        z = audio_embedder(torch.from_numpy(rng.normal(size=(2, 3, 4000))), 8)
        assert z.axes == (Axis.BATCH, Axis.SRC, Axis.TIME, Axis.DEPTH)
        assert z.data.shape == (2, 3, 8, 8)

    def test_sources_are_embedded_independently(self, audio_embedder, rng):
        sources = rng.normal(size=(1, 2, 4000))
        base = audio_embedder(torch.from_numpy(sources), 8).data
        sources[0, 1] *= 3.0
        changed = audio_embedder(torch.from_numpy(sources), 8).data
        np.testing.assert_allclose(changed[0, 0].detach().numpy(), base[0, 0].detach().numpy(), atol=1e-12)
        assert not torch.allclose(changed[0, 1], base[0, 1])

    def test_rejects_unbatched_sources(self, audio_embedder):
        with pytest.raises(DimensionException):
            audio_embedder(torch.zeros(2, 4000, dtype=torch.float64), 8)

    def test_single_example(self, audio_embedder, rng):
        estimates = SourceEstimates(sources=torch.from_numpy(rng.normal(size=(2, 4000))), sample_rate=8000)
        z = embed_audio(estimates, 8, audio_embedder)
        assert z.axes == (Axis.SRC, Axis.TIME, Axis.DEPTH)
        assert z.data.shape == (2, 8, 8)


class TestVideoEmbedder:
    def test_output_axes(self, video_embedder):
        frames = torch.rand(2, 8, 16, 16, 1, dtype=torch.float64)
        z = video_embedder(frames)
        assert z.axes == (Axis.BATCH, Axis.SPACE, Axis.TIME, Axis.DEPTH)
        assert z.data.shape == (2, 4, 8, 8)

    def test_frames_are_embedded_independently(self, video_embedder):
        frames = torch.rand(1, 8, 16, 16, 1, dtype=torch.float64, generator=torch.Generator().manual_seed(0))
        base = video_embedder(frames).data
        frames[0, 3] = 1.0 - frames[0, 3]
        changed = video_embedder(frames).data
        untouched = [t for t in range(8) if t != 3]
        np.testing.assert_allclose(changed[:, :, untouched].detach().numpy(),
                                   base[:, :, untouched].detach().numpy(), atol=1e-12)
        assert not torch.allclose(changed[:, :, 3], base[:, :, 3])

    def test_indivisible_frame(self, video_embedder):
        with pytest.raises(ConfigException):
            video_embedder(torch.zeros(1, 2, 12, 12, 1, dtype=torch.float64))

    def test_grid_must_match_strides(self):
        with pytest.raises(ConfigException):
            EmbeddingConfig(frame_size=16, grid_side=4, video_strides=(2, 2, 2))

    def test_single_clip(self, video_embedder):
        clip = VideoClip(frames=torch.zeros(8, 16, 16, 1), fps=16)
        z = embed_video(clip, video_embedder)
        assert z.axes == (Axis.SPACE, Axis.TIME, Axis.DEPTH)
        assert z.data.shape == (4, 8, 8)
