from collections import Counter

import numpy as np
import pytest
import torch
from pydantic import ValidationError

from audioscope.exceptions import ConfigException, ContractException
from audioscope.models.audio import ExampleKind, MoMExample
from audioscope.models.configs import SamplingMode, SceneConfig
from audioscope.services.data_service import (
    KIND_ORDER,
    PCM_SCALE,
    SEMI_SUPERVISED_PROPORTIONS,
    SyntheticMoMDataset,
    collate,
    evaluation_set,
    make_example,
    make_labeled_examples,
    make_non_mom,
    quantize,
    sample_batch,
    sample_kinds,
    synth_scene,
)


class TestScenes:
    def test_same_seed_same_scene(self, scene_cfg):
        first, second = synth_scene(scene_cfg, 3, 5), synth_scene(scene_cfg, 3, 5)
        assert np.array_equal(first.truth.sources, second.truth.sources)
        assert torch.equal(first.clip.frames, second.clip.frames)
        assert first.truth.on_screen == second.truth.on_screen

    def test_streams_differ(self, scene_cfg):
        first, second = synth_scene(scene_cfg, 3, 5), synth_scene(scene_cfg, 3, 6)
        assert not torch.equal(first.full_audio.samples, second.full_audio.samples)

    def test_dimensions(self, scene_cfg):
        scene = synth_scene(scene_cfg, 0)
        assert scene.soundtrack.length == 4000
        assert scene.clip.frames.shape == (8, 16, 16, 1)
        assert scene.truth.rms_traces.shape == (len(scene.truth.on_screen), 8)
        assert float(scene.clip.frames.min()) >= 0.0 and float(scene.clip.frames.max()) <= 1.0

    def test_soundtrack_is_exact_sum_on_pcm_grid(self, scene_cfg):
        for index in range(5):
            scene = synth_scene(scene_cfg, 1, index)
            sources = scene.truth.sources
            on = np.asarray(scene.truth.on_screen)
            assert np.array_equal(scene.soundtrack.numpy(), sources[on].sum(axis=0))
            assert np.array_equal(scene.offscreen_audio.numpy(), sources[~on].sum(axis=0))
            assert np.array_equal(scene.full_audio.numpy(), sources.sum(axis=0))
            assert np.array_equal(sources * PCM_SCALE, np.round(sources * PCM_SCALE))
            for audio in (scene.soundtrack, scene.offscreen_audio, scene.full_audio):
                assert np.abs(audio.numpy()).max() <= scene_cfg.peak_level + 2.0 / PCM_SCALE

    def test_offscreen_sources_stay_out_of_the_primary_track(self, scene_cfg):
        noisy_cfg = scene_cfg.model_copy(update={"noise_floor": 0.01})
        mixed = [i for i in range(40) if len(set(synth_scene(scene_cfg, 3, i).truth.on_screen)) == 2]
        assert mixed
        for index in mixed[:3]:
            clean, noisy = synth_scene(scene_cfg, 3, index), synth_scene(noisy_cfg, 3, index)
            on = np.asarray(clean.truth.on_screen)
            assert np.array_equal(noisy.truth.sources, clean.truth.sources)
            assert np.array_equal(clean.soundtrack.numpy(), clean.truth.sources[on].sum(axis=0))
            noise = noisy.soundtrack.numpy() - clean.truth.sources[on].sum(axis=0)
            assert 0.005 < noise.std() < 0.02
            assert abs(np.corrcoef(noise, clean.offscreen_audio.numpy())[0, 1]) < 0.1
            example = make_non_mom(clean, synth_scene(scene_cfg, 3, index + 100))
            assert np.array_equal(example.primary_audio.numpy(), clean.truth.sources[on].sum(axis=0))

    def test_forced_flags(self, scene_cfg):
        assert all(synth_scene(scene_cfg, 2, 0, force=True).truth.on_screen)
        off = synth_scene(scene_cfg, 2, 0, force=False)
        assert not any(off.truth.on_screen)
        assert float(off.clip.frames.abs().max()) == 0.0
        assert not off.truth.blob_traces.any()

    def test_single_blob_tracks_loudness(self):
        cfg = SceneConfig(min_sources=1, max_sources=1, clip_seconds=0.5, sample_rate=8000, video_fps=16,
                          frame_size=16)
        scene = synth_scene(cfg, 7, 0, force=True)
        np.testing.assert_allclose(scene.truth.blob_traces, scene.truth.rms_traces, atol=1e-12)
        centers = scene.truth.centers[0]
        rows, cols = torch.from_numpy(centers[:, 0]), torch.from_numpy(centers[:, 1])
        pixels = scene.clip.frames[torch.arange(8), rows, cols, 0].numpy()
        np.testing.assert_allclose(pixels, scene.truth.rms_traces[0], atol=1e-6)

    def test_blobs_never_dim_their_source(self, scene_cfg):
        for index in range(5):
            truth = synth_scene(scene_cfg, 4, index, force=True).truth
            assert (truth.blob_traces >= truth.rms_traces - 1e-12).all()

    def test_quantize_clips_to_pcm_range(self):
        assert quantize(np.array([2.0, -2.0])).tolist() == [(PCM_SCALE - 1) / PCM_SCALE, -1.0]

    def test_scene_config_validation(self):
        with pytest.raises(ConfigException):
            SceneConfig(min_sources=3, max_sources=2)
        with pytest.raises(ConfigException):
            SceneConfig(families=("speech",))


class TestExamples:
    def test_noisy_example(self, scene_cfg):
        primary, background = synth_scene(scene_cfg, 0, 0), synth_scene(scene_cfg, 0, 1)
        example = make_non_mom(primary, background)
        assert example.kind is ExampleKind.NON
        assert torch.equal(example.clip.frames, primary.clip.frames)
        assert torch.equal(example.input_mixture.samples,
                           primary.soundtrack.samples + background.full_audio.samples)

    def test_single_examples_have_silent_background(self, scene_cfg):
        scene = synth_scene(scene_cfg, 0, 0, force=True)
        example = make_labeled_examples(scene, ExampleKind.LON_SINGLE)
        assert float(example.background_audio.samples.abs().max()) == 0.0
        assert torch.equal(example.input_mixture.samples, example.primary_audio.samples)
        np.testing.assert_array_equal(example.onscreen_reference, example.input_mixture.numpy())

    def test_offscreen_examples_have_no_onscreen_reference(self, scene_cfg):
        scene = synth_scene(scene_cfg, 0, 0, force=False)
        example = make_labeled_examples(scene, ExampleKind.LOFF_MOM, synth_scene(scene_cfg, 0, 1))
        assert not example.onscreen_reference.any()
        np.testing.assert_array_equal(example.offscreen_reference, example.input_mixture.numpy())

    def test_kind_preconditions(self, scene_cfg):
        on_scene = synth_scene(scene_cfg, 0, 0, force=True)
        off_scene = synth_scene(scene_cfg, 0, 1, force=False)
        with pytest.raises(ContractException):
            make_labeled_examples(on_scene, ExampleKind.NON)
        with pytest.raises(ContractException):
            make_labeled_examples(on_scene, ExampleKind.LOFF_SINGLE)
        with pytest.raises(ContractException):
            make_labeled_examples(off_scene, ExampleKind.LON_SINGLE)
        with pytest.raises(ContractException):
            make_labeled_examples(on_scene, ExampleKind.LON_MOM)

    def test_mixture_identity_is_enforced(self, scene_cfg):
        scene = synth_scene(scene_cfg, 0, 0)
        r1 = scene.full_audio
        with pytest.raises(ValidationError):
            MoMExample(example_id="bad", kind=ExampleKind.NON, clip=scene.clip, primary_audio=r1,
                       background_audio=r1, input_mixture=r1)

    @pytest.mark.parametrize("kind", list(ExampleKind), ids=lambda k: k.value)
    def test_make_example(self, scene_cfg, kind):
        example = make_example(scene_cfg, kind, 9, 3)
        assert example.kind is kind
        assert example.example_id == "9-000003"
        if kind.offscreen:
            assert not any(example.primary_truth.on_screen)
        elif kind.labeled:
            assert all(example.primary_truth.on_screen)

    def test_make_example_is_deterministic(self, scene_cfg):
        first = make_example(scene_cfg, ExampleKind.NON, 5, 2)
        second = make_example(scene_cfg, ExampleKind.NON, 5, 2)
        assert torch.equal(first.input_mixture.samples, second.input_mixture.samples)


class TestSampling:
    def test_unsupervised_kinds(self):
        assert sample_kinds(SamplingMode.UNSUPERVISED, 6, 0) == [ExampleKind.NON] * 6

    def test_semi_supervised_proportions(self):
        kinds = Counter(sample_kinds(SamplingMode.SEMI_SUPERVISED, 100000, 0))
        for kind, share in zip(KIND_ORDER, SEMI_SUPERVISED_PROPORTIONS):
            assert abs(kinds[kind] / 100000 - share) < 0.01

    def test_kinds_are_seeded(self):
        first = sample_kinds(SamplingMode.SEMI_SUPERVISED, 50, 11)
        assert first == sample_kinds(SamplingMode.SEMI_SUPERVISED, 50, 11)

    def test_batch_size_must_be_positive(self):
        with pytest.raises(ConfigException):
            sample_kinds(SamplingMode.UNSUPERVISED, 0, 0)

    def test_sample_batch(self, scene_cfg):
        batch = sample_batch(scene_cfg, SamplingMode.SEMI_SUPERVISED, 4, 0)
        assert [e.kind for e in batch] == sample_kinds(SamplingMode.SEMI_SUPERVISED, 4, 0)

    def test_evaluation_set(self, scene_cfg):
        examples = evaluation_set(scene_cfg, 2, 0)
        assert [e.kind for e in examples] == [ExampleKind.NON, ExampleKind.NON,
                                              ExampleKind.LOFF_SINGLE, ExampleKind.LOFF_SINGLE]
        assert len({e.example_id for e in examples}) == 4
        with pytest.raises(ConfigException):
            evaluation_set(scene_cfg, 0, 0)

    def test_collate(self, scene_cfg):
        batch = collate(sample_batch(scene_cfg, SamplingMode.UNSUPERVISED, 3, 0))
        assert batch.mixture.shape == (3, 4000)
        assert batch.frames.shape == (3, 8, 16, 16, 1)
        assert batch.mixture.dtype == torch.float32
        assert batch.kinds == [ExampleKind.NON] * 3
        with pytest.raises(ContractException):
            collate([])

    def test_dataset(self, scene_cfg):
        dataset = SyntheticMoMDataset(scene_cfg, SamplingMode.UNSUPERVISED, 3, 4)
        assert len(dataset) == 3
        assert torch.equal(dataset[1].input_mixture.samples, make_example(scene_cfg, ExampleKind.NON, 4, 1)
                           .input_mixture.samples)
        assert [e.example_id for e in dataset.batch([0, 2])] == ["4-000000", "4-000002"]
        with pytest.raises(IndexError):
            dataset[3]

    def test_fixed_kind_dataset(self, scene_cfg):
        dataset = SyntheticMoMDataset(scene_cfg, SamplingMode.UNSUPERVISED, 2, 0, kind=ExampleKind.LOFF_SINGLE)
        assert all(e.kind is ExampleKind.LOFF_SINGLE for e in dataset.batch([0, 1]))
