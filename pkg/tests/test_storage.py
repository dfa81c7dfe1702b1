import json

import numpy as np
import pytest
import torch

from audioscope.exceptions import CheckpointException, DatasetException
from audioscope.models.audio import ExampleKind
from audioscope.services.data_service import make_example
from audioscope.services.metrics_service import build_record
from audioscope.storage.checkpoint_store import copy_checkpoint, load_checkpoint, restore_module, save_checkpoint
from audioscope.storage.dataset_store import (
    DirectoryDataset,
    read_example,
    read_pgm,
    write_dataset,
    write_example,
    write_pgm,
)
from audioscope.storage.records_store import read_records, write_records


class TestCheckpoints:
    def test_round_trip(self, tmp_path):
        torch.manual_seed(0)
        module = torch.nn.Linear(3, 2)
        path = save_checkpoint(tmp_path / "ckpt" / "model.npz", module.state_dict(), {"step": 7})
        state, meta = load_checkpoint(path)
        assert meta == {"step": 7}
        for name, tensor in module.state_dict().items():
            assert torch.equal(state[name], tensor)

    def test_restore_module(self, tmp_path):
        torch.manual_seed(0)
        source = torch.nn.Linear(3, 2)
        target = torch.nn.Linear(3, 2)
        path = save_checkpoint(tmp_path / "model.npz", source.state_dict(), {"kind": "linear"})
        assert restore_module(target, path) == {"kind": "linear"}
        assert torch.equal(target.weight, source.weight)

    def test_shape_mismatch(self, tmp_path):
        path = save_checkpoint(tmp_path / "model.npz", torch.nn.Linear(3, 2).state_dict())
        with pytest.raises(CheckpointException):
            restore_module(torch.nn.Linear(4, 2), path)

    def test_missing_checkpoint(self, tmp_path):
        with pytest.raises(CheckpointException):
            load_checkpoint(tmp_path / "absent.npz")
        with pytest.raises(CheckpointException):
            copy_checkpoint(tmp_path / "absent.npz", tmp_path / "copy.npz")

    def test_copy_keeps_metadata(self, tmp_path):
        path = save_checkpoint(tmp_path / "step.npz", {"w": torch.ones(2)}, {"step": 3})
        copied = copy_checkpoint(path, tmp_path / "best.npz")
        state, meta = load_checkpoint(copied)
        assert meta == {"step": 3}
        assert torch.equal(state["w"], torch.ones(2))


class TestExampleDirectories:
    def test_pgm_round_trip_is_within_one_level(self, tmp_path, rng):
        frame = rng.uniform(size=(6, 10))
        write_pgm(tmp_path / "f.pgm", frame)
        restored = read_pgm(tmp_path / "f.pgm")
        assert restored.shape == (6, 10)
        assert np.abs(restored - frame).max() <= 0.5 / 255 + 1e-6

    @pytest.mark.parametrize("kind", [ExampleKind.NON, ExampleKind.LON_SINGLE, ExampleKind.LOFF_MOM],
                             ids=lambda k: k.value)
    def test_example_round_trip(self, tmp_path, scene_cfg, kind):
        example = make_example(scene_cfg, kind, 0, 1)
        restored = read_example(write_example(example, tmp_path / "example"))
        assert restored.example_id == example.example_id
        assert restored.kind is kind
        assert torch.equal(restored.input_mixture.samples, example.input_mixture.samples)
        assert torch.equal(restored.primary_audio.samples, example.primary_audio.samples)
        assert torch.equal(restored.background_audio.samples, example.background_audio.samples)
        assert restored.clip.frames.shape == example.clip.frames.shape
        assert float((restored.clip.frames - example.clip.frames).abs().max()) <= 0.5 / 255 + 1e-6
        assert restored.primary_truth.on_screen == example.primary_truth.on_screen
        assert np.array_equal(restored.primary_truth.sources, example.primary_truth.sources)
        np.testing.assert_allclose(restored.primary_truth.rms_traces, example.primary_truth.rms_traces)

    def test_truth_file(self, tmp_path, scene_cfg):
        example = make_example(scene_cfg, ExampleKind.LON_MOM, 0, 0)
        directory = write_example(example, tmp_path / "example")
        truth = json.loads((directory / "truth.json").read_text())
        assert truth["kind"] == "LOn-MoM"
        assert all(truth["primary"]["on_screen"])
        assert (directory / "frames" / "000007.pgm").exists()
        assert (directory / "frames" / "meta.txt").read_text().split() == ["16", "8"]

    def test_directory_dataset(self, tmp_path, scene_cfg):
        examples = [make_example(scene_cfg, ExampleKind.NON, 2, i) for i in range(3)]
        paths = write_dataset(examples, tmp_path / "data")
        assert [p.name for p in paths] == ["example_000000", "example_000001", "example_000002"]
        dataset = DirectoryDataset(tmp_path / "data")
        assert len(dataset) == 3
        assert [e.example_id for e in dataset.batch([0, 2])] == ["2-000000", "2-000002"]

    def test_missing_dataset(self, tmp_path):
        with pytest.raises(DatasetException):
            DirectoryDataset(tmp_path / "absent")
        (tmp_path / "empty").mkdir()
        with pytest.raises(DatasetException):
            DirectoryDataset(tmp_path / "empty")
        with pytest.raises(DatasetException):
            read_example(tmp_path / "empty")


class TestRecords:
    def test_round_trip_is_exact(self, tmp_path, rng, offscreen_record):
        sources = rng.normal(size=(2, 50))
        reference = rng.normal(size=50)
        records = [
            build_record("000017", False, [0.1, -2.3], sources, reference, sources.sum(axis=0), [1, 0]),
            offscreen_record("off", [1.7, 0.2], rng.normal(size=(2, 50))),
        ]
        restored = read_records(write_records(records, tmp_path / "out" / "records.csv"))
        assert [r.model_dump() for r in restored] == [r.model_dump() for r in records]
        assert restored[0].example_id == "000017"
        assert restored[1].snr is None

    def test_missing_records(self, tmp_path):
        with pytest.raises(DatasetException):
            read_records(tmp_path / "absent.csv")
