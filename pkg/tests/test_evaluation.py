import numpy as np
import pytest
import torch

from audioscope.exceptions import ContractException, DimensionException
from audioscope.models.configs import AttentionConfig, AttentionVariant
from audioscope.models.records import RecordKind
from audioscope.networks.attention import build_encoder
from audioscope.numerics.tensor import Axis, FeatureTensor
from audioscope.services.attention_export_service import export_attention, export_maps, weighted_maps
from audioscope.services.data_service import evaluation_set
from audioscope.services.evaluation_service import EvaluationService, oracle_labels
from audioscope.services.metrics_service import METRIC_CAP_DB, build_record, snr


@pytest.fixture
def synthetic_records(rng, offscreen_record):
    """Two on-screen records with sources (reference, other) and two off-screen ones"""
    records = []
    for i in range(2):
        ref, other = rng.normal(size=64), 0.5 * rng.normal(size=64)
        records.append(build_record(f"on-{i}", False, [1.0, -1.0], np.stack([ref, other]), ref, ref + other,
                                    [1, 0]))
    for i in range(2):
        records.append(offscreen_record(f"off-{i}", [-1.0, 0.5], rng.normal(size=(2, 64))))
    return records


class TestEvaluate:
    def test_one_record_per_example(self, tiny_model, scene_cfg):
        examples = evaluation_set(scene_cfg, 2, 0)
        tiny_model.train()
        records = EvaluationService(chunk_size=3).evaluate(tiny_model, examples)
        assert tiny_model.training
        assert [r.example_id for r in records] == [e.example_id for e in examples]
        assert [r.kind for r in records] == [RecordKind.ON_SCREEN] * 2 + [RecordKind.OFF_SCREEN] * 2
        for record in records:
            assert record.num_sources == 2
            assert len(record.gram) == 4
        for record in records[2:]:
            assert record.labels == [0, 0]
            assert record.snr is None and record.osr is not None

    def test_evaluation_is_deterministic(self, tiny_model, scene_cfg):
        examples = evaluation_set(scene_cfg, 1, 4)
        service = EvaluationService()
        first = service.evaluate(tiny_model, examples)
        second = service.evaluate(tiny_model, examples)
        assert [r.model_dump() for r in first] == [r.model_dump() for r in second]

    def test_oracle_labels(self, scene_cfg):
        on, off = evaluation_set(scene_cfg, 1, 9)
        sources = np.stack([on.onscreen_reference, on.offscreen_reference])
        assert oracle_labels(on, sources, 1e-3) == [1, 0]
        assert oracle_labels(on, sources[::-1].copy(), 1e-3) == [0, 1]
        assert oracle_labels(off, np.stack([off.input_mixture.numpy()] * 2), 1e-3) == [0, 0]


class TestReport:
    def test_sections(self, synthetic_records):
        report = EvaluationService().report(synthetic_records, [6.0, 10.0])
        assert set(report) == {"uncalibrated", "calibrated", "baselines", "oracle"}
        assert report["uncalibrated"]["theta"] == 0.0
        assert [row["target_osr"] for row in report["calibrated"]] == [6.0, 10.0]
        for row in report["calibrated"]:
            assert row["converged"]
            assert abs(row["achieved_median_osr"] - row["target_osr"]) <= 0.01

    def test_baselines(self, synthetic_records):
        baselines = EvaluationService().report(synthetic_records, [])["baselines"]
        assert baselines["mixture"]["median_osr"] == pytest.approx(0.0, abs=1e-9)
        assert baselines["half_mixture"]["median_osr"] == pytest.approx(20 * np.log10(2), abs=1e-9)
        assert baselines["mixture"]["median_snr"] is not None

    def test_mixture_baseline_snr(self, rng):
        ref, other = rng.normal(size=64), rng.normal(size=64)
        record = build_record("on", False, [0.0, 0.0], np.stack([ref, other]), ref, ref + other, [1, 0])
        baselines = EvaluationService().report([record], [])["baselines"]
        assert baselines["mixture"]["median_snr"] == pytest.approx(snr(ref, ref + other), abs=1e-9)

    def test_oracle_selects_the_reference(self, synthetic_records):
        oracle = EvaluationService().report(synthetic_records, [])["oracle"]
        assert oracle["median_snr"] == METRIC_CAP_DB
        assert oracle["median_osr"] == METRIC_CAP_DB


class TestAttentionExport:
    @pytest.fixture
    def uniform_map(self):
        torch.manual_seed(0)
        cfg = AttentionConfig(num_heads=1, depth=8, num_blocks=1, dropout_rate=0.0,
                              variant=AttentionVariant.JOINT_CMA)
        encoder = build_encoder(cfg).double().eval()
        with torch.no_grad():
            for p in encoder.map_source().attention.key.parameters():
                p.zero_()
        generator = torch.Generator().manual_seed(0)
        z_a = FeatureTensor(torch.randn(2, 3, 8, generator=generator, dtype=torch.float64),
                            (Axis.SRC, Axis.TIME, Axis.DEPTH))
        z_v = FeatureTensor(torch.randn(4, 3, 8, generator=generator, dtype=torch.float64),
                            (Axis.SPACE, Axis.TIME, Axis.DEPTH))
        encoder.capture_maps()
        encoder(z_a, z_v)
        return encoder.attention_map(2)

    def test_maps_are_scaled_by_probabilities(self, uniform_map):
        maps = weighted_maps(uniform_map, [1.0, 0.2])
        assert maps.shape == (3, 2, 2, 2)
        np.testing.assert_allclose(maps[:, 0], 0.25, atol=1e-12)
        np.testing.assert_allclose(maps[:, 1], 0.05, atol=1e-12)

    def test_needs_probabilities(self, uniform_map):
        with pytest.raises(ContractException):
            weighted_maps(uniform_map, None)
        with pytest.raises(DimensionException):
            weighted_maps(uniform_map, [0.5, 0.5, 0.5])

    def test_export_file_names(self, tmp_path, uniform_map):
        maps = weighted_maps(uniform_map, [1.0, 0.5])
        paths = export_maps(maps, tmp_path / "maps")
        assert sorted(p.name for p in paths) == sorted(f"attn_f{t}_s{m}.csv" for t in range(3) for m in range(2))
        grid = np.loadtxt(tmp_path / "maps" / "attn_f1_s1.csv", delimiter=",")
        np.testing.assert_allclose(grid, 0.125, rtol=1e-7)

    def test_export_from_model(self, tmp_path, tiny_model, scene_cfg):
        example = evaluation_set(scene_cfg, 1, 0)[0]
        paths = export_attention(tiny_model, example, tmp_path)
        assert len(paths) == 8 * 2
        for path in paths:
            grid = np.loadtxt(path, delimiter=",")
            assert grid.shape == (2, 2)
            assert (grid >= 0).all()
        assert tiny_model.training
