"""
Services: data synthesis, metrics, calibration, training, evaluation, benchmarking and diagnostics
"""

from .attention_export_service import export_attention, export_maps, weighted_maps
from .benchmark_service import BenchmarkService, block_pairs, flop_model, max_frames, score_pairs
from .calibration_service import CalibrationService, OffscreenSet, calibrate, calibration_service
from .data_service import (
    Batch,
    SyntheticMoMDataset,
    collate,
    evaluation_set,
    make_example,
    make_labeled_examples,
    make_non_mom,
    sample_batch,
    sample_kinds,
    synth_scene,
)
from .evaluation_service import EvaluationService, evaluation_report, evaluation_service, oracle_labels
from .gradient_audit_service import GradientReport, audit, require_passing
from .metrics_service import (
    build_record,
    model_selection_score,
    osr,
    rescore,
    si_snr,
    snr,
    summary,
    weighted_auc,
    weighted_auc_roc,
)
from .training_service import TrainingService, best_assignment_si_snr

__all__ = [
    "Batch",
    "BenchmarkService",
    "block_pairs",
    "CalibrationService",
    "EvaluationService",
    "GradientReport",
    "OffscreenSet",
    "SyntheticMoMDataset",
    "TrainingService",
    "audit",
    "best_assignment_si_snr",
    "build_record",
    "calibrate",
    "calibration_service",
    "collate",
    "evaluation_report",
    "evaluation_set",
    "evaluation_service",
    "export_attention",
    "export_maps",
    "flop_model",
    "make_example",
    "make_labeled_examples",
    "make_non_mom",
    "max_frames",
    "model_selection_score",
    "oracle_labels",
    "osr",
    "require_passing",
    "rescore",
    "sample_batch",
    "sample_kinds",
    "score_pairs",
    "si_snr",
    "snr",
    "summary",
    "synth_scene",
    "weighted_auc",
    "weighted_auc_roc",
    "weighted_maps",
]
