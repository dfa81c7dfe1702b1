"""
Evaluation Service - runs the model over examples and builds evaluation records and reports
"""
import logging
from typing import Dict, List, Sequence

import numpy as np
import torch

from audioscope.models.audio import MoMExample
from audioscope.models.records import EvalRecord
from audioscope.networks.losses import mixit_loss
from audioscope.networks.model import AudioVisualModel
from audioscope.services.calibration_service import calibration_service
from audioscope.services.data_service import collate
from audioscope.services.metrics_service import build_record, rescore, score_with_weights, summarize, summary

logger = logging.getLogger(__name__)

DEFAULT_CHUNK = 8


def oracle_labels(example: MoMExample, sources: np.ndarray, tau: float) -> List[int]:
    """
    On-screen label per source from the best assignment against the
    (on-screen, off-screen) references; all zeros for off-screen inputs.
    """
    if example.kind.offscreen:
        return [0] * sources.shape[0]
    on = torch.from_numpy(example.onscreen_reference)
    off = torch.from_numpy(example.offscreen_reference)
    return mixit_loss(on, off, torch.from_numpy(sources), tau).pseudo_labels


class EvaluationService:
    """Forward passes in eval mode; one EvalRecord per example"""

    def __init__(self, tau: float = 1e-3, chunk_size: int = DEFAULT_CHUNK):
        self.tau = tau
        self.chunk_size = chunk_size

    def evaluate(self, model: AudioVisualModel, examples: Sequence[MoMExample]) -> List[EvalRecord]:
        dtype = next(model.parameters()).dtype
        was_training = model.training
        model.eval()
        records = []
        try:
            with torch.no_grad():
                for start in range(0, len(examples), self.chunk_size):
                    chunk = examples[start:start + self.chunk_size]
                    batch = collate(chunk, dtype)
                    out = model(batch.mixture, batch.frames)
                    sources = out.sources.double().cpu().numpy()
                    logits = out.logits.double().cpu().numpy()
                    for i, example in enumerate(chunk):
                        records.append(build_record(
                            example_id=example.example_id,
                            offscreen=example.kind.offscreen,
                            logits=logits[i].tolist(),
                            sources=sources[i],
                            reference=example.onscreen_reference,
                            mixture=example.input_mixture.numpy(),
                            labels=oracle_labels(example, sources[i], self.tau),
                        ))
        finally:
            model.train(was_training)
        logger.info(f"Evaluated {len(records)} examples")
        return records

    def report(self, records: Sequence[EvalRecord], targets: Sequence[float]) -> Dict[str, object]:
        """
        Uncalibrated metrics, one calibrated row per OSR target, the no-processing
        baselines (x and x/2 as the on-screen estimate) and the oracle selection.
        """
        report: Dict[str, object] = {"uncalibrated": summary(rescore(records, 0.0), 0.0)}

        calibrated = []
        for target in targets:
            result = calibration_service.calibrate(records, target)
            row = summary(rescore(records, result.theta), result.theta)
            row.update({
                "target_osr": target,
                "achieved_median_osr": result.achieved_median_osr,
                "converged": result.converged,
            })
            calibrated.append(row)
        report["calibrated"] = calibrated

        report["baselines"] = {
            "mixture": summarize(score_with_weights(records, lambda r: np.ones(r.num_sources))),
            "half_mixture": summarize(score_with_weights(records, lambda r: np.full(r.num_sources, 0.5))),
        }
        report["oracle"] = summarize(score_with_weights(records, lambda r: r.labels))
        logger.info(f"Evaluation report over {len(records)} records, {len(targets)} calibration targets")
        return report


evaluation_service = EvaluationService()


def evaluation_report(records: Sequence[EvalRecord], targets: Sequence[float]) -> Dict[str, object]:
    return evaluation_service.report(records, targets)
