"""
Metrics Service - SNR, SI-SNR, OSR, weighted AUC-ROC, evaluation records and reports

All ratio metrics are in dB and capped to [-100, +100] so silent signals order
totally instead of raising. Evaluation records keep the sufficient statistics of
the separated sources, so every metric can be recomputed for any calibration
offset theta without the waveforms.
"""
import logging
from typing import Dict, Iterable, List, Optional, Sequence, Union

import numpy as np
import torch
from sklearn.metrics import roc_auc_score

from audioscope.exceptions import ContractException, DegenerateLabelsException, DimensionException
from audioscope.models.audio import WaveBuffer
from audioscope.models.records import EvalRecord, RecordKind

logger = logging.getLogger(__name__)

METRIC_CAP_DB = 100.0

Signal = Union[WaveBuffer, np.ndarray, Sequence[float]]


def _array(x: Signal) -> np.ndarray:
    if isinstance(x, WaveBuffer):
        return x.numpy()
    if isinstance(x, torch.Tensor):
        return x.detach().cpu().numpy().astype(np.float64)
    return np.asarray(x, dtype=np.float64)


def _pair(ref: Signal, est: Signal):
    ref, est = _array(ref), _array(est)
    if ref.shape != est.shape:
        raise DimensionException(f"Signals differ in shape: {ref.shape} vs {est.shape}")
    return ref, est


def capped_db(numerator, denominator, both_zero: float = METRIC_CAP_DB) -> np.ndarray:
    """
    10 log10(numerator / denominator) for powers, capped to +-100 dB.

    A zero denominator gives +100, a zero numerator -100, and 0/0 gives `both_zero`.
    """
    num = np.maximum(np.asarray(numerator, dtype=np.float64), 0.0)
    den = np.maximum(np.asarray(denominator, dtype=np.float64), 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = 10.0 * np.log10(num / den)
    ratio = np.where((num == 0) & (den == 0), both_zero, ratio)
    return np.clip(np.nan_to_num(ratio, nan=both_zero, posinf=METRIC_CAP_DB, neginf=-METRIC_CAP_DB),
                   -METRIC_CAP_DB, METRIC_CAP_DB)


def snr(ref: Signal, est: Signal) -> float:
    """20 log10(|ref| / |ref - est|)"""
    ref, est = _pair(ref, est)
    return float(capped_db(np.dot(ref, ref), np.sum((ref - est) ** 2)))


def osr(x: Signal, on_estimate: Signal) -> float:
    """Off-screen suppression ratio 20 log10(|x| / |x_on|); 0 dB when both are silent"""
    x, on_estimate = _pair(x, on_estimate)
    return float(capped_db(np.dot(x, x), np.dot(on_estimate, on_estimate), both_zero=0.0))


def si_snr(ref: Signal, est: Signal) -> float:
    """Scale-invariant SNR: the estimate is compared with its projection onto ref"""
    ref, est = _pair(ref, est)
    ref_power = np.dot(ref, ref)
    alpha = np.dot(ref, est) / ref_power if ref_power > 0 else 0.0
    target = alpha * ref
    return float(capped_db(np.dot(target, target), np.sum((target - est) ** 2)))


def lower_median(values: Iterable[float]) -> float:
    """Median taking the lower middle element for even counts"""
    ordered = sorted(values)
    if not ordered:
        raise ContractException("Median of an empty set")
    return float(ordered[(len(ordered) - 1) // 2])


def sigmoid(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return np.exp(-np.logaddexp(0.0, -x))


# ==================== AUC ====================

def weighted_auc(labels: Sequence[int], scores: Sequence[float], weights: Optional[Sequence[float]] = None) -> float:
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size == 0 or labels.min() == labels.max():
        raise DegenerateLabelsException(details={"count": int(labels.size)})
    return float(roc_auc_score(labels, np.asarray(scores, dtype=np.float64), sample_weight=weights))


def weighted_auc_roc(records: Sequence[EvalRecord]) -> float:
    """
    ROC area of the on-screen probabilities against the oracle labels, each source
    weighted by its share of its example's estimated power.
    """
    labels, scores, weights = [], [], []
    for record in records:
        powers = np.asarray(record.powers, dtype=np.float64)
        total = powers.sum()
        share = powers / total if total > 0 else np.zeros_like(powers)
        labels.extend(record.labels)
        scores.extend(record.probs)
        weights.extend(share.tolist())
    return weighted_auc(labels, scores, weights)


# ==================== Evaluation Records ====================

def source_statistics(sources: np.ndarray, reference: np.ndarray) -> Dict[str, object]:
    """Gram matrix, powers and reference cross terms of M x T' estimates"""
    sources = np.asarray(sources, dtype=np.float64)
    reference = np.asarray(reference, dtype=np.float64)
    if sources.ndim != 2 or sources.shape[1] != reference.shape[0]:
        raise DimensionException(f"Sources {sources.shape} do not match reference length {reference.shape}")
    gram = sources @ sources.T
    return {
        "gram": gram,
        "powers": np.diag(gram).copy(),
        "cross": sources @ reference,
        "reference_power": float(reference @ reference),
    }


def _weighted_metrics(record: EvalRecord, weights: np.ndarray) -> Dict[str, Optional[float]]:
    m = record.num_sources
    gram = np.asarray(record.gram, dtype=np.float64).reshape(m, m)
    estimate_power = float(weights @ gram @ weights)
    if record.kind is RecordKind.OFF_SCREEN:
        return {"snr": None, "si_snr": None, "osr": float(capped_db(record.mixture_power, estimate_power, 0.0))}

    cross = float(weights @ np.asarray(record.reference_cross, dtype=np.float64))
    ref_power = record.reference_power
    error_power = max(ref_power - 2.0 * cross + estimate_power, 0.0)
    projected = cross ** 2 / ref_power if ref_power > 0 else 0.0
    return {
        "snr": float(capped_db(ref_power, error_power)),
        "si_snr": float(capped_db(projected, max(estimate_power - projected, 0.0))),
        "osr": None,
    }


def build_record(
    example_id: str,
    offscreen: bool,
    logits: Sequence[float],
    sources: np.ndarray,
    reference: np.ndarray,
    mixture: np.ndarray,
    labels: Sequence[int],
) -> EvalRecord:
    """
    Evaluation record of one example at theta = 0.

    Args:
        example_id: Identifier
        offscreen: True when the input holds no on-screen audio
        logits: Per-source classifier logits
        sources: M x T' separated estimates
        reference: On-screen reference (zeros for off-screen examples)
        mixture: Input mixture
        labels: Oracle on-screen label per source
    """
    stats = source_statistics(sources, reference)
    mixture = np.asarray(mixture, dtype=np.float64)
    logits = [float(v) for v in logits]
    record = EvalRecord(
        example_id=example_id,
        kind=RecordKind.OFF_SCREEN if offscreen else RecordKind.ON_SCREEN,
        snr=None if offscreen else 0.0,
        osr=0.0 if offscreen else None,
        logits=logits,
        probs=sigmoid(np.asarray(logits)).tolist(),
        powers=stats["powers"].tolist(),
        labels=[int(v) for v in labels],
        gram=stats["gram"].reshape(-1).tolist(),
        mixture_power=float(mixture @ mixture),
        reference_power=0.0 if offscreen else stats["reference_power"],
        reference_cross=[] if offscreen else stats["cross"].tolist(),
    )
    return rescore([record], 0.0)[0]


def rescore(records: Sequence[EvalRecord], theta: float) -> List[EvalRecord]:
    """Recompute probabilities and metrics for the mixdown at offset theta"""
    rescored = []
    for record in records:
        probs = sigmoid(np.asarray(record.logits) + theta)
        update = {"probs": probs.tolist(), **_weighted_metrics(record, probs)}
        rescored.append(record.model_copy(update=update))
    return rescored


def score_with_weights(records: Sequence[EvalRecord], weights_fn) -> List[Dict[str, Optional[float]]]:
    """Metrics of fixed-weight mixdowns, e.g. the mixture itself or an oracle selection"""
    return [_weighted_metrics(r, np.asarray(weights_fn(r), dtype=np.float64)) for r in records]


# ==================== Summaries ====================

def _split(records: Sequence[EvalRecord]):
    on = [r for r in records if r.kind is RecordKind.ON_SCREEN]
    off = [r for r in records if r.kind is RecordKind.OFF_SCREEN]
    return on, off


def summarize(rows: Sequence[Dict[str, Optional[float]]]) -> Dict[str, Optional[float]]:
    snrs = [r["snr"] for r in rows if r["snr"] is not None]
    si_snrs = [r["si_snr"] for r in rows if r["si_snr"] is not None]
    osrs = [r["osr"] for r in rows if r["osr"] is not None]
    return {
        "median_snr": lower_median(snrs) if snrs else None,
        "mean_snr": float(np.mean(snrs)) if snrs else None,
        "median_si_snr": lower_median(si_snrs) if si_snrs else None,
        "median_osr": lower_median(osrs) if osrs else None,
    }


def record_rows(records: Sequence[EvalRecord]) -> List[Dict[str, Optional[float]]]:
    return [{"snr": r.snr, "si_snr": r.si_snr, "osr": r.osr} for r in records]


def model_selection_score(records: Sequence[EvalRecord]) -> float:
    """min(median on-screen SNR, median off-screen OSR)"""
    on, off = _split(records)
    if not on or not off:
        raise ContractException(
            f"Model selection needs on- and off-screen records, got {len(on)} and {len(off)}"
        )
    return min(lower_median(r.snr for r in on), lower_median(r.osr for r in off))


def summary(records: Sequence[EvalRecord], theta: float = 0.0) -> Dict[str, Optional[float]]:
    """Headline numbers of a record set already scored at theta"""
    result = summarize(record_rows(records))
    try:
        result["auc"] = weighted_auc_roc(records)
    except DegenerateLabelsException:
        logger.warning("AUC undefined: oracle labels hold a single class")
        result["auc"] = None
    result["theta"] = theta
    return result

