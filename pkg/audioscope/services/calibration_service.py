"""
Calibration Service - binary search for the logit offset that hits a target median OSR
"""
import logging
from typing import Sequence

import numpy as np

from audioscope.exceptions import ContractException, ValidationException
from audioscope.models.records import CalibrationResult, EvalRecord, RecordKind
from audioscope.services.metrics_service import METRIC_CAP_DB, capped_db, lower_median, sigmoid

logger = logging.getLogger(__name__)

THETA_BOUND = 30.0
OSR_TOLERANCE_DB = 0.01
MAX_ITERATIONS = 100


class OffscreenSet:
    """
    Stacked sufficient statistics of off-screen records.

    The OSR of every example at offset theta is evaluated in one vectorized pass:
    |x_on(theta)|^2 = w^T G w with w = sigmoid(logits + theta).
    """

    def __init__(self, records: Sequence[EvalRecord]):
        records = [r for r in records if r.kind is RecordKind.OFF_SCREEN]
        if not records:
            raise ContractException("Calibration needs at least one off-screen record")
        sizes = {r.num_sources for r in records}
        if len(sizes) != 1:
            raise ContractException(f"Off-screen records mix source counts {sorted(sizes)}")
        m = sizes.pop()
        self.logits = np.array([r.logits for r in records], dtype=np.float64)
        self.grams = np.array([r.gram for r in records], dtype=np.float64).reshape(-1, m, m)
        self.mixture_powers = np.array([r.mixture_power for r in records], dtype=np.float64)

    def __len__(self) -> int:
        return self.logits.shape[0]

    def osr(self, theta: float) -> np.ndarray:
        weights = sigmoid(self.logits + theta)
        estimate_powers = np.einsum("nm,nmk,nk->n", weights, self.grams, weights)
        return capped_db(self.mixture_powers, estimate_powers, both_zero=0.0)

    def median_osr(self, theta: float) -> float:
        return lower_median(self.osr(theta).tolist())


class CalibrationService:
    """
    Finds theta such that the median OSR over off-screen examples equals a target.

    Median OSR is nonincreasing in theta, so the search keeps `lo` on the side
    whose OSR exceeds the target.
    """

    def __init__(self, bound: float = THETA_BOUND, tolerance: float = OSR_TOLERANCE_DB,
                 max_iterations: int = MAX_ITERATIONS):
        self.bound = bound
        self.tolerance = tolerance
        self.max_iterations = max_iterations

    def calibrate(self, records: Sequence[EvalRecord], target_osr: float) -> CalibrationResult:
        """
        Args:
            records: Evaluation records; only off-screen ones are used
            target_osr: Desired median OSR in dB

        Returns:
            CalibrationResult; a target outside the attainable range returns the
            nearer bound with converged=False
        """
        if not np.isfinite(target_osr):
            raise ValidationException(f"Target OSR must be finite, got {target_osr}", field="target_osr")
        offscreen = OffscreenSet(records)
        lo, hi = -self.bound, self.bound
        osr_lo, osr_hi = offscreen.median_osr(lo), offscreen.median_osr(hi)

        if target_osr >= osr_lo or target_osr <= osr_hi:
            theta, achieved = (lo, osr_lo) if target_osr >= osr_lo else (hi, osr_hi)
            # A capped median is saturated, not measured
            converged = abs(achieved - target_osr) <= self.tolerance and abs(achieved) < METRIC_CAP_DB
            if not converged:
                logger.warning(
                    f"Target OSR {target_osr} dB outside attainable range [{osr_hi:.2f}, {osr_lo:.2f}] dB"
                )
            return CalibrationResult(theta=theta, achieved_median_osr=achieved, target_osr=target_osr,
                                     iterations=0, converged=converged)

        theta, achieved = 0.0, osr_lo
        for iteration in range(1, self.max_iterations + 1):
            theta = 0.5 * (lo + hi)
            achieved = offscreen.median_osr(theta)
            if abs(achieved - target_osr) <= self.tolerance:
                logger.info(
                    f"Calibrated theta={theta:.4f} for target {target_osr} dB over "
                    f"{len(offscreen)} off-screen examples in {iteration} iterations"
                )
                return CalibrationResult(theta=theta, achieved_median_osr=achieved, target_osr=target_osr,
                                         iterations=iteration, converged=True)
            if achieved > target_osr:
                lo = theta
            else:
                hi = theta

        logger.warning(f"Calibration for {target_osr} dB stopped after {self.max_iterations} iterations")
        return CalibrationResult(theta=theta, achieved_median_osr=achieved, target_osr=target_osr,
                                 iterations=self.max_iterations, converged=False)


calibration_service = CalibrationService()


def calibrate(records: Sequence[EvalRecord], target_osr: float) -> CalibrationResult:
    return calibration_service.calibrate(records, target_osr)
