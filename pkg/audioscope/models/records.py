"""
Result Models - assignments, predictions, calibration, evaluation and benchmark records
"""
from enum import Enum
from typing import List, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

from audioscope.models.audio import WaveBuffer
from audioscope.models.configs import AttentionVariant


class MixAssignment(BaseModel):
    matrix: List[List[int]] = Field(..., description="2 x M binary mixing matrix")
    loss: float = Field(..., description="Summed thresholded-SNR loss in dB")
    pseudo_labels: List[int] = Field(..., description="Row-1 indicator per source")
    index: int = Field(..., ge=0, description="Enumeration index of the assignment")

    @model_validator(mode="after")
    def _columns_sum_to_one(self) -> "MixAssignment":
        if len(self.matrix) != 2:
            raise ValueError("Mixing matrix must have two rows")
        for m, (top, bottom) in enumerate(zip(*self.matrix)):
            if top + bottom != 1:
                raise ValueError(f"Column {m} does not sum to one")
        if self.pseudo_labels != list(self.matrix[0]):
            raise ValueError("Pseudo-labels must equal the first row")
        return self


class OnScreenPrediction(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    logits: List[float] = Field(..., description="Per-source logits")
    probs: List[float] = Field(..., description="sigmoid(logit + theta)")
    mixdown: WaveBuffer = Field(..., description="Probability-weighted on-screen estimate")
    theta: float = Field(default=0.0, description="Calibration offset")


class CalibrationResult(BaseModel):
    theta: float
    achieved_median_osr: float
    target_osr: float
    iterations: int = Field(..., ge=0)
    converged: bool


class RecordKind(str, Enum):
    ON_SCREEN = "on-screen"
    OFF_SCREEN = "off-screen"


class EvalRecord(BaseModel):
    """
    Per-example evaluation result.

    Besides the metrics, a record keeps the sufficient statistics of the separated
    sources (Gram matrix, cross terms with the on-screen reference, powers) so the
    metrics can be recomputed for any calibration offset without the waveforms.
    """
    example_id: str
    kind: RecordKind
    snr: Optional[float] = Field(default=None, description="On-screen SNR in dB")
    si_snr: Optional[float] = Field(default=None, description="On-screen SI-SNR in dB")
    osr: Optional[float] = Field(default=None, description="Off-screen suppression ratio in dB")
    logits: List[float]
    probs: List[float]
    powers: List[float] = Field(..., description="Per-source energy")
    labels: List[int] = Field(..., description="Oracle on-screen label per source")
    gram: List[float] = Field(..., description="Row-major M x M source Gram matrix")
    mixture_power: float
    reference_power: float = Field(default=0.0, description="Energy of the on-screen reference")
    reference_cross: List[float] = Field(default_factory=list, description="Inner products with the on-screen reference")

    @model_validator(mode="after")
    def _metrics_match_kind(self) -> "EvalRecord":
        if self.kind is RecordKind.ON_SCREEN and (self.snr is None or self.osr is not None):
            raise ValueError(f"On-screen record {self.example_id} needs snr and no osr")
        if self.kind is RecordKind.OFF_SCREEN and (self.osr is None or self.snr is not None or self.si_snr is not None):
            raise ValueError(f"Off-screen record {self.example_id} needs osr only")
        m = len(self.logits)
        if not (len(self.probs) == len(self.powers) == len(self.labels) == m and len(self.gram) == m * m):
            raise ValueError(f"Record {self.example_id} has inconsistent per-source fields")
        return self

    @property
    def num_sources(self) -> int:
        return len(self.logits)


class BenchPoint(BaseModel):
    variant: AttentionVariant
    frames: int = Field(..., ge=1, description="T")
    wall_time: Optional[float] = Field(default=None, gt=0, description="Median forward seconds")
    peak_memory: Optional[int] = Field(default=None, ge=0, description="Peak allocation in bytes")
    flop_estimate: int = Field(..., ge=0)
    repeats: int = Field(..., ge=5)
    oom: bool = False


class CheckpointInfo(BaseModel):
    step: int = Field(..., ge=0)
    path: str
    score: Optional[float] = Field(default=None, description="Model-selection score on validation")
    records_path: Optional[str] = None
