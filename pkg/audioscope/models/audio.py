"""
Data Models for waveforms, video clips and mixture-of-mixtures examples
"""
from enum import Enum
from typing import Any, Dict, List, Optional

import numpy as np
import torch
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from audioscope.exceptions import DimensionException


class ExampleKind(str, Enum):
    NON = "NOn"
    LON_SINGLE = "LOn-single"
    LON_MOM = "LOn-MoM"
    LOFF_SINGLE = "LOff-single"
    LOFF_MOM = "LOff-MoM"

    @property
    def labeled(self) -> bool:
        return self is not ExampleKind.NON

    @property
    def offscreen(self) -> bool:
        return self in (ExampleKind.LOFF_SINGLE, ExampleKind.LOFF_MOM)


class WaveBuffer(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    samples: torch.Tensor = Field(..., description="1-D waveform of length T'")
    sample_rate: int = Field(..., gt=0, description="Sample rate in Hz")

    @field_validator("samples")
    @classmethod
    def _finite_vector(cls, samples: torch.Tensor) -> torch.Tensor:
        if samples.dim() != 1 or samples.numel() == 0:
            raise ValueError(f"Waveform must be a non-empty vector, got shape {tuple(samples.shape)}")
        if not bool(torch.isfinite(samples).all()):
            raise ValueError("Waveform contains non-finite samples")
        return samples

    @classmethod
    def from_numpy(cls, samples: np.ndarray, sample_rate: int) -> "WaveBuffer":
        return cls(samples=torch.from_numpy(np.ascontiguousarray(samples, dtype=np.float64)), sample_rate=sample_rate)

    @classmethod
    def silence(cls, length: int, sample_rate: int) -> "WaveBuffer":
        return cls(samples=torch.zeros(length, dtype=torch.float64), sample_rate=sample_rate)

    @property
    def length(self) -> int:
        return self.samples.numel()

    def numpy(self) -> np.ndarray:
        return self.samples.detach().cpu().numpy().astype(np.float64)


class SourceEstimates(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    sources: torch.Tensor = Field(..., description="M x T' separated waveforms")
    sample_rate: int = Field(..., gt=0)

    @field_validator("sources")
    @classmethod
    def _matrix(cls, sources: torch.Tensor) -> torch.Tensor:
        if sources.dim() != 2:
            raise ValueError(f"Sources must be M x T', got shape {tuple(sources.shape)}")
        return sources

    @property
    def num_sources(self) -> int:
        return self.sources.shape[0]

    @property
    def length(self) -> int:
        return self.sources.shape[1]

    def source(self, m: int) -> WaveBuffer:
        return WaveBuffer(samples=self.sources[m], sample_rate=self.sample_rate)


class VideoClip(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    frames: torch.Tensor = Field(..., description="T x H x W x C pixels in [0, 1]")
    fps: int = Field(..., gt=0)

    @field_validator("frames")
    @classmethod
    def _pixel_range(cls, frames: torch.Tensor) -> torch.Tensor:
        if frames.dim() != 4 or frames.shape[0] < 1:
            raise ValueError(f"Frames must be T x H x W x C with T >= 1, got {tuple(frames.shape)}")
        if bool((frames < 0).any()) or bool((frames > 1).any()):
            raise ValueError("Pixel values must lie in [0, 1]")
        return frames

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]


class SceneTruth(BaseModel):
    """Ground truth of one synthetic scene"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    sources: np.ndarray = Field(..., description="K x T' source waveforms")
    on_screen: List[bool] = Field(..., description="Per-source on-screen flag")
    families: List[str] = Field(..., description="Per-source signal family")
    rms_traces: np.ndarray = Field(..., description="K x T per-frame RMS of each source")
    blob_traces: np.ndarray = Field(..., description="K x T rendered blob peak intensity (0 for off-screen)")
    centers: np.ndarray = Field(..., description="K x T x 2 blob centre pixel (row, col)")

    @property
    def on_audio(self) -> np.ndarray:
        mask = np.asarray(self.on_screen, dtype=bool)
        return self.sources[mask].sum(axis=0) if mask.any() else np.zeros(self.sources.shape[1])

    @property
    def off_audio(self) -> np.ndarray:
        mask = ~np.asarray(self.on_screen, dtype=bool)
        return self.sources[mask].sum(axis=0) if mask.any() else np.zeros(self.sources.shape[1])

    def to_json(self) -> Dict[str, Any]:
        return {
            "on_screen": list(self.on_screen),
            "families": list(self.families),
            "rms_traces": self.rms_traces.tolist(),
            "blob_traces": self.blob_traces.tolist(),
            "centers": self.centers.tolist(),
        }


class SceneBundle(BaseModel):
    """One rendered synthetic scene"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    clip: VideoClip
    soundtrack: WaveBuffer = Field(..., description="Sum of the ON sources plus the noise floor")
    offscreen_audio: WaveBuffer = Field(..., description="Sum of the OFF sources")
    truth: SceneTruth

    @property
    def full_audio(self) -> WaveBuffer:
        """Everything audible in the clip"""
        return WaveBuffer(samples=self.soundtrack.samples + self.offscreen_audio.samples,
                          sample_rate=self.soundtrack.sample_rate)


class MoMExample(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    example_id: str = Field(..., description="Stable identifier")
    kind: ExampleKind
    clip: VideoClip
    primary_audio: WaveBuffer = Field(..., description="Reference r1, carries the on-screen audio")
    background_audio: WaveBuffer = Field(..., description="Reference r2, may be silent")
    input_mixture: WaveBuffer = Field(..., description="x = r1 + r2")
    primary_truth: Optional[SceneTruth] = None
    background_truth: Optional[SceneTruth] = None

    @model_validator(mode="after")
    def _mixture_identity(self) -> "MoMExample":
        if not (self.primary_audio.length == self.background_audio.length == self.input_mixture.length):
            raise DimensionException("Reference and mixture lengths differ", details={"example_id": self.example_id})
        if not torch.equal(self.primary_audio.samples + self.background_audio.samples, self.input_mixture.samples):
            raise ValueError(f"Mixture of {self.example_id} is not r1 + r2")
        if self.kind.offscreen and self.primary_truth is not None and any(self.primary_truth.on_screen):
            raise ValueError(f"{self.kind.value} example {self.example_id} carries on-screen sources")
        if self.kind in (ExampleKind.LON_SINGLE, ExampleKind.LON_MOM) and self.primary_truth is not None:
            if not all(self.primary_truth.on_screen):
                raise ValueError(f"{self.kind.value} example {self.example_id} carries off-screen sources")
        return self

    @property
    def onscreen_reference(self) -> np.ndarray:
        """Audio attributable to visible objects"""
        if self.kind.offscreen:
            return np.zeros(self.input_mixture.length)
        if self.primary_truth is None:
            return self.primary_audio.numpy()
        return self.primary_truth.on_audio

    @property
    def offscreen_reference(self) -> np.ndarray:
        return self.input_mixture.numpy() - self.onscreen_reference
