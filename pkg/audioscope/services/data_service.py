"""
Data Service - synthetic audio-visual scenes and mixture-of-mixtures examples

A scene holds 1-3 sounds with piecewise-constant amplitude envelopes. Every
on-screen sound is drawn as a moving Gaussian blob whose peak brightness in each
frame equals the sound's RMS over that frame, so the video carries exact
synchronization cues. Off-screen sounds have no visual correlate.
"""
import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np
import torch

from audioscope.exceptions import ConfigException, ContractException, DimensionException
from audioscope.models.audio import ExampleKind, MoMExample, SceneBundle, SceneTruth, VideoClip, WaveBuffer
from audioscope.models.configs import SamplingMode, SceneConfig

logger = logging.getLogger(__name__)

PCM_SCALE = 32768.0
MAX_ON_SCREEN = 4

KIND_ORDER = (
    ExampleKind.NON,
    ExampleKind.LON_SINGLE,
    ExampleKind.LON_MOM,
    ExampleKind.LOFF_SINGLE,
    ExampleKind.LOFF_MOM,
)
SEMI_SUPERVISED_PROPORTIONS = (0.5, 0.125, 0.125, 0.125, 0.125)


def _rng(seed: int, *stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, *stream]))


def quantize(x: np.ndarray) -> np.ndarray:
    """Snap to the 16-bit PCM grid so sums and WAV round trips are exact"""
    return np.clip(np.round(x * PCM_SCALE), -PCM_SCALE, PCM_SCALE - 1) / PCM_SCALE


# ==================== Sources ====================

def _envelope(rng: np.random.Generator, num_frames: int) -> np.ndarray:
    """Per-frame amplitude: segments of 2-6 frames, silent with probability 0.3"""
    levels = np.zeros(num_frames)
    start = 0
    while start < num_frames:
        length = int(rng.integers(2, 7))
        level = 0.0 if rng.random() < 0.3 else float(rng.uniform(0.3, 1.0))
        levels[start:start + length] = level
        start += length
    if not levels.any():
        levels[: min(4, num_frames)] = 1.0
    return levels


def _carrier(rng: np.random.Generator, family: str, num_samples: int, sample_rate: int) -> np.ndarray:
    t = np.arange(num_samples) / sample_rate
    if family == "tone":
        freq = rng.uniform(200.0, 1500.0)
        return np.sqrt(2.0) * np.sin(2 * np.pi * freq * t + rng.uniform(0, 2 * np.pi))
    if family == "chirp":
        f0, f1 = rng.uniform(200.0, 800.0), rng.uniform(800.0, 2500.0)
        duration = num_samples / sample_rate
        return np.sqrt(2.0) * np.sin(2 * np.pi * (f0 * t + (f1 - f0) * t ** 2 / (2 * duration)))
    return rng.standard_normal(num_samples)


def _frame_rms(sources: np.ndarray, samples_per_frame: int) -> np.ndarray:
    k, n = sources.shape
    frames = sources.reshape(k, n // samples_per_frame, samples_per_frame)
    return np.sqrt(np.mean(frames ** 2, axis=-1))


# ==================== Video ====================

def _paths(rng: np.random.Generator, quadrants: Sequence[int], num_frames: int, frame_size: int) -> np.ndarray:
    """Integer blob centres random-walking inside their own quadrant"""
    half = frame_size // 2
    margin = max(half // 4, 1)
    paths = np.zeros((len(quadrants), num_frames, 2), dtype=np.int64)
    for i, quadrant in enumerate(quadrants):
        origin = np.array([(quadrant // 2) * half, (quadrant % 2) * half])
        low, high = origin + margin, origin + half - margin - 1
        position = rng.integers(low, high + 1)
        for t in range(num_frames):
            paths[i, t] = position
            position = np.clip(position + rng.integers(-1, 2, size=2), low, high)
    return paths


def _render(rms: np.ndarray, paths: np.ndarray, frame_size: int, sigma: float) -> np.ndarray:
    """Max-composite one Gaussian blob per source; returns T x H x W"""
    num_frames = paths.shape[1]
    rows = np.arange(frame_size)[None, :, None]
    cols = np.arange(frame_size)[None, None, :]
    frames = np.zeros((num_frames, frame_size, frame_size))
    for k in range(paths.shape[0]):
        cy = paths[k, :, 0][:, None, None]
        cx = paths[k, :, 1][:, None, None]
        blob = np.exp(-((rows - cy) ** 2 + (cols - cx) ** 2) / (2.0 * sigma ** 2))
        frames = np.maximum(frames, rms[k][:, None, None] * blob)
    return frames


def synth_scene(cfg: SceneConfig, seed: int, index: int = 0, force: Optional[bool] = None) -> SceneBundle:
    """
    Render one synthetic scene.

    Args:
        cfg: Scene parameters
        seed: Base seed
        index: Stream index; (seed, index) fully determines the scene
        force: True for an all-on scene, False for all-off, None to draw flags

    Returns:
        SceneBundle with the clip, the on-screen soundtrack (ON sources plus the
        noise floor), the summed OFF sources and the ground truth
    """
    rng = _rng(seed, index)
    count = int(rng.integers(cfg.min_sources, cfg.max_sources + 1))
    if count < 1:
        raise ConfigException("A scene needs at least one source", key="min_sources")
    on_screen = rng.random(count) < cfg.on_fraction
    if force is not None:
        on_screen[:] = force
    if on_screen.sum() > MAX_ON_SCREEN:
        raise ConfigException(f"At most {MAX_ON_SCREEN} on-screen sources fit the frame", key="max_sources")

    n, spf = cfg.num_samples, cfg.samples_per_frame
    families = [str(rng.choice(cfg.families)) for _ in range(count)]
    raw = np.stack([
        rng.uniform(0.5, 1.0)
        * np.repeat(_envelope(rng, cfg.num_frames), spf)
        * _carrier(rng, family, n, cfg.sample_rate)
        for family in families
    ])
    mixes = (raw.sum(axis=0), raw[on_screen].sum(axis=0), raw[~on_screen].sum(axis=0))
    peak = max(np.abs(raw).max(), *(np.abs(m).max() for m in mixes))
    sources = quantize(raw * (cfg.peak_level / peak if peak > 0 else 1.0))
    soundtrack = sources[on_screen].sum(axis=0)
    offscreen = sources[~on_screen].sum(axis=0)
    if cfg.noise_floor > 0:
        soundtrack = soundtrack + quantize(cfg.noise_floor * rng.standard_normal(n))

    rms = _frame_rms(sources, spf)
    on_index = np.flatnonzero(on_screen)
    quadrants = rng.permutation(MAX_ON_SCREEN)[: len(on_index)]
    paths = _paths(rng, quadrants, cfg.num_frames, cfg.frame_size)
    frames = _render(rms[on_index], paths, cfg.frame_size, cfg.blob_sigma)

    centers = np.full((count, cfg.num_frames, 2), -1, dtype=np.int64)
    blob_traces = np.zeros((count, cfg.num_frames))
    for i, k in enumerate(on_index):
        centers[k] = paths[i]
        blob_traces[k] = frames[np.arange(cfg.num_frames), paths[i, :, 0], paths[i, :, 1]]

    truth = SceneTruth(
        sources=sources,
        on_screen=[bool(v) for v in on_screen],
        families=families,
        rms_traces=rms,
        blob_traces=blob_traces,
        centers=centers,
    )
    clip = VideoClip(frames=torch.from_numpy(frames[..., None].astype(np.float32)), fps=cfg.video_fps)
    return SceneBundle(
        clip=clip,
        soundtrack=WaveBuffer.from_numpy(soundtrack, cfg.sample_rate),
        offscreen_audio=WaveBuffer.from_numpy(offscreen, cfg.sample_rate),
        truth=truth,
    )


# ==================== Mixtures of Mixtures ====================

def _mix(
    example_id: str,
    kind: ExampleKind,
    primary: SceneBundle,
    background: Optional[SceneBundle],
) -> MoMExample:
    # An all-off clip is heard through its OFF sources; the background clip is unseen
    r1 = primary.full_audio if kind.offscreen else primary.soundtrack
    if background is None:
        r2 = WaveBuffer.silence(r1.length, r1.sample_rate)
    else:
        r2 = background.full_audio
        if r2.length != r1.length or r2.sample_rate != r1.sample_rate:
            raise DimensionException(f"Background of {example_id} does not match the primary soundtrack")
    return MoMExample(
        example_id=example_id,
        kind=kind,
        clip=primary.clip,
        primary_audio=r1,
        background_audio=r2,
        input_mixture=WaveBuffer(samples=r1.samples + r2.samples, sample_rate=r1.sample_rate),
        primary_truth=primary.truth,
        background_truth=background.truth if background is not None else None,
    )


def make_non_mom(primary: SceneBundle, background: SceneBundle, example_id: str = "non") -> MoMExample:
    """Noisy-labeled example: frames and r1 from the primary scene, r2 from a random other scene"""
    return _mix(example_id, ExampleKind.NON, primary, background)


def make_labeled_examples(
    scene: SceneBundle,
    kind: ExampleKind,
    background: Optional[SceneBundle] = None,
    example_id: Optional[str] = None,
) -> MoMExample:
    """
    Labeled example of the given kind. LOn kinds need an all-on scene, LOff kinds an
    all-off one; MoM kinds add `background` as r2, single kinds use silence.
    """
    if kind is ExampleKind.NON:
        raise ContractException("Use make_non_mom for noisy-labeled examples")
    flags = scene.truth.on_screen
    if kind.offscreen and any(flags):
        raise ContractException(f"{kind.value} needs an all-off scene")
    if not kind.offscreen and not all(flags):
        raise ContractException(f"{kind.value} needs an all-on scene")
    mom = kind in (ExampleKind.LON_MOM, ExampleKind.LOFF_MOM)
    if mom and background is None:
        raise ContractException(f"{kind.value} needs a background scene")
    return _mix(example_id or kind.value, kind, scene, background if mom else None)


# ==================== Sampling ====================

def sample_kinds(mode: SamplingMode, count: int, seed: int) -> List[ExampleKind]:
    """Example kinds drawn independently per example with the mode's proportions"""
    if count < 1:
        raise ConfigException(f"Batch size must be at least 1, got {count}", key="batch_size")
    if mode is SamplingMode.UNSUPERVISED:
        return [ExampleKind.NON] * count
    draws = _rng(seed).choice(len(KIND_ORDER), size=count, p=SEMI_SUPERVISED_PROPORTIONS)
    return [KIND_ORDER[i] for i in draws]


def make_example(cfg: SceneConfig, kind: ExampleKind, seed: int, index: int) -> MoMExample:
    """The example at `index` of the stream `seed`; scenes use stream indices 2i and 2i+1"""
    force = None if kind is ExampleKind.NON else not kind.offscreen
    primary = synth_scene(cfg, seed, 2 * index, force=force)
    background = synth_scene(cfg, seed, 2 * index + 1)
    example_id = f"{seed}-{index:06d}"
    if kind is ExampleKind.NON:
        return make_non_mom(primary, background, example_id)
    return make_labeled_examples(primary, kind, background, example_id)


def sample_batch(cfg: SceneConfig, mode: SamplingMode, batch_size: int, seed: int) -> List[MoMExample]:
    kinds = sample_kinds(mode, batch_size, seed)
    return [make_example(cfg, kind, seed, i) for i, kind in enumerate(kinds)]


def evaluation_set(cfg: SceneConfig, count: int, seed: int) -> List[MoMExample]:
    """`count` on-screen MoMs followed by `count` off-screen-only clips"""
    if count < 1:
        raise ConfigException(f"Evaluation count must be at least 1, got {count}", key="eval_count")
    onscreen = [make_example(cfg, ExampleKind.NON, seed, i) for i in range(count)]
    offscreen = [make_example(cfg, ExampleKind.LOFF_SINGLE, seed, count + i) for i in range(count)]
    return onscreen + offscreen


@dataclass
class Batch:
    """Examples stacked for the networks"""
    mixture: torch.Tensor  # (B, T')
    primary: torch.Tensor  # (B, T')
    background: torch.Tensor  # (B, T')
    frames: torch.Tensor  # (B, T, H, W, C)
    kinds: List[ExampleKind]


def collate(examples: Sequence[MoMExample], dtype: torch.dtype = torch.float32) -> Batch:
    if not examples:
        raise ContractException("Cannot collate an empty batch")
    return Batch(
        mixture=torch.stack([e.input_mixture.samples for e in examples]).to(dtype),
        primary=torch.stack([e.primary_audio.samples for e in examples]).to(dtype),
        background=torch.stack([e.background_audio.samples for e in examples]).to(dtype),
        frames=torch.stack([e.clip.frames for e in examples]).to(dtype),
        kinds=[e.kind for e in examples],
    )


class SyntheticMoMDataset:
    """
    Indexable, lazily generated example stream.

    Kinds follow `mode`; every item is a pure function of (config, seed, index).
    """

    def __init__(self, cfg: SceneConfig, mode: SamplingMode, count: int, seed: int,
                 kind: Optional[ExampleKind] = None):
        self.cfg = cfg
        self.seed = seed
        self.kinds = [kind] * count if kind is not None else sample_kinds(mode, count, seed)

    def __len__(self) -> int:
        return len(self.kinds)

    def __getitem__(self, index: int) -> MoMExample:
        if not 0 <= index < len(self.kinds):
            raise IndexError(index)
        return make_example(self.cfg, self.kinds[index], self.seed, index)

    def batch(self, indices: Sequence[int]) -> List[MoMExample]:
        return [self[i] for i in indices]
