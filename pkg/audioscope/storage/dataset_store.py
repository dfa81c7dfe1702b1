"""
Dataset Store - example directories with PGM frames, 16-bit WAV audio and truth.json

Layout of one example directory:
    frames/000000.pgm ...    8-bit grayscale frames
    frames/meta.txt          "fps frame_count"
    primary.wav              r1
    background.wav           r2
    mixture.wav              x = r1 + r2
    truth/primary_K.wav      ground-truth sources of the primary scene
    truth/background_K.wav   ground-truth sources of the background scene
    truth.json               kind, on-screen flags, envelopes, blob traces
"""
import json
import logging
from pathlib import Path
from typing import Iterable, List, Optional

import numpy as np
import soundfile as sf
import torch

from audioscope.exceptions import DatasetException
from audioscope.models.audio import ExampleKind, MoMExample, SceneTruth, VideoClip, WaveBuffer

logger = logging.getLogger(__name__)

PCM_SUBTYPE = "PCM_16"
TRUTH_FILE = "truth.json"


# ==================== Files ====================

def write_wav(path: Path, wave: WaveBuffer) -> None:
    sf.write(str(path), wave.numpy(), wave.sample_rate, subtype=PCM_SUBTYPE)


def read_wav(path: Path) -> WaveBuffer:
    if not path.exists():
        raise DatasetException("Missing audio file", path=str(path))
    data, sample_rate = sf.read(str(path), dtype="float64", always_2d=False)
    return WaveBuffer.from_numpy(data, sample_rate)


def write_pgm(path: Path, frame: np.ndarray) -> None:
    """Binary (P5) 8-bit grayscale image from values in [0, 1]"""
    pixels = np.clip(np.round(frame * 255.0), 0, 255).astype(np.uint8)
    height, width = pixels.shape
    with open(path, "wb") as handle:
        handle.write(f"P5\n{width} {height}\n255\n".encode("ascii"))
        handle.write(pixels.tobytes())


def read_pgm(path: Path) -> np.ndarray:
    raw = path.read_bytes()
    fields, offset = [], 0
    while len(fields) < 4:
        while raw[offset:offset + 1].isspace():
            offset += 1
        end = offset
        while not raw[end:end + 1].isspace():
            end += 1
        fields.append(raw[offset:end].decode("ascii"))
        offset = end
    magic, width, height, maxval = fields[0], int(fields[1]), int(fields[2]), int(fields[3])
    if magic != "P5" or maxval != 255:
        raise DatasetException(f"Unsupported PGM header {fields}", path=str(path))
    pixels = np.frombuffer(raw[offset + 1:offset + 1 + width * height], dtype=np.uint8)
    return pixels.reshape(height, width).astype(np.float32) / 255.0


# ==================== Examples ====================

def _truth_json(truth: Optional[SceneTruth]):
    return truth.to_json() if truth is not None else None


def _write_truth_sources(folder: Path, prefix: str, truth: Optional[SceneTruth], sample_rate: int) -> None:
    if truth is None:
        return
    for k, source in enumerate(truth.sources):
        write_wav(folder / f"{prefix}_{k}.wav", WaveBuffer.from_numpy(source, sample_rate))


def write_example(example: MoMExample, directory: Path) -> Path:
    directory = Path(directory)
    frames_dir = directory / "frames"
    truth_dir = directory / "truth"
    try:
        frames_dir.mkdir(parents=True, exist_ok=True)
        truth_dir.mkdir(exist_ok=True)

        frames = example.clip.frames.detach().cpu().numpy()
        if frames.shape[-1] != 1:
            raise DatasetException(f"Only grayscale frames are stored, got {frames.shape[-1]} channels",
                                   path=str(directory))
        for t, frame in enumerate(frames[..., 0]):
            write_pgm(frames_dir / f"{t:06d}.pgm", frame)
        (frames_dir / "meta.txt").write_text(f"{example.clip.fps} {example.clip.num_frames}\n")

        write_wav(directory / "primary.wav", example.primary_audio)
        write_wav(directory / "background.wav", example.background_audio)
        write_wav(directory / "mixture.wav", example.input_mixture)
        sample_rate = example.input_mixture.sample_rate
        _write_truth_sources(truth_dir, "primary", example.primary_truth, sample_rate)
        _write_truth_sources(truth_dir, "background", example.background_truth, sample_rate)

        truth = {
            "example_id": example.example_id,
            "kind": example.kind.value,
            "primary": _truth_json(example.primary_truth),
            "background": _truth_json(example.background_truth),
        }
        (directory / TRUTH_FILE).write_text(json.dumps(truth))
    except OSError as e:
        logger.error(f"Failed to write example {example.example_id}: {e}")
        raise DatasetException(f"Cannot write example: {e}", path=str(directory))
    return directory


def _read_truth(folder: Path, prefix: str, data) -> Optional[SceneTruth]:
    if data is None:
        return None
    count = len(data["on_screen"])
    sources = [read_wav(folder / f"{prefix}_{k}.wav").numpy() for k in range(count)]
    return SceneTruth(
        sources=np.stack(sources),
        on_screen=data["on_screen"],
        families=data["families"],
        rms_traces=np.asarray(data["rms_traces"], dtype=np.float64),
        blob_traces=np.asarray(data["blob_traces"], dtype=np.float64),
        centers=np.asarray(data["centers"], dtype=np.int64),
    )


def read_example(directory: Path) -> MoMExample:
    directory = Path(directory)
    truth_file = directory / TRUTH_FILE
    if not truth_file.exists():
        raise DatasetException("Not an example directory", path=str(directory))
    try:
        truth = json.loads(truth_file.read_text())
        fps, frame_count = (int(v) for v in (directory / "frames" / "meta.txt").read_text().split())
        frames = np.stack([read_pgm(directory / "frames" / f"{t:06d}.pgm") for t in range(frame_count)])
        primary = read_wav(directory / "primary.wav")
        background = read_wav(directory / "background.wav")
        mixture = read_wav(directory / "mixture.wav")
        return MoMExample(
            example_id=truth["example_id"],
            kind=ExampleKind(truth["kind"]),
            clip=VideoClip(frames=torch.from_numpy(frames[..., None]), fps=fps),
            primary_audio=primary,
            background_audio=background,
            input_mixture=mixture,
            primary_truth=_read_truth(directory / "truth", "primary", truth["primary"]),
            background_truth=_read_truth(directory / "truth", "background", truth["background"]),
        )
    except (OSError, KeyError, ValueError) as e:
        logger.error(f"Failed to read example {directory}: {e}")
        raise DatasetException(f"Corrupt example: {e}", path=str(directory))


def write_dataset(examples: Iterable[MoMExample], root: Path) -> List[Path]:
    root = Path(root)
    written = [write_example(example, root / f"example_{i:06d}") for i, example in enumerate(examples)]
    logger.info(f"Wrote {len(written)} examples to {root}")
    return written


class DirectoryDataset:
    """Examples stored under `root`, one directory each, in sorted order"""

    def __init__(self, root: Path):
        self.root = Path(root)
        if not self.root.is_dir():
            raise DatasetException("Dataset directory not found", path=str(self.root))
        self.directories = sorted(p for p in self.root.iterdir() if (p / TRUTH_FILE).exists())
        if not self.directories:
            raise DatasetException("Dataset directory holds no examples", path=str(self.root))

    def __len__(self) -> int:
        return len(self.directories)

    def __getitem__(self, index: int) -> MoMExample:
        return read_example(self.directories[index])

    def batch(self, indices) -> List[MoMExample]:
        return [self[i] for i in indices]
