"""
gen-data - writes a seeded synthetic dataset, one directory per example
"""
import argparse
import logging
from concurrent.futures import ProcessPoolExecutor
from functools import partial
from pathlib import Path
from typing import Any, Dict

from tqdm import tqdm

from audioscope.config import Settings
from audioscope.models.configs import SamplingMode, SceneConfig
from audioscope.services.data_service import SyntheticMoMDataset
from audioscope.storage.dataset_store import write_example

logger = logging.getLogger(__name__)


def _write(index: int, cfg: SceneConfig, mode: SamplingMode, count: int, seed: int, root: Path) -> str:
    dataset = SyntheticMoMDataset(cfg, mode, count, seed)
    return str(write_example(dataset[index], root / f"example_{index:06d}"))


def generate_dataset(settings: Settings) -> Dict[str, Any]:
    """
    Write `count` examples of the `mode` stream under `out`.

    Every example depends only on (config, seed, index), so the output is the
    same for any number of workers.
    """
    root = Path(settings.out)
    root.mkdir(parents=True, exist_ok=True)
    write_one = partial(
        _write, cfg=settings.scene_config(), mode=settings.mode, count=settings.count,
        seed=settings.seed, root=root,
    )
    indices = range(settings.count)
    if settings.workers > 1:
        with ProcessPoolExecutor(max_workers=settings.workers) as pool:
            written = list(tqdm(pool.map(write_one, indices), total=settings.count, desc="gen-data", leave=False))
    else:
        written = [write_one(i) for i in tqdm(indices, desc="gen-data", leave=False)]
    logger.info(f"Generated {len(written)} {settings.mode.value} examples in {root}")
    return {"examples": len(written), "mode": settings.mode.value, "out": str(root)}


def register(subparsers, common: argparse.ArgumentParser) -> None:
    parser = subparsers.add_parser("gen-data", parents=[common], help="Write a synthetic dataset")
    parser.add_argument("--mode", choices=[m.value for m in SamplingMode], default=argparse.SUPPRESS)
    parser.add_argument("--count", type=int, default=argparse.SUPPRESS)
    parser.add_argument("--workers", type=int, default=argparse.SUPPRESS)
    parser.set_defaults(handler=generate_dataset)
