"""
bench - attention scaling sweep under an allocator budget
"""
import argparse
import logging
from pathlib import Path
from typing import Any, Dict

from audioscope.config import Settings
from audioscope.services.benchmark_service import BenchmarkService, max_frames

logger = logging.getLogger(__name__)


def benchmark(settings: Settings) -> Dict[str, Any]:
    cfg = settings.bench_config()
    points = BenchmarkService(cfg).run(Path(settings.out))
    reach = {variant.value: max_frames(points, variant) for variant in cfg.variants}
    for variant, T in reach.items():
        logger.info(f"{variant}: longest completed input T={T}")
    return {"points": len(points), "max_frames": reach, "frames": list(cfg.frames)}


def register(subparsers, common: argparse.ArgumentParser) -> None:
    parser = subparsers.add_parser("bench", parents=[common], help="Measure attention time and memory versus T")
    parser.add_argument("--variants", default=argparse.SUPPRESS, help="Comma list of attention variants")
    parser.add_argument("--tmax", type=int, default=argparse.SUPPRESS)
    parser.add_argument("--budget", type=int, default=argparse.SUPPRESS, help="Bytes per measurement")
    parser.add_argument("--repeats", type=int, default=argparse.SUPPRESS)
    parser.set_defaults(handler=benchmark)
