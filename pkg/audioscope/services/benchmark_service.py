"""
Benchmark Service - analytic attention cost model and measured forward-pass scaling

Every measurement runs in a freshly spawned process so its peak resident memory
and its address-space budget are isolated from the caller and from other points.
"""
import json
import logging
import multiprocessing
import os
import resource
import statistics
import timeit
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import pandas as pd
import torch
from tqdm import tqdm

from audioscope.exceptions import ConfigException
from audioscope.models.configs import AttentionConfig, AttentionVariant, BenchConfig
from audioscope.models.records import BenchPoint
from audioscope.networks.attention import build_encoder
from audioscope.numerics.tensor import Axis, FeatureTensor

logger = logging.getLogger(__name__)


# ==================== Cost Model ====================

def block_pairs(variant: AttentionVariant, M: int, G: int, T: int) -> int:
    """Attended (query, key) pairs of one block, per head and per example"""
    N = M + G
    return {
        AttentionVariant.JOINT_SA: (N * T) ** 2,
        AttentionVariant.SEP_SA: N * T * T + T * N * N,
        AttentionVariant.JOINT_CMA: 2 * M * G * T * T,
        AttentionVariant.SEP_CMA: N * T * T + 2 * T * M * G,
        AttentionVariant.SHALLOW: T * M * G,
    }[AttentionVariant(variant)]


def score_pairs(variant: AttentionVariant, M: int, G: int, T: int, L: int) -> int:
    """Pairs of a whole forward pass: L blocks plus the attentional pooling over time"""
    return L * block_pairs(variant, M, G, T) + M * T


def flop_model(variant: AttentionVariant, M: int, G: int, T: int, D: int, H: int, L: int) -> int:
    """
    Score plus context multiplies: every pair costs D/H multiplies for the score
    and D/H for the weighted value in each of the H heads.
    """
    if D % H:
        raise ConfigException(f"Depth {D} is not divisible by {H} heads", key="num_heads")
    return score_pairs(variant, M, G, T, L) * 2 * D


# ==================== Measurement ====================

@dataclass
class MeasureTask:
    variant: str
    frames: int
    num_sources: int
    grid_size: int
    depth: int
    num_heads: int
    num_blocks: int
    repeats: int
    budget_bytes: Optional[int]
    seed: int


def _virtual_memory() -> int:
    with open("/proc/self/statm") as handle:
        pages = int(handle.read().split()[0])
    return pages * os.sysconf("SC_PAGE_SIZE")


def _measure_point(task: MeasureTask) -> Dict[str, object]:
    """Worker body; runs inside the spawned process"""
    torch.set_num_threads(1)
    torch.manual_seed(task.seed)
    cfg = AttentionConfig(
        num_heads=task.num_heads,
        depth=task.depth,
        num_blocks=task.num_blocks,
        dropout_rate=0.0,
        variant=AttentionVariant(task.variant),
    )
    encoder = build_encoder(cfg).eval()
    z_a = FeatureTensor(torch.randn(1, task.num_sources, task.frames, task.depth),
                        (Axis.BATCH, Axis.SRC, Axis.TIME, Axis.DEPTH))
    z_v = FeatureTensor(torch.randn(1, task.grid_size, task.frames, task.depth),
                        (Axis.BATCH, Axis.SPACE, Axis.TIME, Axis.DEPTH))

    if task.budget_bytes:
        limit = _virtual_memory() + task.budget_bytes
        resource.setrlimit(resource.RLIMIT_AS, (limit, limit))
    baseline = resource.getrusage(resource.RUSAGE_SELF).ru_maxrss
    try:
        with torch.no_grad():
            encoder(z_a, z_v)
            times = []
            for _ in range(task.repeats):
                start = timeit.default_timer()
                encoder(z_a, z_v)
                times.append(timeit.default_timer() - start)
    except (RuntimeError, MemoryError):
        return {"oom": True}
    peak_kib = resource.getrusage(resource.RUSAGE_SELF).ru_maxrss - baseline
    return {"oom": False, "wall_time": statistics.median(times), "peak_memory": peak_kib * 1024}


class BenchmarkService:
    """Sweeps input length per attention variant and records time, memory and cost"""

    def __init__(self, cfg: BenchConfig):
        self.cfg = cfg

    def _task(self, variant: AttentionVariant, frames: int) -> MeasureTask:
        cfg = self.cfg
        return MeasureTask(
            variant=variant.value, frames=frames, num_sources=cfg.num_sources, grid_size=cfg.grid_size,
            depth=cfg.depth, num_heads=cfg.num_heads, num_blocks=cfg.num_blocks, repeats=cfg.repeats,
            budget_bytes=cfg.budget_bytes, seed=cfg.seed,
        )

    def _flops(self, variant: AttentionVariant, frames: int) -> int:
        cfg = self.cfg
        return flop_model(variant, cfg.num_sources, cfg.grid_size, frames, cfg.depth, cfg.num_heads, cfg.num_blocks)

    def measure(self, variant: AttentionVariant, frames: Optional[Sequence[int]] = None) -> List[BenchPoint]:
        """
        Forward-pass wall time and peak memory for each T; once a length runs out of
        memory every longer one is recorded as OOM without running.
        """
        points: List[BenchPoint] = []
        exhausted = False
        context = multiprocessing.get_context("spawn")
        for T in sorted(frames or self.cfg.frames):
            result: Dict[str, object] = {"oom": True}
            if not exhausted:
                with ProcessPoolExecutor(max_workers=1, mp_context=context) as pool:
                    try:
                        result = pool.submit(_measure_point, self._task(variant, T)).result()
                    except Exception as e:
                        logger.warning(f"{variant.value} at T={T} failed in worker: {e}")
            exhausted = exhausted or bool(result["oom"])
            if result["oom"]:
                logger.info(f"{variant.value} out of memory at T={T}")
            points.append(BenchPoint(
                variant=variant,
                frames=T,
                wall_time=result.get("wall_time"),
                peak_memory=result.get("peak_memory"),
                flop_estimate=self._flops(variant, T),
                repeats=self.cfg.repeats,
                oom=bool(result["oom"]),
            ))
        return points

    def run(self, out_dir: Path) -> List[BenchPoint]:
        points: List[BenchPoint] = []
        for variant in tqdm(self.cfg.variants, desc="bench", leave=False):
            points.extend(self.measure(variant))
        self.write(points, Path(out_dir))
        return points

    def write(self, points: Sequence[BenchPoint], out_dir: Path) -> None:
        out_dir.mkdir(parents=True, exist_ok=True)
        frame = pd.DataFrame([
            {
                "variant": p.variant.value,
                "T": p.frames,
                "median_s": p.wall_time,
                "peak_bytes": p.peak_memory,
                "flops": p.flop_estimate,
                "oom": p.oom,
            }
            for p in points
        ])
        frame.to_csv(out_dir / "bench.csv", index=False)

        series: Dict[str, Dict[str, list]] = {}
        for p in points:
            entry = series.setdefault(p.variant.value, {"T": [], "median_s": [], "peak_bytes": [], "flops": []})
            entry["T"].append(p.frames)
            entry["median_s"].append(p.wall_time)
            entry["peak_bytes"].append(p.peak_memory)
            entry["flops"].append(p.flop_estimate)
        cfg = self.cfg
        plot = {
            "dims": {"M": cfg.num_sources, "G": cfg.grid_size, "D": cfg.depth, "H": cfg.num_heads,
                     "L": cfg.num_blocks, "repeats": cfg.repeats, "budget_bytes": cfg.budget_bytes},
            "series": series,
        }
        (out_dir / "bench_plot.json").write_text(json.dumps(plot, indent=2))
        logger.info(f"Wrote {len(points)} benchmark points to {out_dir}")


def max_frames(points: Sequence[BenchPoint], variant: AttentionVariant) -> int:
    """Longest input that completed for `variant`, 0 if none did"""
    done = [p.frames for p in points if p.variant == variant and not p.oom]
    return max(done, default=0)
