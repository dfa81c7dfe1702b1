"""
Attention Export Service - per-frame, per-source spatial attention heat maps as CSV grids
"""
import logging
import math
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np
import torch

from audioscope.exceptions import ContractException, DimensionException
from audioscope.models.audio import MoMExample
from audioscope.networks.attention import AttentionMap
from audioscope.networks.model import AudioVisualModel
from audioscope.services.data_service import collate

logger = logging.getLogger(__name__)


def weighted_maps(attention: AttentionMap, probs: Optional[Sequence[float]]) -> np.ndarray:
    """
    Spatial attention of every source, scaled by its on-screen probability.

    Returns:
        (T, M, g, g) array
    """
    if probs is None:
        raise ContractException("Heat maps need the on-screen probabilities of the sources")
    spatial = attention.spatial()
    frames, sources, grid = spatial.shape
    probs = np.asarray(probs, dtype=np.float64)
    if probs.shape != (sources,):
        raise DimensionException(f"{probs.size} probabilities for {sources} sources")
    side = int(math.isqrt(grid))
    if side * side != grid:
        raise DimensionException(f"Spatial axis of {grid} positions is not a square grid")
    return (spatial * probs[None, :, None]).reshape(frames, sources, side, side)


def export_maps(maps: np.ndarray, out_dir: Path) -> List[Path]:
    """Writes attn_f{t}_s{m}.csv for every frame t and source m"""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for t in range(maps.shape[0]):
        for m in range(maps.shape[1]):
            path = out_dir / f"attn_f{t}_s{m}.csv"
            np.savetxt(path, maps[t, m], delimiter=",", fmt="%.8g")
            written.append(path)
    logger.info(f"Exported {len(written)} attention maps to {out_dir}")
    return written


def export_attention(model: AudioVisualModel, example: MoMExample, out_dir: Path) -> List[Path]:
    """Run one example with attention capture on and write its heat maps"""
    dtype = next(model.parameters()).dtype
    was_training = model.training
    model.eval()
    try:
        with torch.no_grad():
            batch = collate([example], dtype)
            out = model(batch.mixture, batch.frames, capture_attention=True)
    finally:
        model.train(was_training)
    return export_maps(weighted_maps(out.attention, out.probs[0].tolist()), out_dir)
