"""
Checkpoint Store - flat name-to-array checkpoints (npz) with a JSON metadata sidecar
"""
import json
import logging
import shutil
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

import numpy as np
import torch

from audioscope.exceptions import CheckpointException

logger = logging.getLogger(__name__)

META_SUFFIX = ".json"


def _meta_path(path: Path) -> Path:
    return path.with_suffix(META_SUFFIX)


def save_checkpoint(path: Path, state: Dict[str, torch.Tensor], meta: Optional[Dict[str, Any]] = None) -> Path:
    """
    Write a state dict as one array per parameter name.

    Args:
        path: Target `.npz` file
        state: Parameter and buffer tensors by name
        meta: JSON-serializable metadata written next to the arrays

    Returns:
        The written path
    """
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        arrays = {name: tensor.detach().cpu().numpy() for name, tensor in state.items()}
        with open(path, "wb") as handle:
            np.savez(handle, **arrays)
        _meta_path(path).write_text(json.dumps(meta or {}, indent=2, sort_keys=True))
    except OSError as e:
        logger.error(f"Failed to write checkpoint {path}: {e}")
        raise CheckpointException(f"Cannot write checkpoint: {e}", path=str(path))
    logger.info(f"Saved checkpoint {path} ({len(state)} arrays)")
    return path


def load_checkpoint(path: Path) -> Tuple[Dict[str, torch.Tensor], Dict[str, Any]]:
    """Read arrays and metadata written by save_checkpoint"""
    path = Path(path)
    if not path.exists():
        raise CheckpointException("Checkpoint not found", path=str(path))
    try:
        with np.load(path, allow_pickle=False) as data:
            state = {name: torch.from_numpy(data[name].copy()) for name in data.files}
        meta_file = _meta_path(path)
        meta = json.loads(meta_file.read_text()) if meta_file.exists() else {}
    except (OSError, ValueError) as e:
        logger.error(f"Failed to read checkpoint {path}: {e}")
        raise CheckpointException(f"Unreadable checkpoint: {e}", path=str(path))
    return state, meta


def restore_module(module: torch.nn.Module, path: Path) -> Dict[str, Any]:
    """Load a checkpoint into `module` strictly; returns the metadata"""
    state, meta = load_checkpoint(path)
    try:
        module.load_state_dict(state, strict=True)
    except RuntimeError as e:
        raise CheckpointException(f"Checkpoint does not fit the model: {e}", path=str(path))
    return meta


def copy_checkpoint(source: Path, target: Path) -> Path:
    source, target = Path(source), Path(target)
    if not source.exists():
        raise CheckpointException("Checkpoint not found", path=str(source))
    shutil.copyfile(source, target)
    if _meta_path(source).exists():
        shutil.copyfile(_meta_path(source), _meta_path(target))
    return target
