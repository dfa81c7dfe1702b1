"""
pretrain-sep / train - separator pretraining and joint audio-visual training
"""
import argparse
import logging
from pathlib import Path
from typing import Any, Dict

import torch

from audioscope.commands.common import VALIDATION_OFFSET, build_model, training_dataset, validation_examples
from audioscope.config import Settings
from audioscope.models.configs import AttentionVariant, SamplingMode
from audioscope.services.data_service import SyntheticMoMDataset
from audioscope.services.training_service import TrainingService

logger = logging.getLogger(__name__)


def pretrain_separator(settings: Settings) -> Dict[str, Any]:
    """MixIT pretraining on audio-only mixtures of mixtures"""
    dataset = training_dataset(settings)
    holdout = SyntheticMoMDataset(settings.scene_config(), SamplingMode.UNSUPERVISED,
                                  settings.eval_count, settings.seed + VALIDATION_OFFSET)
    info = TrainingService(Path(settings.out)).pretrain_separator(
        dataset, settings.separator_config(), settings.train_config(),
        holdout=[holdout[i] for i in range(len(holdout))],
    )
    return {"checkpoint": info.path, "steps": info.step, "holdout_si_snr": info.score}


def train(settings: Settings) -> Dict[str, Any]:
    """Joint training, periodic validation and best-checkpoint selection"""
    torch.manual_seed(settings.seed)
    model = build_model(settings)
    service = TrainingService(Path(settings.out))
    separator_ckpt = Path(settings.separator_checkpoint) if settings.separator_checkpoint else None
    if separator_ckpt is None:
        logger.warning("No separator checkpoint given; the separator starts from random weights")
    series = service.train_audio_visual(
        training_dataset(settings), model, settings.train_config(),
        separator_ckpt=separator_ckpt, validation=validation_examples(settings),
    )
    best = service.select_checkpoint(series)
    return {
        "best_step": best.step,
        "best_score": best.score,
        "checkpoints": [info.model_dump() for info in series],
    }


def register(subparsers, common: argparse.ArgumentParser) -> None:
    pretrain = subparsers.add_parser("pretrain-sep", parents=[common], help="MixIT pretraining of the separator")
    pretrain.add_argument("--steps", type=int, default=argparse.SUPPRESS)
    pretrain.add_argument("--batch-size", dest="batch_size", type=int, default=argparse.SUPPRESS)
    pretrain.add_argument("--data", default=argparse.SUPPRESS)
    pretrain.set_defaults(handler=pretrain_separator)

    joint = subparsers.add_parser("train", parents=[common], help="Audio-visual training with checkpoint selection")
    joint.add_argument("--mode", choices=[m.value for m in SamplingMode], default=argparse.SUPPRESS)
    joint.add_argument("--variant", choices=[v.value for v in AttentionVariant], default=argparse.SUPPRESS)
    joint.add_argument("--steps", type=int, default=argparse.SUPPRESS)
    joint.add_argument("--batch-size", dest="batch_size", type=int, default=argparse.SUPPRESS)
    joint.add_argument("--data", default=argparse.SUPPRESS)
    joint.add_argument("--separator-checkpoint", dest="separator_checkpoint", default=argparse.SUPPRESS)
    joint.set_defaults(handler=train)
