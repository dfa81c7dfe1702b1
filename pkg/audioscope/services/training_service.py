"""
Training Service - separator MixIT pretraining, joint audio-visual training and checkpoint selection
"""
import json
import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
import torch
from tqdm import tqdm

from audioscope.exceptions import ContractException, TrainingException
from audioscope.models.audio import MoMExample
from audioscope.models.configs import SeparatorConfig, TrainConfig
from audioscope.models.records import CheckpointInfo, EvalRecord
from audioscope.networks.losses import classification_batch, mixit_batch, total_loss
from audioscope.networks.model import AudioVisualModel
from audioscope.networks.separator import Separator
from audioscope.services.data_service import collate
from audioscope.services.evaluation_service import EvaluationService
from audioscope.services.metrics_service import model_selection_score, si_snr
from audioscope.storage.checkpoint_store import copy_checkpoint, restore_module, save_checkpoint
from audioscope.storage.records_store import write_records

logger = logging.getLogger(__name__)

TRAIN_LOG = "train_log.jsonl"
BEST_CHECKPOINT = "best.npz"


class TrainingLog:
    """Appends one JSON object per line"""

    def __init__(self, path: Path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.path.write_text("")

    def write(self, **entry) -> None:
        with open(self.path, "a") as handle:
            handle.write(json.dumps(entry) + "\n")


def _optimizer(params, cfg: TrainConfig) -> torch.optim.Adam:
    params = [p for p in params if p.requires_grad]
    if not params:
        raise ContractException("No trainable parameters")
    return torch.optim.Adam(params, lr=cfg.learning_rate, betas=(cfg.beta1, cfg.beta2), eps=cfg.adam_eps)


def _check_finite(loss: torch.Tensor, step: int) -> None:
    if not bool(torch.isfinite(loss)):
        logger.error(f"Non-finite loss {float(loss)} at step {step}")
        raise TrainingException(f"Non-finite loss at step {step}", step=step)


def best_assignment_si_snr(separator: Separator, examples: Sequence[MoMExample], tau: float) -> float:
    """Mean SI-SNR of the best-assignment remixes against every non-silent reference"""
    param = next(separator.parameters())
    was_training = separator.training
    separator.eval()
    scores = []
    try:
        with torch.no_grad():
            batch = collate(examples, param.dtype)
            sources = separator(batch.mixture)
            assignment = mixit_batch(batch.primary, batch.background, sources, tau)
            labels = assignment.labels.unsqueeze(-1)
            remix_primary = (labels * sources).sum(dim=1)
            remix_background = ((1.0 - labels) * sources).sum(dim=1)
            for i in range(len(examples)):
                for ref, est in ((batch.primary[i], remix_primary[i]), (batch.background[i], remix_background[i])):
                    if bool(ref.abs().sum() > 0):
                        scores.append(si_snr(ref.double().numpy(), est.double().numpy()))
    finally:
        separator.train(was_training)
    return float(np.mean(scores)) if scores else 0.0


class TrainingService:
    """
    Runs the optimization loops and writes checkpoints, validation records and
    a JSON-lines log under `out_dir`.
    """

    def __init__(self, out_dir: Path):
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)

    def _indices(self, generator: torch.Generator, size: int, batch_size: int) -> List[int]:
        return torch.randint(size, (batch_size,), generator=generator).tolist()

    def pretrain_separator(
        self,
        dataset,
        separator_cfg: SeparatorConfig,
        cfg: TrainConfig,
        holdout: Optional[Sequence[MoMExample]] = None,
    ) -> CheckpointInfo:
        """
        MixIT pretraining of the separator on audio-only mixtures of mixtures.

        Args:
            dataset: Indexable examples with a `batch(indices)` method
            separator_cfg: Separator architecture
            cfg: Optimizer and schedule
            holdout: Examples for the final best-assignment SI-SNR report

        Returns:
            CheckpointInfo of the final separator (score is the held-out SI-SNR)
        """
        torch.manual_seed(cfg.seed)
        separator = Separator(separator_cfg)
        optimizer = _optimizer(separator.parameters(), cfg)
        generator = torch.Generator().manual_seed(cfg.seed)
        log = TrainingLog(self.out_dir / TRAIN_LOG)
        tau = cfg.loss.snr_threshold

        losses = []
        progress = tqdm(range(1, cfg.steps + 1), desc="pretrain-sep", leave=False)
        for step in progress:
            batch = collate(dataset.batch(self._indices(generator, len(dataset), cfg.batch_size)))
            sources = separator(batch.mixture)
            loss = mixit_batch(batch.primary, batch.background, sources, tau).loss.mean()
            _check_finite(loss, step)

            optimizer.zero_grad()
            loss.backward()
            optimizer.step()

            losses.append(float(loss))
            log.write(step=step, mixit_loss=float(loss))
            progress.set_postfix(loss=f"{float(loss):.2f}")

        score = best_assignment_si_snr(separator, holdout, tau) if holdout else None
        if score is not None:
            logger.info(f"Separator best-assignment SI-SNR on {len(holdout)} held-out examples: {score:.2f} dB")
        path = save_checkpoint(
            self.out_dir / "separator.npz",
            separator.state_dict(),
            {"step": cfg.steps, "losses": losses, "si_snr": score, "separator": separator_cfg.model_dump()},
        )
        return CheckpointInfo(step=cfg.steps, path=str(path), score=score)

    def train_audio_visual(
        self,
        dataset,
        model: AudioVisualModel,
        cfg: TrainConfig,
        separator_ckpt: Optional[Path] = None,
        validation: Optional[Sequence[MoMExample]] = None,
    ) -> List[CheckpointInfo]:
        """
        Joint training: separate, embed, encode, classify, then MixIT plus the
        weighted classification loss.

        Returns:
            One CheckpointInfo per validation point (every `eval_every` steps and at the end)
        """
        torch.manual_seed(cfg.seed)
        if separator_ckpt is not None:
            restore_module(model.separator, separator_ckpt)
            logger.info(f"Separator initialized from {separator_ckpt}")
        model.finetune_separator(cfg.finetune_separator)
        if cfg.freeze_embedders:
            model.freeze_embedders()

        optimizer = _optimizer(model.parameters(), cfg)
        generator = torch.Generator().manual_seed(cfg.seed)
        log = TrainingLog(self.out_dir / TRAIN_LOG)
        evaluator = EvaluationService(tau=cfg.loss.snr_threshold)
        dtype = next(model.parameters()).dtype
        series: List[CheckpointInfo] = []

        model.train()
        progress = tqdm(range(1, cfg.steps + 1), desc="train", leave=False)
        for step in progress:
            examples = dataset.batch(self._indices(generator, len(dataset), cfg.batch_size))
            batch = collate(examples, dtype)
            out = model(batch.mixture, batch.frames)
            assignment = mixit_batch(batch.primary, batch.background, out.sources, cfg.loss.snr_threshold)
            term, valid = classification_batch(batch.kinds, assignment.labels, out.probs, cfg.loss.probability_clamp)
            totals = torch.stack([
                total_loss(kind, assignment.loss[i], term[i] if bool(valid[i]) else None,
                           cfg.loss.classification_weight)
                for i, kind in enumerate(batch.kinds)
            ])
            loss = totals.mean()
            _check_finite(loss, step)

            optimizer.zero_grad()
            loss.backward()
            optimizer.step()

            entry = {
                "step": step,
                "loss": float(loss),
                "mixit_loss": float(assignment.loss.mean()),
                "classification_loss": float(term[valid].mean()) if bool(valid.any()) else None,
            }
            if validation and (step % cfg.eval_every == 0 or step == cfg.steps):
                info = self._checkpoint(model, step, evaluator.evaluate(model, validation))
                series.append(info)
                entry["score"] = info.score
            log.write(**entry)
            progress.set_postfix(loss=f"{float(loss):.2f}")

        if not series:
            path = save_checkpoint(self.out_dir / f"step_{cfg.steps:06d}.npz", model.state_dict(), {"step": cfg.steps})
            series.append(CheckpointInfo(step=cfg.steps, path=str(path)))
        return series

    def _checkpoint(self, model: AudioVisualModel, step: int, records: List[EvalRecord]) -> CheckpointInfo:
        records_path = write_records(records, self.out_dir / f"records_{step:06d}.csv")
        score = model_selection_score(records)
        path = save_checkpoint(
            self.out_dir / f"step_{step:06d}.npz", model.state_dict(), {"step": step, "score": score}
        )
        logger.info(f"Step {step}: model-selection score {score:.2f} dB")
        return CheckpointInfo(step=step, path=str(path), score=score, records_path=str(records_path))

    def select_checkpoint(
        self,
        series: Sequence[CheckpointInfo],
        val_records: Optional[Dict[int, Sequence[EvalRecord]]] = None,
    ) -> CheckpointInfo:
        """
        Checkpoint maximizing min(median SNR, median OSR); ties go to the earliest step.
        The winner is copied to best.npz.
        """
        if not series:
            raise ContractException("No checkpoints to select from")
        best: Optional[CheckpointInfo] = None
        best_score = -np.inf
        for info in sorted(series, key=lambda c: c.step):
            score = model_selection_score(val_records[info.step]) if val_records else info.score
            if score is None:
                raise ContractException(f"Checkpoint at step {info.step} has no validation score")
            if score > best_score:
                best, best_score = info, score
        winner = best.model_copy(update={"score": best_score})
        copy_checkpoint(Path(winner.path), self.out_dir / BEST_CHECKPOINT)
        logger.info(f"Selected checkpoint at step {winner.step} with score {best_score:.2f} dB")
        return winner
