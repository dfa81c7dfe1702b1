"""
Shared command plumbing: datasets, models and JSON artifacts built from settings
"""
import json
import logging
from pathlib import Path
from typing import Any, Dict, List

from audioscope.config import Settings
from audioscope.exceptions import ConfigException
from audioscope.models.audio import ExampleKind, MoMExample
from audioscope.networks.model import AudioVisualModel
from audioscope.services.data_service import SyntheticMoMDataset, evaluation_set, make_example
from audioscope.storage.checkpoint_store import restore_module
from audioscope.storage.dataset_store import DirectoryDataset

logger = logging.getLogger(__name__)

# Synthetic streams are disjoint by seed offset
VALIDATION_OFFSET = 1_000_000
TEST_OFFSET = 2_000_000


def write_json(path: Path, payload: Dict[str, Any]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=str) + "\n")
    return path


def training_dataset(settings: Settings):
    """Dataset directory when `data` is set, otherwise the seeded synthetic stream"""
    if settings.data:
        return DirectoryDataset(Path(settings.data))
    return SyntheticMoMDataset(settings.scene_config(), settings.mode, settings.count, settings.seed)


def validation_examples(settings: Settings) -> List[MoMExample]:
    return evaluation_set(settings.scene_config(), settings.eval_count, settings.seed + VALIDATION_OFFSET)


def heldout_examples(settings: Settings) -> List[MoMExample]:
    if settings.data:
        dataset = DirectoryDataset(Path(settings.data))
        return [dataset[i] for i in range(len(dataset))]
    return evaluation_set(settings.scene_config(), settings.eval_count, settings.seed + TEST_OFFSET)


def heldout_example(settings: Settings) -> MoMExample:
    if settings.data:
        dataset = DirectoryDataset(Path(settings.data))
        if settings.example >= len(dataset):
            raise ConfigException(f"Example {settings.example} outside a dataset of {len(dataset)}", key="example")
        return dataset[settings.example]
    return make_example(settings.scene_config(), ExampleKind.NON, settings.seed + TEST_OFFSET, settings.example)


def build_model(settings: Settings) -> AudioVisualModel:
    return AudioVisualModel(settings.separator_config(), settings.embedding_config(), settings.attention_config())


def load_model(settings: Settings) -> AudioVisualModel:
    if not settings.checkpoint:
        raise ConfigException("This command needs a trained checkpoint", key="checkpoint")
    model = build_model(settings)
    restore_module(model, Path(settings.checkpoint))
    logger.info(f"Loaded audio-visual model from {settings.checkpoint}")
    return model
