"""
Gradient Audit Service - finite-difference checks of miniature double-precision networks
"""
import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, Tuple

import torch

from audioscope.exceptions import ConfigException, GradientCheckException
from audioscope.models.configs import AttentionConfig, AttentionVariant, EmbeddingConfig, SeparatorConfig
from audioscope.networks.attention import build_encoder
from audioscope.networks.classifier import OnScreenClassifier
from audioscope.networks.embedders import AudioEmbedder, VideoEmbedder
from audioscope.networks.losses import active_combinations_batch
from audioscope.networks.separator import Separator
from audioscope.numerics.gradcheck import grad_check_module
from audioscope.numerics.tensor import Axis, FeatureTensor

logger = logging.getLogger(__name__)

GRADIENT_TOLERANCE = 1e-4
# Key-projection biases shift every score of a query equally and get exactly zero gradient
AUDIT_FLOOR = 1e-6

# Miniature dimensions
MINI_SOURCES = 2
MINI_GRID = 4
MINI_FRAMES = 3
MINI_DEPTH = 8
MINI_HEADS = 2
MINI_BLOCKS = 2


@dataclass
class GradientReport:
    module: str
    variant: str
    errors: Dict[str, float] = field(default_factory=dict)
    tolerance: float = GRADIENT_TOLERANCE

    @property
    def max_error(self) -> float:
        return max(self.errors.values(), default=0.0)

    @property
    def passed(self) -> bool:
        return self.max_error < self.tolerance

    def to_dict(self) -> Dict[str, object]:
        return {
            "module": self.module,
            "variant": self.variant,
            "max_relative_error": self.max_error,
            "tolerance": self.tolerance,
            "passed": self.passed,
            "errors": self.errors,
        }


def _random_input(shape, generator: torch.Generator) -> torch.Tensor:
    return torch.randn(*shape, generator=generator, dtype=torch.float64)


def _attention(variant: AttentionVariant, generator: torch.Generator) -> Tuple[torch.nn.Module, Callable, tuple]:
    cfg = AttentionConfig(num_heads=MINI_HEADS, depth=MINI_DEPTH, num_blocks=MINI_BLOCKS,
                          dropout_rate=0.0, variant=variant)
    encoder = build_encoder(cfg).double().eval()
    z_a = _random_input((MINI_SOURCES, MINI_FRAMES, MINI_DEPTH), generator).requires_grad_(True)
    z_v = _random_input((MINI_GRID, MINI_FRAMES, MINI_DEPTH), generator).requires_grad_(True)
    weights = _random_input((MINI_SOURCES, MINI_DEPTH), generator)

    def loss() -> torch.Tensor:
        z = encoder(FeatureTensor(z_a, (Axis.SRC, Axis.TIME, Axis.DEPTH)),
                    FeatureTensor(z_v, (Axis.SPACE, Axis.TIME, Axis.DEPTH)))
        return torch.mean(z.data * weights)

    return encoder, loss, (z_a, z_v)


def _separator(generator: torch.Generator) -> Tuple[torch.nn.Module, Callable, tuple]:
    cfg = SeparatorConfig(num_sources=MINI_SOURCES, window=8, hop=4, bases=4, hidden_channels=4,
                          kernel_size=3, dilations=(1, 2))
    separator = Separator(cfg).double()
    mixture = _random_input((1, 48), generator)
    weights = _random_input((1, MINI_SOURCES, 48), generator)

    def loss() -> torch.Tensor:
        return torch.mean(separator(mixture) * weights)

    return separator, loss, ()


def _embedders(generator: torch.Generator) -> Tuple[torch.nn.Module, Callable, tuple]:
    cfg = EmbeddingConfig(sample_rate=800, depth=MINI_DEPTH, grid_side=2, mel_bins=4, video_fps=8,
                          frame_size=8, audio_channels=2, video_channels=2, video_strides=(2, 2))
    embedders = torch.nn.ModuleDict({"audio": AudioEmbedder(cfg), "video": VideoEmbedder(cfg)}).double()
    sources = _random_input((1, MINI_SOURCES, 100), generator)
    frames = torch.rand(1, MINI_FRAMES, 8, 8, 1, generator=generator, dtype=torch.float64)
    weights_a = _random_input((1, MINI_SOURCES, MINI_FRAMES, MINI_DEPTH), generator)
    weights_v = _random_input((1, 4, MINI_FRAMES, MINI_DEPTH), generator)

    def loss() -> torch.Tensor:
        z_a = embedders["audio"](sources, MINI_FRAMES)
        z_v = embedders["video"](frames)
        return torch.mean(z_a.data * weights_a) + torch.mean(z_v.data * weights_v)

    return embedders, loss, ()


def _classifier(generator: torch.Generator) -> Tuple[torch.nn.Module, Callable, tuple]:
    head = OnScreenClassifier(MINI_DEPTH).double()
    z = _random_input((MINI_SOURCES, MINI_DEPTH), generator).requires_grad_(True)
    labels = torch.tensor([[1.0, 0.0]], dtype=torch.float64)

    def loss() -> torch.Tensor:
        _, probs = head(FeatureTensor(z, (Axis.SRC, Axis.DEPTH)))
        return active_combinations_batch(labels, probs.unsqueeze(0))[0].sum()

    return head, loss, (z,)


def audit(module: str, variant: AttentionVariant = AttentionVariant.JOINT_CMA, seed: int = 0) -> GradientReport:
    """
    Gradient check of one network family at miniature size.

    Args:
        module: attention | separator | embedders | classifier
        variant: Encoder variant when module is attention
        seed: Seed for parameters and random inputs
    """
    torch.manual_seed(seed)
    generator = torch.Generator().manual_seed(seed)
    builders = {
        "attention": lambda: _attention(AttentionVariant(variant), generator),
        "separator": lambda: _separator(generator),
        "embedders": lambda: _embedders(generator),
        "classifier": lambda: _classifier(generator),
    }
    if module not in builders:
        raise ConfigException(f"Unknown gradcheck module '{module}', expected one of {sorted(builders)}",
                              key="module")
    network, loss, inputs = builders[module]()
    errors = grad_check_module(network, loss, inputs, floor=AUDIT_FLOOR)
    report = GradientReport(module=module, variant=AttentionVariant(variant).value, errors=errors)
    logger.info(f"Gradient check {module}/{report.variant}: max relative error {report.max_error:.3e}")
    return report


def require_passing(report: GradientReport) -> GradientReport:
    if not report.passed:
        worst = max(report.errors, key=report.errors.get)
        raise GradientCheckException(
            f"Gradient check failed for {report.module}: {worst} has relative error {report.max_error:.3e}",
            details=report.to_dict(),
        )
    return report


__all__ = ["GradientReport", "audit", "require_passing"]
