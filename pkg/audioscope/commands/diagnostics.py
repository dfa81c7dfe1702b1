"""
gradcheck / export-attn - gradient audits and attention heat maps
"""
import argparse
import logging
from pathlib import Path
from typing import Any, Dict

from audioscope.commands.common import heldout_example, load_model, write_json
from audioscope.config import Settings
from audioscope.models.configs import AttentionVariant
from audioscope.services.attention_export_service import export_attention
from audioscope.services.gradient_audit_service import audit, require_passing

logger = logging.getLogger(__name__)

GRADCHECK_FILE = "gradcheck.json"
MODULES = ("attention", "separator", "embedders", "classifier")


def gradient_check(settings: Settings) -> Dict[str, Any]:
    """Fails with a runtime error when any tensor exceeds the tolerance"""
    report = audit(settings.module, settings.variant, settings.seed)
    payload = report.to_dict()
    write_json(Path(settings.out) / GRADCHECK_FILE, payload)
    require_passing(report)
    return payload


def export_attention_maps(settings: Settings) -> Dict[str, Any]:
    model = load_model(settings)
    written = export_attention(model, heldout_example(settings), Path(settings.out))
    return {"maps": len(written), "example": settings.example, "out": settings.out}


def register(subparsers, common: argparse.ArgumentParser) -> None:
    check = subparsers.add_parser("gradcheck", parents=[common], help="Finite-difference gradient audit")
    check.add_argument("--module", choices=MODULES, default=argparse.SUPPRESS)
    check.add_argument("--variant", choices=[v.value for v in AttentionVariant], default=argparse.SUPPRESS)
    check.set_defaults(handler=gradient_check)

    export = subparsers.add_parser("export-attn", parents=[common], help="Write per-frame attention heat maps")
    export.add_argument("--checkpoint", default=argparse.SUPPRESS)
    export.add_argument("--data", default=argparse.SUPPRESS)
    export.add_argument("--example", type=int, default=argparse.SUPPRESS)
    export.set_defaults(handler=export_attention_maps)
