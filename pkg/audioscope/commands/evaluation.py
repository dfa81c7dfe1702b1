"""
eval / calibrate - evaluation records, reports and OSR-target calibration
"""
import argparse
import logging
from pathlib import Path
from typing import Any, Dict

from audioscope.commands.common import heldout_examples, load_model, write_json
from audioscope.config import Settings
from audioscope.exceptions import ConfigException
from audioscope.services.calibration_service import calibration_service
from audioscope.services.evaluation_service import EvaluationService
from audioscope.services.metrics_service import rescore, summary
from audioscope.storage.records_store import read_records, write_records

logger = logging.getLogger(__name__)

RECORDS_FILE = "records.csv"
SUMMARY_FILE = "summary.json"
REPORT_FILE = "report.json"
CALIBRATION_FILE = "calibration.json"


def evaluate(settings: Settings) -> Dict[str, Any]:
    """
    Records for the held-out set, a summary at the configured OSR target and the
    full multi-target report.
    """
    out = Path(settings.out)
    model = load_model(settings)
    service = EvaluationService(tau=settings.snr_threshold)
    records = service.evaluate(model, heldout_examples(settings))
    write_records(records, out / RECORDS_FILE)

    result = calibration_service.calibrate(records, settings.target_osr)
    payload = {
        "uncalibrated": summary(records, 0.0),
        "calibrated": summary(rescore(records, result.theta), result.theta),
        "calibration": result.model_dump(),
    }
    write_json(out / SUMMARY_FILE, payload)
    write_json(out / REPORT_FILE, service.report(records, settings.calibration_target_list()))
    return payload


def calibrate(settings: Settings) -> Dict[str, Any]:
    """Offset θ for a stored records file"""
    if not settings.records:
        raise ConfigException("calibrate needs --records", key="records")
    records = read_records(Path(settings.records))
    result = calibration_service.calibrate(records, settings.target_osr)
    payload = result.model_dump()
    write_json(Path(settings.out) / CALIBRATION_FILE, payload)
    if not result.converged:
        logger.warning(f"Target {settings.target_osr} dB not reached; closest median OSR "
                       f"{result.achieved_median_osr:.3f} dB")
    return payload


def register(subparsers, common: argparse.ArgumentParser) -> None:
    evaluation = subparsers.add_parser("eval", parents=[common], help="Evaluate a checkpoint on held-out examples")
    evaluation.add_argument("--checkpoint", default=argparse.SUPPRESS)
    evaluation.add_argument("--data", default=argparse.SUPPRESS)
    evaluation.add_argument("--target-osr", dest="target_osr", type=float, default=argparse.SUPPRESS)
    evaluation.set_defaults(handler=evaluate)

    calibration = subparsers.add_parser("calibrate", parents=[common], help="Fit θ to a target median OSR")
    calibration.add_argument("--records", default=argparse.SUPPRESS)
    calibration.add_argument("--target-osr", dest="target_osr", type=float, default=argparse.SUPPRESS)
    calibration.set_defaults(handler=calibrate)
