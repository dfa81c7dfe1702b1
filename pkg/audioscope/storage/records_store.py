"""
Records Store - EvalRecord sets as CSV, one row per example
"""
import json
import logging
from pathlib import Path
from typing import List, Sequence

import pandas as pd

from audioscope.exceptions import DatasetException
from audioscope.models.records import EvalRecord

logger = logging.getLogger(__name__)

LIST_COLUMNS = ("logits", "probs", "powers", "labels", "gram", "reference_cross")
COLUMNS = ("example_id", "kind", "snr", "si_snr", "osr", *LIST_COLUMNS,
           "mixture_power", "reference_power")


def records_frame(records: Sequence[EvalRecord]) -> pd.DataFrame:
    rows = []
    for record in records:
        row = record.model_dump(mode="json")
        for column in LIST_COLUMNS:
            row[column] = json.dumps(row[column])
        rows.append(row)
    return pd.DataFrame(rows, columns=list(COLUMNS))


def write_records(records: Sequence[EvalRecord], path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    records_frame(records).to_csv(path, index=False, float_format="%.17g")
    logger.info(f"Wrote {len(records)} evaluation records to {path}")
    return path


def read_records(path: Path) -> List[EvalRecord]:
    path = Path(path)
    if not path.exists():
        raise DatasetException("Records file not found", path=str(path))
    try:
        frame = pd.read_csv(path, dtype={"example_id": str}, float_precision="round_trip")
        frame = frame.astype(object).where(frame.notna(), None)
        records = []
        for row in frame.to_dict(orient="records"):
            for column in LIST_COLUMNS:
                row[column] = json.loads(row[column])
            records.append(EvalRecord(**row))
    except (KeyError, ValueError) as e:
        logger.error(f"Failed to parse records {path}: {e}")
        raise DatasetException(f"Malformed records file: {e}", path=str(path))
    return records
