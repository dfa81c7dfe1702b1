"""
Persistence: checkpoints and on-disk datasets
"""

from .checkpoint_store import copy_checkpoint, load_checkpoint, restore_module, save_checkpoint
from .dataset_store import DirectoryDataset, read_example, write_dataset, write_example
from .records_store import read_records, records_frame, write_records

__all__ = [
    "DirectoryDataset",
    "copy_checkpoint",
    "load_checkpoint",
    "read_example",
    "read_records",
    "records_frame",
    "restore_module",
    "save_checkpoint",
    "write_dataset",
    "write_example",
    "write_records",
]
