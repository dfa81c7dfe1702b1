"""
Command groups; each registers its subcommands on the shared parser
"""

from . import bench, data, diagnostics, evaluation, training

COMMAND_GROUPS = (data, training, evaluation, bench, diagnostics)

__all__ = ["COMMAND_GROUPS", "bench", "data", "diagnostics", "evaluation", "training"]
