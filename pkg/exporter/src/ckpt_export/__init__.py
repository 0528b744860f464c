"""ckpt-export: convert torch checkpoints into NTC model containers."""

from .errors import (
    CheckpointFormatError,
    ExportError,
    MissingCheckpointError,
    ShapeMismatchError,
    UnmatchedParameterError,
)
from .exporter import ExportManifest, export_checkpoint

__all__ = [
    "CheckpointFormatError",
    "ExportError",
    "ExportManifest",
    "MissingCheckpointError",
    "ShapeMismatchError",
    "UnmatchedParameterError",
    "export_checkpoint",
]
