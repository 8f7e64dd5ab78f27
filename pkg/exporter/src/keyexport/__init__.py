"""Attention-key exporter: pre/post-rotary key dumps from RoPE decoders."""

__version__ = "0.1.0"

from .extract import (
    EmptyTextError,
    ExportConfig,
    ExportError,
    ModelLoadError,
    ShapeMismatchError,
    export_keys,
)
from .lkd import write_lkd

__all__ = [
    "EmptyTextError",
    "ExportConfig",
    "ExportError",
    "ModelLoadError",
    "ShapeMismatchError",
    "export_keys",
    "write_lkd",
]
