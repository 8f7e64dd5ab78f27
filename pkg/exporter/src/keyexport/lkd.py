"""Standalone LKD1 writer.

This mirrors the published wire format so the exporter stays decoupled
from the analysis package; the files it writes are validated there by the
strict reader. Layout (little-endian throughout):

    magic "LKD1" | version u32 | layer u32 | head u32 | seq_len u64
    | head_dim u32 | rotary_stage u8 (0=pre, 1=post) | dtype u8 (0=f32)
    | payload: seq_len * head_dim float32
"""

import struct

import numpy as np

MAGIC = b"LKD1"
VERSION = 1
DTYPE_F32 = 0
STAGE_BYTE = {"pre": 0, "post": 1}

_HEADER = struct.Struct("<4sIIIQIBB")


def write_lkd(path, keys, layer: int, head: int, rotary_stage: str) -> None:
    keys = np.ascontiguousarray(keys, dtype=np.float32)
    if keys.ndim != 2:
        raise ValueError(f"keys must be 2-D, got shape {keys.shape}")
    if rotary_stage not in STAGE_BYTE:
        raise ValueError(f"rotary_stage must be 'pre' or 'post', got {rotary_stage!r}")
    if not np.isfinite(keys).all():
        raise ValueError("keys contain NaN or Inf")
    seq_len, head_dim = keys.shape
    header = _HEADER.pack(
        MAGIC, VERSION, layer, head, seq_len, head_dim,
        STAGE_BYTE[rotary_stage], DTYPE_F32,
    )
    with open(path, "wb") as f:
        f.write(header)
        f.write(keys.astype("<f4", copy=False).tobytes())
