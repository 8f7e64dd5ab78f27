"""Binary key-dump (LKD1) and projection (LKP1) formats, plus the seeded
synthetic low-rank key generator.

Both formats are little-endian with fixed-width fields and raw float32
payloads, so round-trips are bit-exact and the files are readable from any
language. LKD1 layout:

    magic "LKD1" | version u32 | layer u32 | head u32 | seq_len u64
    | head_dim u32 | rotary_stage u8 (0=pre, 1=post) | dtype u8 (0=f32)
    | payload: seq_len * head_dim float32

LKP1 layout:

    magic "LKP1" | version u32 | layer u32 | head u32 | head_dim u32
    | rotary_stage u8 | eigenvalues: head_dim float32
    | P: head_dim * head_dim float32 (row-major, columns are principal
      directions in descending eigenvalue order)

The synthetic generator draws from numpy's PCG64 stream, so fixtures are
reproducible from (spec fields, seed) alone.
"""

import struct
from dataclasses import dataclass

import numpy as np

from .errors import (
    DomainError,
    DtypeError,
    IntegrityError,
    MagicError,
    NonFiniteError,
    ShapeError,
    StageError,
    TruncationError,
    VersionError,
)

LKD_MAGIC = b"LKD1"
LKP_MAGIC = b"LKP1"
FORMAT_VERSION = 1
DTYPE_F32 = 0

_LKD_HEADER = struct.Struct("<4sIIIQIBB")
_LKP_HEADER = struct.Struct("<4sIIIIB")

_STAGE_TO_BYTE = {"pre": 0, "post": 1}
_BYTE_TO_STAGE = {0: "pre", 1: "post"}


@dataclass(frozen=True)
class KeyDumpHeader:
    layer: int
    head: int
    seq_len: int
    head_dim: int
    rotary_stage: str
    version: int = FORMAT_VERSION
    dtype: int = DTYPE_F32

    def __post_init__(self):
        if self.rotary_stage not in _STAGE_TO_BYTE:
            raise StageError(f"rotary_stage must be 'pre' or 'post', got {self.rotary_stage!r}")
        for name in ("layer", "head", "seq_len", "head_dim"):
            if getattr(self, name) < 0:
                raise DomainError(f"{name} must be nonnegative")


@dataclass(frozen=True)
class SyntheticSpec:
    seq_len: int
    head_dim: int
    intrinsic_rank: int
    noise_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.seq_len < 1 or self.head_dim < 1:
            raise DomainError("seq_len and head_dim must be positive")
        if not 1 <= self.intrinsic_rank <= self.head_dim:
            raise DomainError(
                f"intrinsic_rank {self.intrinsic_rank} outside [1, {self.head_dim}]"
            )
        if self.noise_sigma < 0:
            raise DomainError("noise_sigma must be nonnegative")
        if self.seed < 0:
            raise DomainError("seed must be nonnegative")


def write_key_dump(path, header: KeyDumpHeader, keys) -> None:
    keys = np.ascontiguousarray(keys, dtype=np.float32)
    if keys.ndim != 2 or keys.shape != (header.seq_len, header.head_dim):
        raise ShapeError(
            f"keys shape {keys.shape} does not match header "
            f"({header.seq_len}, {header.head_dim})"
        )
    if not np.isfinite(keys).all():
        raise NonFiniteError("refusing to write non-finite key values")
    blob = _LKD_HEADER.pack(
        LKD_MAGIC,
        header.version,
        header.layer,
        header.head,
        header.seq_len,
        header.head_dim,
        _STAGE_TO_BYTE[header.rotary_stage],
        header.dtype,
    )
    with open(path, "wb") as f:
        f.write(blob)
        f.write(keys.astype("<f4", copy=False).tobytes())


def read_key_dump(path):
    """Read an LKD1 file, validating every header field.

    Returns (KeyDumpHeader, float32 matrix). Each malformed-input class
    raises its own ParseError subclass naming the offending field.
    """
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < _LKD_HEADER.size:
        raise TruncationError(f"file shorter than the {_LKD_HEADER.size}-byte header", "header")
    magic, version, layer, head, seq_len, head_dim, stage_byte, dtype = _LKD_HEADER.unpack_from(raw)
    if magic != LKD_MAGIC:
        raise MagicError(f"bad magic {magic!r}, expected {LKD_MAGIC!r}")
    if version != FORMAT_VERSION:
        raise VersionError(f"unknown version {version}, expected {FORMAT_VERSION}")
    if dtype != DTYPE_F32:
        raise DtypeError(f"unsupported dtype code {dtype}")
    if stage_byte not in _BYTE_TO_STAGE:
        raise StageError(f"invalid rotary_stage byte {stage_byte}")
    expected = seq_len * head_dim * 4
    payload = raw[_LKD_HEADER.size:]
    if len(payload) != expected:
        kind = "truncated" if len(payload) < expected else "oversized"
        raise TruncationError(f"{kind} payload: {len(payload)} bytes, expected {expected}")
    keys = np.frombuffer(payload, dtype="<f4").reshape(seq_len, head_dim)
    keys = np.ascontiguousarray(keys, dtype=np.float32)
    if not np.isfinite(keys).all():
        raise NonFiniteError("payload contains NaN or Inf")
    header = KeyDumpHeader(
        layer=layer,
        head=head,
        seq_len=seq_len,
        head_dim=head_dim,
        rotary_stage=_BYTE_TO_STAGE[stage_byte],
    )
    return header, keys


def write_projection(path, proj) -> None:
    """Persist a calibration.ProjectionSet as LKP1."""
    P = np.ascontiguousarray(proj.P, dtype=np.float32)
    eig = np.ascontiguousarray(proj.eigenvalues, dtype=np.float32)
    d = P.shape[0]
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise ShapeError(f"projection matrix must be square, got {P.shape}")
    if eig.shape != (d,):
        raise ShapeError(f"eigenvalue count {eig.shape} does not match dim {d}")
    blob = _LKP_HEADER.pack(
        LKP_MAGIC,
        FORMAT_VERSION,
        proj.layer,
        proj.head,
        d,
        _STAGE_TO_BYTE[proj.rotary_stage],
    )
    with open(path, "wb") as f:
        f.write(blob)
        f.write(eig.astype("<f4", copy=False).tobytes())
        f.write(P.astype("<f4", copy=False).tobytes())


def read_projection(path):
    """Read an LKP1 file and re-validate it.

    Beyond format checks, the reader enforces integrity: finite values,
    a normalized descending spectrum, and column orthogonality of P within
    1e-3 Frobenius.
    """
    from .calibration import ProjectionSet  # deferred to avoid an import cycle

    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < _LKP_HEADER.size:
        raise TruncationError(f"file shorter than the {_LKP_HEADER.size}-byte header", "header")
    magic, version, layer, head, head_dim, stage_byte = _LKP_HEADER.unpack_from(raw)
    if magic != LKP_MAGIC:
        raise MagicError(f"bad magic {magic!r}, expected {LKP_MAGIC!r}")
    if version != FORMAT_VERSION:
        raise VersionError(f"unknown version {version}, expected {FORMAT_VERSION}")
    if stage_byte not in _BYTE_TO_STAGE:
        raise StageError(f"invalid rotary_stage byte {stage_byte}")
    expected = head_dim * 4 + head_dim * head_dim * 4
    payload = raw[_LKP_HEADER.size:]
    if len(payload) != expected:
        kind = "truncated" if len(payload) < expected else "oversized"
        raise TruncationError(f"{kind} payload: {len(payload)} bytes, expected {expected}")
    eig = np.frombuffer(payload, dtype="<f4", count=head_dim)
    P = np.frombuffer(payload, dtype="<f4", offset=head_dim * 4).reshape(head_dim, head_dim)
    eig = np.ascontiguousarray(eig, dtype=np.float32)
    P = np.ascontiguousarray(P, dtype=np.float32)
    if not (np.isfinite(eig).all() and np.isfinite(P).all()):
        raise NonFiniteError("payload contains NaN or Inf")
    if np.any(eig < -1e-6) or np.any(np.diff(eig.astype(np.float64)) > 1e-6):
        raise IntegrityError("eigenvalues must be nonnegative and descending")
    total = float(eig.astype(np.float64).sum())
    if abs(total - 1.0) > 1e-5:
        raise IntegrityError(f"eigenvalues sum to {total}, expected 1")
    P64 = P.astype(np.float64)
    gram_err = float(np.linalg.norm(P64.T @ P64 - np.eye(head_dim)))
    if gram_err > 1e-3:
        raise IntegrityError(f"projection not orthogonal: ||P'P - I||_F = {gram_err:.2e}")
    return ProjectionSet(
        layer=layer,
        head=head,
        P=P,
        eigenvalues=eig,
        rotary_stage=_BYTE_TO_STAGE[stage_byte],
    )


def gen_synthetic_keys(spec: SyntheticSpec) -> np.ndarray:
    """Draw S x D keys concentrated on a planted r-dimensional subspace.

    K = Z B + sigma * E with Z ~ N(0,1)^(S x r), B an r x D matrix with
    orthonormal rows from a seeded QR, and E ~ N(0,1)^(S x D). The PCG64
    stream makes the output a pure function of the SyntheticSpec fields.
    """
    rng = np.random.default_rng(spec.seed)
    z = rng.standard_normal((spec.seq_len, spec.intrinsic_rank))
    basis = rng.standard_normal((spec.head_dim, spec.intrinsic_rank))
    q, r = np.linalg.qr(basis)
    # canonical sign: positive R diagonal, so the basis is seed-determined
    q = q * np.where(np.diag(r) < 0.0, -1.0, 1.0)
    noise = rng.standard_normal((spec.seq_len, spec.head_dim))
    keys = z @ q.T + spec.noise_sigma * noise
    return keys.astype(np.float32)
