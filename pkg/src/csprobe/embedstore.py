"""The CSEM binary container for per-layer embedding sets, plus pooling helpers.

Layout (little-endian throughout):

    magic "CSEM" (4 bytes)
    u16 version = 1
    u16 reserved = 0
    u32 header_len
    header_len bytes of UTF-8 JSON {"model", "layer", "kind", "dim", "count"}
    count records, each:
        u32 id_len
        id_len bytes UTF-8 sentence id
        u32 n_rows
        n_rows * dim IEEE-754 32-bit floats, row-major

One container holds exactly one (model, layer, kind) triple. Canonical files
order records by id; write_container always emits canonical files, so
write(read(f)) reproduces f byte for byte when f is canonical.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAGIC = b"CSEM"
VERSION = 1
KINDS = ("word", "sentence_cls", "sentence_mean", "probe_matrix")
_SENTENCE_KINDS = ("sentence_cls", "sentence_mean")


class ContainerError(ValueError):
    """Base class for CSEM container format violations."""


class BadMagicError(ContainerError):
    pass


class UnsupportedVersionError(ContainerError):
    pass


class TruncatedContainerError(ContainerError):
    pass


class NonFiniteValueError(ContainerError):
    pass


@dataclass
class EmbeddingSet:
    """Per-layer embedding records keyed by sentence id.

    Matrices are float32 with exactly `dim` columns; sentence-level kinds
    carry one row per record.
    """

    model_name: str
    layer: int
    kind: str
    dim: int
    records: dict[str, np.ndarray] = field(default_factory=dict)

    def validate(self) -> None:
        if self.kind not in KINDS:
            raise ContainerError(f"unknown kind {self.kind!r}; expected one of {KINDS}")
        if self.layer < 0:
            raise ContainerError(f"layer must be >= 0, got {self.layer}")
        if self.dim <= 0:
            raise ContainerError(f"dim must be > 0, got {self.dim}")
        for rid, mat in self.records.items():
            if mat.ndim != 2 or mat.shape[1] != self.dim:
                raise ContainerError(
                    f"record {rid!r} has shape {mat.shape}, expected (*, {self.dim})"
                )
            if mat.dtype != np.float32:
                raise ContainerError(f"record {rid!r} has dtype {mat.dtype}, expected float32")
            if self.kind in _SENTENCE_KINDS and mat.shape[0] != 1:
                raise ContainerError(
                    f"record {rid!r}: kind {self.kind} requires exactly 1 row, got {mat.shape[0]}"
                )
            if not np.isfinite(mat).all():
                raise NonFiniteValueError(f"record {rid!r} contains NaN or Inf")

    def __len__(self) -> int:
        return len(self.records)


def write_container(eset: EmbeddingSet, path: str | Path) -> None:
    """Write a validated EmbeddingSet, records sorted by id for canonical output."""
    eset.validate()
    header = json.dumps(
        {
            "model": eset.model_name,
            "layer": eset.layer,
            "kind": eset.kind,
            "dim": eset.dim,
            "count": len(eset.records),
        },
        sort_keys=True,
        separators=(",", ":"),
    ).encode("utf-8")
    parts = [MAGIC, struct.pack("<HHI", VERSION, 0, len(header)), header]
    for rid in sorted(eset.records):
        rid_bytes = rid.encode("utf-8")
        mat = np.ascontiguousarray(eset.records[rid], dtype=np.float32)
        parts.append(struct.pack("<I", len(rid_bytes)))
        parts.append(rid_bytes)
        parts.append(struct.pack("<I", mat.shape[0]))
        parts.append(mat.tobytes(order="C"))
    Path(path).write_bytes(b"".join(parts))


def read_container(path: str | Path) -> EmbeddingSet:
    """Parse a CSEM file, rejecting malformed headers, truncation, and non-finite floats."""
    buf = Path(path).read_bytes()
    if len(buf) < 12:
        raise TruncatedContainerError(f"{path}: file shorter than the fixed header")
    if buf[:4] != MAGIC:
        raise BadMagicError(f"{path}: bad magic {buf[:4]!r}")
    version, reserved, header_len = struct.unpack_from("<HHI", buf, 4)
    if version != VERSION:
        raise UnsupportedVersionError(f"{path}: unsupported version {version}")
    if reserved != 0:
        raise ContainerError(f"{path}: reserved field must be 0, got {reserved}")
    pos = 12
    if pos + header_len > len(buf):
        raise TruncatedContainerError(f"{path}: declared header overruns the file")
    try:
        header = json.loads(buf[pos : pos + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ContainerError(f"{path}: malformed JSON header: {exc}") from exc
    pos += header_len
    for key in ("model", "layer", "kind", "dim", "count"):
        if key not in header:
            raise ContainerError(f"{path}: header missing field {key!r}")
    kind = header["kind"]
    if kind not in KINDS:
        raise ContainerError(f"{path}: unknown kind {kind!r}")
    dim = int(header["dim"])
    count = int(header["count"])
    if dim <= 0 or count < 0:
        raise ContainerError(f"{path}: invalid dim={dim} or count={count}")

    records: dict[str, np.ndarray] = {}
    row_bytes = 4 * dim
    for _ in range(count):
        # every size is checked against the remaining buffer before slicing,
        # so a corrupt count or length can never trigger an oversized read
        if pos + 4 > len(buf):
            raise TruncatedContainerError(f"{path}: truncated record (id length)")
        (id_len,) = struct.unpack_from("<I", buf, pos)
        pos += 4
        if pos + id_len > len(buf):
            raise TruncatedContainerError(f"{path}: truncated record (id bytes)")
        rid = buf[pos : pos + id_len].decode("utf-8")
        pos += id_len
        if pos + 4 > len(buf):
            raise TruncatedContainerError(f"{path}: truncated record {rid!r} (row count)")
        (n_rows,) = struct.unpack_from("<I", buf, pos)
        pos += 4
        payload = n_rows * row_bytes
        if pos + payload > len(buf):
            raise TruncatedContainerError(f"{path}: truncated record {rid!r} (payload)")
        mat = np.frombuffer(buf, dtype="<f4", count=n_rows * dim, offset=pos).reshape(n_rows, dim)
        pos += payload
        if not np.isfinite(mat).all():
            raise NonFiniteValueError(f"{path}: record {rid!r} contains NaN or Inf")
        if rid in records:
            raise ContainerError(f"{path}: duplicate record id {rid!r}")
        records[rid] = mat.copy()
    if pos != len(buf):
        raise ContainerError(f"{path}: {len(buf) - pos} trailing bytes after last record")

    eset = EmbeddingSet(
        model_name=str(header["model"]),
        layer=int(header["layer"]),
        kind=kind,
        dim=dim,
        records=records,
    )
    eset.validate()
    return eset


def mean_pool(words: np.ndarray) -> np.ndarray:
    """Arithmetic mean over word rows, computed in float64."""
    mat = np.asarray(words, dtype=np.float64)
    if mat.ndim != 2 or mat.shape[0] < 1:
        raise ValueError(f"need a non-empty (n, dim) matrix, got shape {mat.shape}")
    return mat.mean(axis=0)
