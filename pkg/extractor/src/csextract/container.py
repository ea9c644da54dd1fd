"""Standalone CSEM container writer/reader.

This is a deliberately independent implementation of the format shared with
the analysis toolkit (which validates these files with its own reader):

    magic "CSEM" | u16 version=1 | u16 reserved=0 | u32 header_len
    header_len bytes UTF-8 JSON {"model","layer","kind","dim","count"}
    count records: u32 id_len | id UTF-8 | u32 n_rows | n_rows*dim float32 LE

Records are written sorted by id (canonical form). All multi-byte values are
little-endian.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"CSEM"
VERSION = 1
KINDS = ("word", "sentence_cls", "sentence_mean", "probe_matrix")


def write_csem(
    path: str | Path,
    model: str,
    layer: int,
    kind: str,
    dim: int,
    records: dict[str, np.ndarray],
) -> None:
    if kind not in KINDS:
        raise ValueError(f"unknown kind {kind!r}")
    header = json.dumps(
        {"model": model, "layer": layer, "kind": kind, "dim": dim, "count": len(records)},
        sort_keys=True,
        separators=(",", ":"),
    ).encode("utf-8")
    chunks = [MAGIC, struct.pack("<HHI", VERSION, 0, len(header)), header]
    for rid in sorted(records):
        mat = np.ascontiguousarray(records[rid], dtype=np.float32)
        if mat.ndim != 2 or mat.shape[1] != dim:
            raise ValueError(f"record {rid!r}: shape {mat.shape} does not match dim {dim}")
        if not np.isfinite(mat).all():
            raise ValueError(f"record {rid!r}: non-finite values")
        rid_bytes = rid.encode("utf-8")
        chunks.append(struct.pack("<I", len(rid_bytes)))
        chunks.append(rid_bytes)
        chunks.append(struct.pack("<I", mat.shape[0]))
        chunks.append(mat.tobytes(order="C"))
    Path(path).write_bytes(b"".join(chunks))


def read_csem(path: str | Path) -> tuple[dict, dict[str, np.ndarray]]:
    """Parse a CSEM file into (header, records). Used for self-checks."""
    buf = Path(path).read_bytes()
    if buf[:4] != MAGIC:
        raise ValueError(f"{path}: bad magic")
    version, _, header_len = struct.unpack_from("<HHI", buf, 4)
    if version != VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    header = json.loads(buf[12 : 12 + header_len].decode("utf-8"))
    pos = 12 + header_len
    dim = int(header["dim"])
    records: dict[str, np.ndarray] = {}
    for _ in range(int(header["count"])):
        (id_len,) = struct.unpack_from("<I", buf, pos)
        pos += 4
        rid = buf[pos : pos + id_len].decode("utf-8")
        pos += id_len
        (n_rows,) = struct.unpack_from("<I", buf, pos)
        pos += 4
        records[rid] = (
            np.frombuffer(buf, dtype="<f4", count=n_rows * dim, offset=pos)
            .reshape(n_rows, dim)
            .copy()
        )
        pos += 4 * n_rows * dim
    if pos != len(buf):
        raise ValueError(f"{path}: trailing bytes")
    return header, records
