"""Persistence: atomic file writes and the binary checkpoint format.

Checkpoint layout (all integers little-endian uint32)::

    b"CSLM" | version | header_len | header (UTF-8 key=value lines)
    then for each of E, W_ih, W_hh, b_ih, b_hh, W_out, b_out:
        rows | cols | rows*cols float32 LE values (row-major)

Bias vectors are stored as single-column matrices.
"""

from __future__ import annotations

import os
import struct
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .model import GATE_ORDER, PARAM_NAMES, LstmLmParams

MAGIC = b"CSLM"
VERSION = 1
_U32 = struct.Struct("<I")


class CheckpointError(ValueError):
    pass


def atomic_write_bytes(path: str | Path, data: bytes) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: str | Path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


@dataclass
class Checkpoint:
    params: LstmLmParams
    vocab_hash: str
    seed: int
    regime: str
    epoch: int
    extra: dict[str, str] = field(default_factory=dict)

    def header(self) -> dict[str, str]:
        d = self.params.dims
        return {
            "vocab_size": str(d.vocab_size),
            "emb_dim": str(d.emb_dim),
            "hidden_dim": str(d.hidden_dim),
            "gate_order": GATE_ORDER,
            "vocab_sha256": self.vocab_hash,
            "seed": str(self.seed),
            "regime": self.regime,
            "epoch": str(self.epoch),
            **self.extra,
        }


def encode_checkpoint(ckpt: Checkpoint) -> bytes:
    header = "".join(f"{k}={v}\n" for k, v in ckpt.header().items()).encode("utf-8")
    parts = [MAGIC, _U32.pack(VERSION), _U32.pack(len(header)), header]
    for _, arr in ckpt.params.items():
        mat = arr.reshape(arr.shape[0], -1) if arr.ndim == 2 else arr.reshape(-1, 1)
        parts.append(_U32.pack(mat.shape[0]) + _U32.pack(mat.shape[1]))
        parts.append(np.ascontiguousarray(mat, dtype="<f4").tobytes())
    return b"".join(parts)


def decode_checkpoint(data: bytes) -> Checkpoint:
    pos = 0

    def take(n: int, what: str) -> bytes:
        nonlocal pos
        if pos + n > len(data):
            raise CheckpointError(
                f"corrupt checkpoint: truncated while reading {what} at byte offset {pos}")
        chunk = data[pos:pos + n]
        pos += n
        return chunk

    if take(4, "magic") != MAGIC:
        raise CheckpointError("corrupt checkpoint: bad magic at byte offset 0")
    version = _U32.unpack(take(4, "version"))[0]
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    hlen = _U32.unpack(take(4, "header length"))[0]
    header_start = pos
    try:
        text = take(hlen, "header").decode("utf-8")
    except UnicodeDecodeError as e:
        raise CheckpointError(
            f"corrupt checkpoint: header not UTF-8 at byte offset {header_start + e.start}") from e
    header = dict(line.split("=", 1) for line in text.splitlines() if line)
    if header.get("gate_order") != GATE_ORDER:
        raise CheckpointError(f"unsupported gate order {header.get('gate_order')!r}")

    arrays = []
    for name in PARAM_NAMES:
        rows, cols = _U32.unpack(take(4, f"{name} rows"))[0], _U32.unpack(take(4, f"{name} cols"))[0]
        raw = take(4 * rows * cols, f"{name} payload")
        arr = np.frombuffer(raw, dtype="<f4").astype(np.float32).reshape(rows, cols)
        arrays.append(arr.reshape(-1) if name.startswith("b_") else arr)
    if pos != len(data):
        raise CheckpointError(f"corrupt checkpoint: trailing bytes at byte offset {pos}")
    params = LstmLmParams(*arrays)
    d = params.dims
    declared = (int(header["vocab_size"]), int(header["emb_dim"]), int(header["hidden_dim"]))
    if declared != (d.vocab_size, d.emb_dim, d.hidden_dim):
        raise CheckpointError(f"header dims {declared} disagree with payload {d}")
    params.validate()
    known = {"vocab_size", "emb_dim", "hidden_dim", "gate_order", "vocab_sha256", "seed",
             "regime", "epoch"}
    return Checkpoint(params, header["vocab_sha256"], int(header["seed"]), header["regime"],
                      int(header["epoch"]), {k: v for k, v in header.items() if k not in known})


def save_checkpoint(path: str | Path, ckpt: Checkpoint) -> None:
    atomic_write_bytes(path, encode_checkpoint(ckpt))


def load_checkpoint(path: str | Path) -> Checkpoint:
    return decode_checkpoint(Path(path).read_bytes())


def payload_bytes(data: bytes) -> bytes:
    """The parameter section of an encoded checkpoint (everything after the header)."""
    hlen = _U32.unpack(data[8:12])[0]
    return data[12 + hlen:]
