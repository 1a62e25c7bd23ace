"""Binary checkpoints: magic ``VSRN``, version, config text, named float64 arrays."""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import CorruptionError, FormatError, check_envelope, seal

MAGIC = b"VSRN"
VERSION = 1

__all__ = ["Checkpoint", "save_checkpoint", "load_checkpoint", "FormatError", "CorruptionError"]


@dataclass
class Checkpoint:
    config_text: str = ""
    params: dict[str, np.ndarray] = field(default_factory=dict)
    epoch: int = 0
    val_rsum: float = 0.0
    version: int = VERSION

    def equals(self, other: "Checkpoint") -> bool:
        """Bitwise equality of every field and array."""
        if (self.config_text, self.epoch, self.version) != (
            other.config_text, other.epoch, other.version
        ):
            return False
        if struct.pack("<d", self.val_rsum) != struct.pack("<d", other.val_rsum):
            return False
        if list(self.params) != list(other.params):
            return False
        return all(
            a.shape == b.shape and a.astype("<f8").tobytes() == b.astype("<f8").tobytes()
            for a, b in zip(self.params.values(), other.params.values())
        )


def _text(s: str) -> bytes:
    raw = s.encode("utf-8")
    return struct.pack("<I", len(raw)) + raw


def checkpoint_bytes(ckpt: Checkpoint) -> bytes:
    parts = [MAGIC, struct.pack("<I", ckpt.version), _text(ckpt.config_text)]
    parts.append(struct.pack("<Id", ckpt.epoch, ckpt.val_rsum))
    parts.append(struct.pack("<I", len(ckpt.params)))
    for name, arr in ckpt.params.items():
        arr = np.asarray(arr, dtype=np.float64)
        parts.append(_text(name))
        parts.append(struct.pack(f"<I{arr.ndim}I", arr.ndim, *arr.shape))
        parts.append(arr.astype("<f8").tobytes(order="C"))
    return seal(parts)


def save_checkpoint(ckpt: Checkpoint, path) -> Path:
    path = Path(path)
    path.write_bytes(checkpoint_bytes(ckpt))
    return path


def load_checkpoint(path) -> Checkpoint:
    path = Path(path)
    r = check_envelope(path.read_bytes(), MAGIC, VERSION, str(path))
    config_text = r.text()
    epoch = r.u32()
    (val_rsum,) = struct.unpack("<d", r.take(8))
    params = {}
    for _ in range(r.u32()):
        name = r.text()
        if name in params:
            raise FormatError(f"{path}: parameter {name!r} stored twice")
        rank = r.u32()
        shape = struct.unpack(f"<{rank}I", r.take(4 * rank))
        params[name] = r.f64(int(np.prod(shape, dtype=np.int64))).reshape(shape)
    if r.pos != len(r.data):
        raise CorruptionError(f"{path}: {len(r.data) - r.pos} trailing bytes")
    return Checkpoint(config_text, params, epoch, val_rsum, VERSION)
