"""Binary checkpoint format.

Layout::

    8 bytes   magic b"TGSUMCK1"
    4 bytes   format version, little-endian uint32
    8 bytes   header length H, little-endian uint64
    H bytes   UTF-8 JSON header (configs, seed, epoch, vocabulary, tensor index)
    rest      tensors as little-endian float64, concatenated in index order
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CheckpointNotFoundError, CorruptCheckpointError

MAGIC = b"TGSUMCK1"
VERSION = 1
_PREFIX = struct.Struct("<8sIQ")


@dataclass
class ModelCheckpoint:
    params: dict[str, np.ndarray]
    model_config: dict
    train_config: dict
    vocab_hash: str
    seed: int
    epoch: int
    vocabulary: str = ""
    extra: dict = field(default_factory=dict)

    def __eq__(self, other) -> bool:
        if not isinstance(other, ModelCheckpoint):
            return NotImplemented
        return (
            list(self.params) == list(other.params)
            and all(
                a.shape == b.shape and a.tobytes() == b.tobytes()
                for a, b in zip(self.params.values(), other.params.values())
            )
            and self._meta() == other._meta()
        )

    def _meta(self) -> dict:
        return {
            "model_config": self.model_config,
            "train_config": self.train_config,
            "vocab_hash": self.vocab_hash,
            "seed": self.seed,
            "epoch": self.epoch,
            "vocabulary": self.vocabulary,
            "extra": self.extra,
        }

    def to_bytes(self) -> bytes:
        index = []
        blobs = []
        for name, arr in self.params.items():
            a = np.ascontiguousarray(arr, dtype="<f8")
            index.append({"name": name, "shape": list(a.shape)})
            blobs.append(a.tobytes())
        header = json.dumps({**self._meta(), "tensors": index}, sort_keys=True).encode("utf-8")
        return _PREFIX.pack(MAGIC, VERSION, len(header)) + header + b"".join(blobs)

    @classmethod
    def from_bytes(cls, raw: bytes) -> "ModelCheckpoint":
        if len(raw) < _PREFIX.size or raw[:8] != MAGIC:
            raise CorruptCheckpointError("not a checkpoint: bad magic header")
        _, version, hlen = _PREFIX.unpack_from(raw)
        if version != VERSION:
            raise CorruptCheckpointError(f"unsupported checkpoint version {version}")
        start = _PREFIX.size
        try:
            header = json.loads(raw[start : start + hlen].decode("utf-8"))
        except (UnicodeDecodeError, ValueError) as exc:
            raise CorruptCheckpointError(f"unreadable checkpoint header: {exc}") from None
        offset = start + hlen
        params = {}
        for entry in header.pop("tensors"):
            shape = tuple(entry["shape"])
            n = int(np.prod(shape, dtype=np.int64)) * 8
            if offset + n > len(raw):
                raise CorruptCheckpointError(f"truncated checkpoint at tensor {entry['name']!r}")
            params[entry["name"]] = np.frombuffer(raw, dtype="<f8", count=n // 8, offset=offset).reshape(shape).astype(np.float64)
            offset += n
        if offset != len(raw):
            raise CorruptCheckpointError("trailing bytes after tensor data")
        return cls(params=params, **header)

    def save(self, path: str | Path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path: str | Path) -> "ModelCheckpoint":
        p = Path(path)
        if not p.is_file():
            raise CheckpointNotFoundError(f"checkpoint not found: {p}")
        return cls.from_bytes(p.read_bytes())
