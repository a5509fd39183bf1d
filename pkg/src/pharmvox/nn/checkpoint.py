"""VCPT checkpoint files: magic, version, JSON header, named little-endian f32 tensors."""

from __future__ import annotations

import json
import struct

import numpy as np

from ..chem.tokenizer import Vocabulary
from ..io_utils import atomic_write_bytes
from .model import CaptionerModel, ModelConfig

VCPT_MAGIC = b"VCPT"
VCPT_VERSION = 1


def checkpoint_bytes(model: CaptionerModel, extra=None) -> bytes:
    header = {
        "config": model.config.to_dict(),
        "vocabulary": list(model.vocab.entries),
        "vocabulary_hash": model.vocab.digest(),
        "grid": model.config.grid.to_dict(),
    }
    if extra:
        header.update(extra)
    hbytes = json.dumps(header, sort_keys=True).encode("utf-8")
    parts = [VCPT_MAGIC, struct.pack("<II", VCPT_VERSION, len(hbytes)), hbytes, struct.pack("<I", len(model.params))]
    for name, arr in model.params.items():
        nb = name.encode("utf-8")
        parts.append(struct.pack("<H", len(nb)) + nb)
        parts.append(struct.pack("<I", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return b"".join(parts)


def save_checkpoint(model: CaptionerModel, path, extra=None):
    atomic_write_bytes(path, checkpoint_bytes(model, extra))


def read_checkpoint(data: bytes):
    """Returns (model, header dict)."""
    if data[:4] != VCPT_MAGIC:
        raise ValueError("not a VCPT checkpoint (bad magic)")
    version, hlen = struct.unpack_from("<II", data, 4)
    if version != VCPT_VERSION:
        raise ValueError(f"unsupported VCPT version {version}")
    off = 12
    header = json.loads(data[off:off + hlen].decode("utf-8"))
    off += hlen
    (count,) = struct.unpack_from("<I", data, off)
    off += 4
    params = {}
    for _ in range(count):
        (nlen,) = struct.unpack_from("<H", data, off)
        off += 2
        name = data[off:off + nlen].decode("utf-8")
        off += nlen
        (rank,) = struct.unpack_from("<I", data, off)
        off += 4
        dims = struct.unpack_from(f"<{rank}I", data, off)
        off += 4 * rank
        n = int(np.prod(dims)) if rank else 1
        params[name] = np.frombuffer(data, dtype="<f4", count=n, offset=off).reshape(dims).astype(np.float32)
        off += 4 * n
    vocab = Vocabulary(tuple(header["vocabulary"]))
    if vocab.digest() != header["vocabulary_hash"]:
        raise ValueError("vocabulary hash mismatch")
    model = CaptionerModel(ModelConfig.from_dict(header["config"]), vocab, params)
    return model, header


def load_checkpoint(path):
    with open(path, "rb") as fh:
        return read_checkpoint(fh.read())
