"""SNWT parameter files.

Layout: magic ``SNWT``, u32 version, u32 in_channels, u32 features,
u32 blocks, u8 batch_norm flag, then a self-describing tensor table:
u32 entry count, and per entry a u16 name length, the UTF-8 name, a u8 rank,
rank u32 dims, and the little-endian f32 payload. Running statistics are
stored as ordinary entries with a ``running:`` name prefix.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from ..errors import FormatError
from .model import MaskNetConfig, MaskNetParams

_MAGIC = b"SNWT"
_VERSION = 1


def _write_entry(fh, name: str, value: np.ndarray) -> None:
    encoded = name.encode("utf-8")
    fh.write(struct.pack("<H", len(encoded)))
    fh.write(encoded)
    fh.write(struct.pack("<B", value.ndim))
    fh.write(struct.pack(f"<{value.ndim}I", *value.shape))
    fh.write(value.astype("<f4").tobytes())


def save_params(path, params: MaskNetParams) -> None:
    cfg = params.config
    entries = list(params.tensors.items()) + [
        (f"running:{k}", v) for k, v in params.running_stats.items()
    ]
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<IIII", _VERSION, cfg.in_channels, cfg.features, cfg.blocks))
        fh.write(struct.pack("<B", int(cfg.batch_norm)))
        fh.write(struct.pack("<I", len(entries)))
        for name, value in entries:
            _write_entry(fh, name, value)


def load_params(path) -> MaskNetParams:
    raw = Path(path).read_bytes()
    if raw[:4] != _MAGIC:
        raise FormatError(f"{path}: not an SNWT parameter file")
    version, in_channels, features, blocks = struct.unpack("<IIII", raw[4:20])
    if version != _VERSION:
        raise FormatError(f"{path}: unsupported SNWT version {version}")
    batch_norm = bool(raw[20])
    (count,) = struct.unpack("<I", raw[21:25])
    pos = 25
    tensors: dict[str, np.ndarray] = {}
    running: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<H", raw[pos : pos + 2])
        pos += 2
        name = raw[pos : pos + name_len].decode("utf-8")
        pos += name_len
        rank = raw[pos]
        pos += 1
        dims = struct.unpack(f"<{rank}I", raw[pos : pos + 4 * rank])
        pos += 4 * rank
        size = int(np.prod(dims)) if rank else 1
        value = np.frombuffer(raw[pos : pos + 4 * size], dtype="<f4").astype(np.float64).reshape(dims)
        pos += 4 * size
        if name.startswith("running:"):
            running[name[len("running:") :]] = value
        else:
            tensors[name] = value
    if pos != len(raw):
        raise FormatError(f"{path}: trailing bytes after tensor table")
    config = MaskNetConfig(in_channels=in_channels, features=features, blocks=blocks, batch_norm=batch_norm)
    return MaskNetParams(config, tensors, running)
