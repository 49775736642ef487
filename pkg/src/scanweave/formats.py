"""File formats: SPCB spectral cubes, PBM masks, PPM images, SNWD dictionaries.

SPCB layout: magic ``SPCB``, three little-endian u32 (width, height, bands),
then ``W*H*B`` little-endian f32 values in row-major pixel order, band-major
within each pixel.

Masks are plain (P1) or binary (P4) PBM. Bit 1 means "pixel is sampled"; the
commanded budget travels in a ``# budget <c>`` header comment so a round trip
preserves it (readers of foreign PBM files fall back to the realized mean).

RGB images are 8-bit P6 PPM, scaled to [0, 1] on read.

SNWD layout: magic ``SNWD``, u32 rows, u32 atoms, f32 column-major blob.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .core import EndmemberDictionary, SamplingMask, SpectralCube
from .errors import FormatError

_SPCB_MAGIC = b"SPCB"
_SNWD_MAGIC = b"SNWD"


def save_cube(path, cube: SpectralCube) -> None:
    data = cube.data.astype("<f4")
    with open(path, "wb") as fh:
        fh.write(_SPCB_MAGIC)
        fh.write(struct.pack("<III", cube.width, cube.height, cube.bands))
        fh.write(data.tobytes())


def load_cube(path) -> SpectralCube:
    raw = Path(path).read_bytes()
    if raw[:4] != _SPCB_MAGIC:
        raise FormatError(f"{path}: not an SPCB cube")
    if len(raw) < 16:
        raise FormatError(f"{path}: truncated SPCB header")
    width, height, bands = struct.unpack("<III", raw[4:16])
    expected = width * height * bands * 4
    body = raw[16:]
    if len(body) != expected:
        raise FormatError(f"{path}: expected {expected} payload bytes, found {len(body)}")
    values = np.frombuffer(body, dtype="<f4").astype(np.float64)
    return SpectralCube(values.reshape(height, width, bands))


class _TokenReader:
    """Whitespace/comment-aware tokenizer for netpbm headers."""

    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def token(self) -> bytes:
        self._skip_separators()
        start = self.pos
        while self.pos < len(self.data) and not self.data[self.pos : self.pos + 1].isspace():
            self.pos += 1
        if start == self.pos:
            raise FormatError("unexpected end of netpbm header")
        return self.data[start : self.pos]

    def _skip_separators(self):
        while self.pos < len(self.data):
            ch = self.data[self.pos : self.pos + 1]
            if ch.isspace():
                self.pos += 1
            elif ch == b"#":
                nl = self.data.find(b"\n", self.pos)
                self.pos = len(self.data) if nl < 0 else nl + 1
            else:
                return

    def comments_before_body(self) -> list[bytes]:
        out = []
        pos = 0
        while True:
            h = self.data.find(b"#", pos)
            if h < 0 or h >= self.pos:
                return out
            nl = self.data.find(b"\n", h)
            nl = len(self.data) if nl < 0 else nl
            out.append(self.data[h + 1 : nl].strip())
            pos = nl + 1

    def skip_single_whitespace(self):
        self.pos += 1


def save_mask(path, mask: SamplingMask, fmt: str = "p4") -> None:
    if fmt not in ("p1", "p4"):
        raise FormatError(f"unknown PBM variant {fmt!r}")
    header = f"# budget {mask.budget!r}\n{mask.width} {mask.height}\n"
    with open(path, "wb") as fh:
        if fmt == "p1":
            fh.write(b"P1\n" + header.encode())
            for row in mask.bits:
                fh.write(" ".join(str(int(b)) for b in row).encode() + b"\n")
        else:
            fh.write(b"P4\n" + header.encode())
            fh.write(np.packbits(mask.bits, axis=1).tobytes())


def load_mask(path) -> SamplingMask:
    raw = Path(path).read_bytes()
    magic = raw[:2]
    if magic not in (b"P1", b"P4"):
        raise FormatError(f"{path}: not a PBM mask")
    rd = _TokenReader(raw[2:])
    width = int(rd.token())
    height = int(rd.token())
    if magic == b"P1":
        body = rd.data[rd.pos :]
        digits = [c - 48 for c in body if c in (48, 49)]
        if len(digits) != width * height:
            raise FormatError(f"{path}: expected {width * height} bits, found {len(digits)}")
        bits = np.array(digits, dtype=np.uint8).reshape(height, width)
    else:
        rd.skip_single_whitespace()
        row_bytes = (width + 7) // 8
        body = rd.data[rd.pos : rd.pos + row_bytes * height]
        if len(body) != row_bytes * height:
            raise FormatError(f"{path}: truncated P4 payload")
        packed = np.frombuffer(body, dtype=np.uint8).reshape(height, row_bytes)
        bits = np.unpackbits(packed, axis=1)[:, :width]
    budget = None
    for comment in rd.comments_before_body():
        parts = comment.split()
        if len(parts) == 2 and parts[0] == b"budget":
            try:
                budget = float(parts[1])
            except ValueError:
                pass
    if budget is None:
        budget = float(bits.mean())
    return SamplingMask(bits, budget)


def save_rgb_image(path, image) -> None:
    """Write an (H, W, 3) array in [0, 1] (or a 3-band cube) as 8-bit P6 PPM."""
    data = image.data if isinstance(image, SpectralCube) else np.asarray(image, dtype=np.float64)
    if data.ndim != 3 or data.shape[2] != 3:
        raise FormatError(f"PPM export needs an (H, W, 3) image, got {data.shape}")
    bytes8 = np.clip(np.rint(data * 255.0), 0, 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P6\n{data.shape[1]} {data.shape[0]}\n255\n".encode())
        fh.write(bytes8.tobytes())


def load_rgb_image(path) -> SpectralCube:
    raw = Path(path).read_bytes()
    if raw[:2] != b"P6":
        raise FormatError(f"{path}: not a P6 PPM image")
    rd = _TokenReader(raw[2:])
    width = int(rd.token())
    height = int(rd.token())
    maxval = int(rd.token())
    if maxval != 255:
        raise FormatError(f"{path}: only 8-bit PPM supported (maxval 255, got {maxval})")
    rd.skip_single_whitespace()
    body = rd.data[rd.pos : rd.pos + width * height * 3]
    if len(body) != width * height * 3:
        raise FormatError(f"{path}: truncated P6 payload")
    values = np.frombuffer(body, dtype=np.uint8).reshape(height, width, 3)
    return SpectralCube(values.astype(np.float64) / 255.0)


def save_dictionary(path, dictionary: EndmemberDictionary) -> None:
    with open(path, "wb") as fh:
        fh.write(_SNWD_MAGIC)
        fh.write(struct.pack("<II", dictionary.rows, dictionary.atoms))
        fh.write(np.asfortranarray(dictionary.matrix.astype("<f4")).tobytes(order="F"))


def load_dictionary(path) -> EndmemberDictionary:
    raw = Path(path).read_bytes()
    if raw[:4] != _SNWD_MAGIC:
        raise FormatError(f"{path}: not an SNWD dictionary")
    rows, atoms = struct.unpack("<II", raw[4:12])
    body = raw[12:]
    if len(body) != rows * atoms * 4:
        raise FormatError(f"{path}: truncated SNWD payload")
    values = np.frombuffer(body, dtype="<f4").astype(np.float64)
    return EndmemberDictionary(values.reshape((rows, atoms), order="F"))
