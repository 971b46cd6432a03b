"""
File Formats Module for VRD

Readers and writers for the on-disk formats:
1. VRDT: binary float64 tensors (fields)
2. VRDP: binary VRD layer parameters
3. PGM (P5): 8-bit grayscale images of single-channel fields
"""

import struct
from pathlib import Path
from typing import Union

import numpy as np

from .config import FORMAT_VERSION, VRDP_MAGIC, VRDT_MAGIC
from .core import VrdParams
from .exceptions import FieldError, FormatError
from .lattice import Field

PathLike = Union[str, Path]

_F64 = np.dtype("<f8")


def _read_bytes(path: PathLike) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as e:
        raise FormatError(f"cannot read {path}: {e.strerror}") from e


def _take(buf: bytes, offset: int, size: int, what: str) -> bytes:
    if offset + size > len(buf):
        raise FormatError(
            f"truncated file: expected {size} bytes of {what}, found {len(buf) - offset}", offset)
    return buf[offset:offset + size]


def _check_magic(buf: bytes, magic: bytes):
    found = _take(buf, 0, 4, "magic")
    if found != magic:
        raise FormatError(f"bad magic {found!r}, expected {magic!r}", 0)
    (version,) = struct.unpack("<I", _take(buf, 4, 4, "version"))
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported version {version}", 4)


def write_vrdt(path: PathLike, field: Field):
    """Write a field as a VRDT tensor file."""
    header = VRDT_MAGIC + struct.pack("<II", FORMAT_VERSION, 3)
    header += struct.pack("<QQQ", *field.shape)
    Path(path).write_bytes(header + field.data.astype(_F64).tobytes(order="C"))


def read_vrdt(path: PathLike) -> Field:
    """
    Read a VRDT tensor file.

    Raises:
        FormatError: bad magic, version, rank, truncation or trailing bytes
    """
    buf = _read_bytes(path)
    _check_magic(buf, VRDT_MAGIC)
    (rank,) = struct.unpack("<I", _take(buf, 8, 4, "rank"))
    if rank != 3:
        raise FormatError(f"unsupported rank {rank}, expected 3", 8)
    dims = struct.unpack("<QQQ", _take(buf, 12, 24, "dimensions"))
    count = dims[0] * dims[1] * dims[2]
    body = _take(buf, 36, 8 * count, "sample data")
    if len(buf) != 36 + 8 * count:
        raise FormatError(f"{len(buf) - 36 - 8 * count} trailing bytes", 36 + 8 * count)
    data = np.frombuffer(body, dtype=_F64).reshape(dims)
    try:
        return Field(data.astype(np.float64))
    except FieldError as e:
        raise FormatError(f"invalid tensor data: {e}", 36) from e


def write_vrdp(path: PathLike, params: VrdParams):
    """Write VRD layer parameters as a VRDP file."""
    header = VRDP_MAGIC + struct.pack("<III", FORMAT_VERSION, params.n_in, params.n_out)
    body = b"".join(
        np.ascontiguousarray(block, dtype=_F64).tobytes(order="C")
        for block in (params.r_q, params.r_b, params.q_i, params.b_i)
    )
    Path(path).write_bytes(header + body)


def read_vrdp(path: PathLike) -> VrdParams:
    """
    Read a VRDP parameter file.

    Raises:
        FormatError: bad magic, version, truncation or non-finite parameters
    """
    buf = _read_bytes(path)
    _check_magic(buf, VRDP_MAGIC)
    n_in, n_out = struct.unpack("<II", _take(buf, 8, 8, "channel counts"))
    offset = 16
    blocks = {}
    for name, shape in (("r_q", (n_out, n_out)), ("r_b", (n_out, n_out)),
                        ("q_i", (n_out, n_in)), ("b_i", (n_out, n_in))):
        size = 8 * shape[0] * shape[1]
        blocks[name] = np.frombuffer(_take(buf, offset, size, name), dtype=_F64).reshape(shape).copy()
        offset += size
    if len(buf) != offset:
        raise FormatError(f"{len(buf) - offset} trailing bytes", offset)
    try:
        return VrdParams(**blocks)
    except ValueError as e:
        raise FormatError(f"invalid parameters: {e}", 16) from e


def write_pgm(path: PathLike, image: np.ndarray, peak: float = None):
    """
    Write a 2-D array as an 8-bit binary PGM (P5).

    Values are mapped linearly from [0, peak] to [0, 255] and clipped.
    """
    image = np.asarray(image, dtype=np.float64)
    peak = float(np.max(image)) if peak is None else peak
    scaled = np.zeros_like(image) if peak <= 0.0 else image / peak * 255.0
    pixels = np.clip(np.rint(scaled), 0, 255).astype(np.uint8)
    height, width = pixels.shape
    header = f"P5\n{width} {height}\n255\n".encode("ascii")
    Path(path).write_bytes(header + pixels.tobytes(order="C"))


def read_pgm(path: PathLike) -> np.ndarray:
    """Read an 8-bit binary PGM written by write_pgm."""
    buf = _read_bytes(path)
    parts = buf.split(b"\n", 3)
    if len(parts) < 4 or parts[0] != b"P5":
        raise FormatError("not a binary PGM (P5) file", 0)
    try:
        width, height = (int(x) for x in parts[1].split())
        maxval = int(parts[2])
    except ValueError as e:
        raise FormatError(f"bad PGM header: {e}", 3) from e
    if maxval != 255:
        raise FormatError(f"unsupported PGM maxval {maxval}", 0)
    offset = len(buf) - len(parts[3])
    pixels = _take(buf, offset, width * height, "pixel data")
    return np.frombuffer(pixels, dtype=np.uint8).reshape(height, width)
