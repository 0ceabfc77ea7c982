"""Minimal NPY (version 1.0) reader and writer.

Files written here are byte-identical to ``numpy.save`` output for the
supported dtypes, so any NPY-aware tool can read them.
"""

from __future__ import annotations

import ast
import io
import os
import struct
from typing import BinaryIO, Union

import numpy as np

from birdmotif.errors import FormatError, UnsupportedFormatError

MAGIC = b"\x93NUMPY"
VERSION = b"\x01\x00"
ALIGN = 64

# little-endian only; the index arrays need an integer type
SUPPORTED_DESCR = ("<f4", "<f8", "<i8")

PathOrFile = Union[str, os.PathLike, BinaryIO]


def _descr(arr: np.ndarray) -> str:
    dt = arr.dtype
    if dt == np.float32:
        return "<f4"
    if dt == np.float64:
        return "<f8"
    if dt == np.int64:
        return "<i8"
    raise UnsupportedFormatError(f"dtype {dt} cannot be written; use float32, float64 or int64")


def _shape_literal(shape: tuple) -> str:
    if len(shape) == 1:
        return f"({shape[0]},)"
    return "(" + ", ".join(str(int(s)) for s in shape) + ")"


def header_bytes(descr: str, shape: tuple) -> bytes:
    """Magic, version, length field and padded header dict for an array."""
    text = "{'descr': '%s', 'fortran_order': False, 'shape': %s, }" % (descr, _shape_literal(shape))
    # magic(6) + version(2) + u16 length(2) + text + padding + '\n'
    prefix = len(MAGIC) + len(VERSION) + 2
    total = prefix + len(text) + 1
    pad = (ALIGN - total % ALIGN) % ALIGN
    text = text + " " * pad + "\n"
    if len(text) > 0xFFFF:
        raise UnsupportedFormatError("header too long for NPY version 1.0")
    return MAGIC + VERSION + struct.pack("<H", len(text)) + text.encode("latin1")


def to_bytes(arr: np.ndarray) -> bytes:
    arr = np.asarray(arr)
    descr = _descr(arr)
    data = np.ascontiguousarray(arr, dtype=np.dtype(descr)).tobytes(order="C")
    return header_bytes(descr, arr.shape) + data


def save_npy(target: PathOrFile, arr: np.ndarray) -> None:
    """Write ``arr`` as an NPY 1.0 file (little-endian, C order)."""
    payload = to_bytes(arr)
    if hasattr(target, "write"):
        target.write(payload)
        return
    with open(target, "wb") as fh:
        fh.write(payload)


def _parse_header(fh: BinaryIO) -> tuple[np.dtype, tuple]:
    magic = fh.read(len(MAGIC))
    if magic != MAGIC:
        raise FormatError("not an NPY file (bad magic)")
    version = fh.read(2)
    if len(version) != 2:
        raise FormatError("truncated NPY header")
    if version == b"\x01\x00":
        (hlen,) = struct.unpack("<H", fh.read(2))
    elif version in (b"\x02\x00", b"\x03\x00"):
        (hlen,) = struct.unpack("<I", fh.read(4))
    else:
        raise UnsupportedFormatError(f"NPY version {version[0]}.{version[1]}")
    raw = fh.read(hlen)
    if len(raw) != hlen:
        raise FormatError("truncated NPY header")
    try:
        meta = ast.literal_eval(raw.decode("latin1"))
    except (ValueError, SyntaxError) as exc:
        raise FormatError(f"unparseable NPY header: {exc}") from None
    if not isinstance(meta, dict) or {"descr", "fortran_order", "shape"} - meta.keys():
        raise FormatError("NPY header dict is missing required keys")
    if meta["descr"] not in SUPPORTED_DESCR:
        raise UnsupportedFormatError(f"descr {meta['descr']!r}")
    if meta["fortran_order"]:
        raise UnsupportedFormatError("fortran_order=True")
    return np.dtype(meta["descr"]), tuple(int(s) for s in meta["shape"])


def load_npy(source: PathOrFile) -> np.ndarray:
    """Read an NPY file written by :func:`save_npy` (or numpy itself)."""
    if hasattr(source, "read"):
        return _load(source)
    with open(source, "rb") as fh:
        return _load(fh)


def _load(fh: BinaryIO) -> np.ndarray:
    dtype, shape = _parse_header(fh)
    count = int(np.prod(shape, dtype=np.int64))
    data = fh.read(count * dtype.itemsize)
    if len(data) != count * dtype.itemsize:
        raise FormatError("NPY data shorter than header shape")
    return np.frombuffer(data, dtype=dtype).reshape(shape).copy()


def loads(payload: bytes) -> np.ndarray:
    return _load(io.BytesIO(payload))
