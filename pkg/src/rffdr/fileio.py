"""On-disk formats: NPY arrays, label CSV grids, PPM images, model files.

Byte layouts are documented in ``docs/formats.md``. Every writer goes
through :func:`atomic_write` (temp file + rename).
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np
from numpy.lib import format as npformat

from .errors import DimensionError, FormatError, IOFailure

__all__ = [
    "atomic_write",
    "load_array",
    "save_array",
    "load_labels_csv",
    "save_labels_csv",
    "encode_ppm",
    "decode_ppm",
    "write_ppm",
    "save_container",
    "load_container",
    "CONTAINER_MAGIC",
    "CONTAINER_VERSION",
]

NPY_MAGIC = b"\x93NUMPY"
NPY_DTYPES = {"<f4", "<f8", "|i1", "<i2", "<i4", "|u1", "<u2", "<u4"}

CONTAINER_MAGIC = b"RFFDRMDL"
CONTAINER_VERSION = (1, 0)
CONTAINER_DTYPES = {"<f8", "<i8", "<f4", "<i4", "|u1"}


def atomic_write(path, data: bytes) -> None:
    path = Path(path)
    directory = path.parent if str(path.parent) else Path(".")
    try:
        directory.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=directory)
        try:
            with os.fdopen(fd, "wb") as fh:
                fh.write(data)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
    except OSError as exc:
        raise IOFailure(f"cannot write {path}: {exc}") from exc


def _read_bytes(path) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise IOFailure(f"cannot read {path}: {exc}") from exc


# -- NPY -------------------------------------------------------------------

def parse_npy(buf: bytes, name: str = "<bytes>") -> np.ndarray:
    if buf[:6] != NPY_MAGIC:
        raise FormatError(f"{name}: bad magic, not an NPY file")
    if buf[6:8] != b"\x01\x00":
        raise FormatError(f"{name}: unsupported NPY version {buf[6]}.{buf[7]} (only 1.0 is read)")
    fh = io.BytesIO(buf)
    fh.seek(8)
    try:
        shape, fortran, dtype = npformat.read_array_header_1_0(fh)
    except ValueError as exc:
        raise FormatError(f"{name}: malformed NPY header: {exc}") from exc
    if fortran:
        raise FormatError(f"{name}: Fortran-order arrays are not supported; re-save in C order")
    if dtype.str not in NPY_DTYPES:
        raise FormatError(
            f"{name}: unsupported element type {dtype.str}; expected little-endian f4/f8 or 8/16/32-bit integers"
        )
    count = int(np.prod(shape, dtype=np.int64))
    start = fh.tell()
    if len(buf) - start < count * dtype.itemsize:
        raise FormatError(f"{name}: truncated data section")
    arr = np.frombuffer(buf, dtype=dtype, count=count, offset=start).reshape(shape)
    return arr.astype(np.float64)


def load_array(path) -> np.ndarray:
    """Read an NPY v1.0 file into a float64 array of the stored shape."""
    return parse_npy(_read_bytes(path), str(path))


def npy_bytes(array) -> bytes:
    arr = np.ascontiguousarray(array)
    if arr.dtype.byteorder == ">":
        arr = arr.astype(arr.dtype.newbyteorder("<"))
    fh = io.BytesIO()
    npformat.write_array(fh, arr, version=(1, 0), allow_pickle=False)
    return fh.getvalue()


def save_array(path, array) -> None:
    atomic_write(path, npy_bytes(array))


# -- label CSV -------------------------------------------------------------

def parse_labels_csv(text: str, name: str = "<text>", shape=None) -> np.ndarray:
    rows = []
    width = None
    for lineno, row in enumerate(csv.reader(io.StringIO(text)), start=1):
        if not row:
            continue
        try:
            values = [int(cell.strip()) for cell in row]
        except ValueError as exc:
            raise FormatError(f"{name}: row {lineno}: non-integer cell ({exc})") from exc
        if width is None:
            width = len(values)
        elif len(values) != width:
            raise FormatError(f"{name}: row {lineno}: ragged row with {len(values)} cells, expected {width}")
        rows.append(values)
    if not rows:
        raise FormatError(f"{name}: empty label file")
    grid = np.asarray(rows, dtype=np.int64)
    if shape is not None and tuple(grid.shape) != tuple(shape):
        raise DimensionError(f"{name}: label grid {grid.shape} does not match cube {tuple(shape)}")
    return grid


def load_labels_csv(path, shape=None) -> np.ndarray:
    """Integer label grid (rows x cols); 0 marks background."""
    try:
        text = _read_bytes(path).decode("utf-8")
    except UnicodeDecodeError as exc:
        raise FormatError(f"{path}: not UTF-8: {exc}") from exc
    return parse_labels_csv(text, str(path), shape)


def labels_csv_text(grid) -> str:
    grid = np.asarray(grid)
    if grid.ndim == 1:
        grid = grid[None, :]
    return "".join(",".join(str(int(v)) for v in row) + "\n" for row in grid)


def save_labels_csv(path, grid) -> None:
    atomic_write(path, labels_csv_text(grid).encode("utf-8"))


# -- PPM -------------------------------------------------------------------

def encode_ppm(rgb) -> bytes:
    rgb = np.asarray(rgb)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise DimensionError(f"PPM needs a rows x cols x 3 array, got {rgb.shape}")
    rows, cols, _ = rgb.shape
    header = f"P6\n{cols} {rows}\n255\n".encode("ascii")
    return header + np.ascontiguousarray(rgb, dtype=np.uint8).tobytes()


def decode_ppm(buf: bytes) -> np.ndarray:
    parts = buf.split(maxsplit=4)
    if len(parts) < 5 or parts[0] != b"P6":
        raise FormatError("not a binary PPM (P6) image")
    cols, rows, maxval = int(parts[1]), int(parts[2]), int(parts[3])
    if maxval != 255:
        raise FormatError("only 8-bit PPM images are supported")
    # the single whitespace after maxval ends the header
    offset = len(buf) - rows * cols * 3
    return np.frombuffer(buf, dtype=np.uint8, offset=offset).reshape(rows, cols, 3)


def write_ppm(path, rgb) -> None:
    atomic_write(path, encode_ppm(rgb))


# -- model container -------------------------------------------------------

def container_bytes(kind: str, metadata: dict, arrays: dict[str, np.ndarray]) -> bytes:
    sections = []
    payload = bytearray()
    for name in sorted(arrays):
        arr = np.asarray(arrays[name])
        if arr.dtype.kind == "f":
            arr = arr.astype("<f8")
        elif arr.dtype.kind in "iu" and arr.dtype != np.uint8:
            arr = arr.astype("<i8")
        elif arr.dtype.kind == "b":
            arr = arr.astype("|u1")
        arr = np.ascontiguousarray(arr)
        if arr.dtype.str not in CONTAINER_DTYPES:
            raise FormatError(f"array {name!r} has unsupported dtype {arr.dtype}")
        data = arr.tobytes()
        sections.append({"name": name, "dtype": arr.dtype.str, "shape": list(arr.shape),
                         "offset": len(payload), "nbytes": len(data)})
        payload += data
    header = json.dumps({"kind": kind, "metadata": metadata, "arrays": sections},
                        sort_keys=True, separators=(",", ":"), allow_nan=False).encode("utf-8")
    body = (CONTAINER_MAGIC + struct.pack("<HHQ", *CONTAINER_VERSION, len(header)) + header + bytes(payload))
    return body + hashlib.sha256(body).digest()


def parse_container(buf: bytes, name: str = "<bytes>"):
    if buf[:8] != CONTAINER_MAGIC:
        raise FormatError(f"{name}: bad magic, not a model file")
    if len(buf) < 20 + 32:
        raise FormatError(f"{name}: truncated model file")
    body, digest = buf[:-32], buf[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise FormatError(f"{name}: checksum mismatch, file is corrupt")
    major, minor, hlen = struct.unpack("<HHQ", body[8:20])
    if major != CONTAINER_VERSION[0]:
        raise FormatError(f"{name}: unsupported model format version {major}.{minor}")
    try:
        header = json.loads(body[20:20 + hlen].decode("utf-8"))
    except ValueError as exc:
        raise FormatError(f"{name}: malformed model header: {exc}") from exc
    base = 20 + hlen
    arrays = {}
    for sec in header["arrays"]:
        dtype = np.dtype(sec["dtype"])
        start = base + sec["offset"]
        if start + sec["nbytes"] > len(body):
            raise FormatError(f"{name}: array {sec['name']!r} runs past end of file")
        arr = np.frombuffer(body, dtype=dtype, count=sec["nbytes"] // dtype.itemsize, offset=start)
        arrays[sec["name"]] = arr.reshape(sec["shape"]).copy()
    return header["kind"], header["metadata"], arrays


def save_container(path, kind: str, metadata: dict, arrays: dict) -> None:
    atomic_write(path, container_bytes(kind, metadata, arrays))


def load_container(path):
    """Return ``(kind, metadata, arrays)`` from a model file."""
    return parse_container(_read_bytes(path), str(path))
