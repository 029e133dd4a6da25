"""Binary tensor container used by datasets and checkpoints.

Record layout (little-endian, bit-exact across platforms):

    magic   4 bytes  b"MMT1"
    ndim    uint8
    dims    ndim * uint32
    data    prod(dims) * float32, row-major

A file may hold a single record (dataset tensors) or several records
back to back (checkpoint parameter banks, with names kept in a JSON
index alongside).
"""

from __future__ import annotations

import io
from pathlib import Path
from typing import BinaryIO, Iterable, Mapping

import numpy as np

from .errors import FormatError, IntegrityError

MAGIC = b"MMT1"

_DIM_DTYPE = np.dtype("<u4")
_DATA_DTYPE = np.dtype("<f4")


def write_record(stream: BinaryIO, array: np.ndarray) -> None:
    """Append one tensor record to an open binary stream."""
    arr = np.ascontiguousarray(array, dtype=_DATA_DTYPE)
    if arr.ndim > 255:
        raise ValueError(f"tensor rank {arr.ndim} exceeds container limit")
    stream.write(MAGIC)
    stream.write(bytes([arr.ndim]))
    stream.write(np.asarray(arr.shape, dtype=_DIM_DTYPE).tobytes())
    stream.write(arr.tobytes())


def read_record(stream: BinaryIO, source: str) -> np.ndarray:
    """Read one tensor record; ``source`` names the file in error messages."""
    magic = stream.read(4)
    if len(magic) < 4 or magic != MAGIC:
        raise FormatError(f"{source}: bad magic {magic!r}, expected {MAGIC!r}")
    ndim_raw = stream.read(1)
    if len(ndim_raw) < 1:
        raise IntegrityError(f"{source}: truncated header (missing rank)")
    ndim = ndim_raw[0]
    dims_raw = stream.read(4 * ndim)
    if len(dims_raw) < 4 * ndim:
        raise IntegrityError(f"{source}: truncated header (missing dims)")
    dims = np.frombuffer(dims_raw, dtype=_DIM_DTYPE)
    count = int(np.prod(dims, dtype=np.int64)) if ndim else 1
    payload = stream.read(4 * count)
    if len(payload) < 4 * count:
        raise IntegrityError(
            f"{source}: truncated payload ({len(payload)} of {4 * count} bytes)"
        )
    data = np.frombuffer(payload, dtype=_DATA_DTYPE).astype(np.float32)
    return data.reshape(tuple(int(d) for d in dims))


def write_tensor(path: Path | str, array: np.ndarray) -> None:
    """Write a single-tensor file."""
    path = Path(path)
    buf = io.BytesIO()
    write_record(buf, array)
    path.write_bytes(buf.getvalue())


def read_tensor(path: Path | str) -> np.ndarray:
    """Read a single-tensor file; trailing bytes are an integrity error."""
    path = Path(path)
    if not path.is_file():
        raise FormatError(f"{path}: tensor file missing")
    with path.open("rb") as stream:
        arr = read_record(stream, str(path))
        if stream.read(1):
            raise IntegrityError(f"{path}: trailing bytes after tensor record")
    return arr


def write_named_tensors(
    path: Path | str, items: Iterable[tuple[str, np.ndarray]]
) -> list[str]:
    """Write records back to back; returns names in written order."""
    path = Path(path)
    names = []
    buf = io.BytesIO()
    for name, array in items:
        write_record(buf, array)
        names.append(name)
    path.write_bytes(buf.getvalue())
    return names


def read_named_tensors(path: Path | str, names: list[str]) -> dict[str, np.ndarray]:
    """Read ``len(names)`` records from a concatenated container."""
    path = Path(path)
    if not path.is_file():
        raise FormatError(f"{path}: tensor bank missing")
    out: dict[str, np.ndarray] = {}
    with path.open("rb") as stream:
        for name in names:
            out[name] = read_record(stream, f"{path}[{name}]")
        if stream.read(1):
            raise IntegrityError(f"{path}: trailing bytes after last record")
    return out


def tensors_equal(a: Mapping[str, np.ndarray], b: Mapping[str, np.ndarray]) -> bool:
    """Bit-exact equality of two name->tensor mappings."""
    if set(a) != set(b):
        return False
    return all(
        a[k].shape == b[k].shape and a[k].tobytes() == b[k].tobytes() for k in a
    )
