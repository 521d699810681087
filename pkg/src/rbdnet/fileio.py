"""Little-endian binary I/O helpers with atomic writes."""
from __future__ import annotations

import os
import struct
from contextlib import contextmanager

import numpy as np

from .errors import TruncatedFileError


class Writer:
    """Accumulates little-endian fields into a buffer."""

    def __init__(self):
        self._chunks: list[bytes] = []

    def u8(self, v: int):
        self._chunks.append(struct.pack("<B", v))

    def u16(self, v: int):
        self._chunks.append(struct.pack("<H", v))

    def u32(self, v: int):
        self._chunks.append(struct.pack("<I", v))

    def u64(self, v: int):
        self._chunks.append(struct.pack("<Q", v))

    def f64(self, v: float):
        self._chunks.append(struct.pack("<d", v))

    def raw(self, b: bytes):
        self._chunks.append(b)

    def f64_array(self, a: np.ndarray):
        self._chunks.append(np.ascontiguousarray(a, dtype="<f8").tobytes())

    def getvalue(self) -> bytes:
        return b"".join(self._chunks)


class Reader:
    """Reads little-endian fields, raising TruncatedFileError at early EOF."""

    def __init__(self, data: bytes):
        self._data = data
        self._pos = 0

    def _take(self, n: int) -> bytes:
        if self._pos + n > len(self._data):
            raise TruncatedFileError(
                f"file truncated: needed {n} bytes at offset {self._pos}")
        b = self._data[self._pos:self._pos + n]
        self._pos += n
        return b

    def u8(self) -> int:
        return struct.unpack("<B", self._take(1))[0]

    def u16(self) -> int:
        return struct.unpack("<H", self._take(2))[0]

    def u32(self) -> int:
        return struct.unpack("<I", self._take(4))[0]

    def u64(self) -> int:
        return struct.unpack("<Q", self._take(8))[0]

    def f64(self) -> float:
        return struct.unpack("<d", self._take(8))[0]

    def raw(self, n: int) -> bytes:
        return self._take(n)

    def f64_array(self, count: int, shape=None) -> np.ndarray:
        a = np.frombuffer(self._take(8 * count), dtype="<f8").astype(np.float64)
        return a.reshape(shape) if shape is not None else a

    def at_end(self) -> bool:
        return self._pos == len(self._data)


@contextmanager
def atomic_write(path):
    """Write to a temp file in the target directory, then atomically rename."""
    path = os.fspath(path)
    tmp = path + ".tmp"
    f = open(tmp, "wb")
    try:
        yield f
        f.flush()
        os.fsync(f.fileno())
        f.close()
        os.replace(tmp, path)
    except BaseException:
        f.close()
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
