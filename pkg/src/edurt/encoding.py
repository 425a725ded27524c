"""Binary record primitives shared by the demand codec, wire bodies and snapshots.

All integers are big-endian. Variable-length fields carry a 4-byte length
prefix, which keeps every record well under the 4-byte frame body limit of
the wire protocol. Layouts built on these primitives are documented in
docs/protocol.md and are part of the compatibility contract.
"""

from __future__ import annotations

import struct

from .errors import EdurtError

__all__ = ["RecordError", "RecordWriter", "RecordReader"]

_U8 = struct.Struct(">B")
_U32 = struct.Struct(">I")
_U64 = struct.Struct(">Q")
_F64 = struct.Struct(">d")


class RecordError(EdurtError):
    """A binary record does not match the layout it claims to follow."""


class RecordWriter:
    """Appends fixed and length-prefixed fields into one byte string."""

    __slots__ = ("_parts",)

    def __init__(self) -> None:
        self._parts: list[bytes] = []

    def u8(self, value: int) -> RecordWriter:
        self._parts.append(_U8.pack(value))
        return self

    def u32(self, value: int) -> RecordWriter:
        self._parts.append(_U32.pack(value))
        return self

    def u64(self, value: int) -> RecordWriter:
        self._parts.append(_U64.pack(value))
        return self

    def f64(self, value: float) -> RecordWriter:
        self._parts.append(_F64.pack(value))
        return self

    def raw(self, data: bytes) -> RecordWriter:
        """Fixed-width bytes; the reader must know the width."""
        self._parts.append(data)
        return self

    def blob(self, data: bytes) -> RecordWriter:
        self._parts.append(_U32.pack(len(data)))
        self._parts.append(data)
        return self

    def text(self, value: str) -> RecordWriter:
        return self.blob(value.encode("utf-8"))

    def opt_u64(self, value: int | None) -> RecordWriter:
        if value is None:
            return self.u8(0)
        return self.u8(1).u64(value)

    def opt_blob(self, data: bytes | None) -> RecordWriter:
        if data is None:
            return self.u8(0)
        return self.u8(1).blob(data)

    def done(self) -> bytes:
        return b"".join(self._parts)


class RecordReader:
    """Cursor over one record; raises RecordError on any short or trailing read."""

    __slots__ = ("_data", "_pos")

    def __init__(self, data: bytes) -> None:
        self._data = data
        self._pos = 0

    def _take(self, count: int) -> bytes:
        end = self._pos + count
        if end > len(self._data):
            raise RecordError(
                f"record truncated: needed {count} bytes at offset {self._pos}, "
                f"have {len(self._data) - self._pos}"
            )
        chunk = self._data[self._pos:end]
        self._pos = end
        return chunk

    def u8(self) -> int:
        return _U8.unpack(self._take(1))[0]

    def u32(self) -> int:
        return _U32.unpack(self._take(4))[0]

    def u64(self) -> int:
        return _U64.unpack(self._take(8))[0]

    def f64(self) -> float:
        return _F64.unpack(self._take(8))[0]

    def raw(self, count: int) -> bytes:
        return self._take(count)

    def blob(self) -> bytes:
        return self._take(self.u32())

    def text(self) -> str:
        try:
            return self.blob().decode("utf-8")
        except UnicodeDecodeError as exc:
            raise RecordError(f"text field is not valid UTF-8: {exc}") from None

    def opt_u64(self) -> int | None:
        flag = self.u8()
        if flag == 0:
            return None
        if flag != 1:
            raise RecordError(f"optional flag must be 0 or 1, got {flag}")
        return self.u64()

    def opt_blob(self) -> bytes | None:
        flag = self.u8()
        if flag == 0:
            return None
        if flag != 1:
            raise RecordError(f"optional flag must be 0 or 1, got {flag}")
        return self.blob()

    def remaining(self) -> int:
        return len(self._data) - self._pos

    def expect_end(self) -> None:
        if self._pos != len(self._data):
            raise RecordError(
                f"{len(self._data) - self._pos} trailing bytes after record"
            )
