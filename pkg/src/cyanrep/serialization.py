"""Bit-exact encoding of action objects and of the consensus envelope.

Action layout::

    b"A1" | u32 len | name (UTF-8) | u32 field count | fields...

Each field is a tag byte followed by its value: ``I``/``L`` carry an 8-byte
two's-complement integer, ``S`` a u32 length and UTF-8 bytes. All integers
are big-endian. The envelope prepends a u32 replica id and a u64 sequence
number. An empty value stands for a no-op slot.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

from .errors import SerializationError

MAGIC = b"A1"
TAG_FOR_TYPE = {"String": b"S", "Int": b"I", "Long": b"L"}
TYPE_FOR_TAG = {v: k for k, v in TAG_FOR_TYPE.items()}

_U32 = struct.Struct(">I")
_I64 = struct.Struct(">q")
_ENVELOPE = struct.Struct(">IQ")

INT_MIN = -(1 << 63)
INT_MAX = (1 << 63) - 1


@dataclass(frozen=True)
class EncodedAction:
    prototype: str
    # (type name, value) pairs in declaration order
    fields: tuple


@dataclass(frozen=True)
class Envelope:
    replica: int
    seq: int
    action: bytes

    @property
    def key(self) -> tuple:
        return (self.replica, self.seq)


def _str(value: str) -> bytes:
    raw = value.encode("utf-8")
    return _U32.pack(len(raw)) + raw


def encode_action(prototype: str, fields) -> bytes:
    """``fields`` is a sequence of ``(type name, value)`` in declaration order."""
    out = [MAGIC, _str(prototype), _U32.pack(len(fields))]
    for type_name, value in fields:
        tag = TAG_FOR_TYPE.get(type_name)
        if tag is None:
            raise SerializationError(f"cannot serialize a field of type {type_name}")
        out.append(tag)
        if tag == b"S":
            if not isinstance(value, str):
                raise SerializationError(f"expected a String, got {value!r}")
            out.append(_str(value))
        else:
            if isinstance(value, bool) or not isinstance(value, int) or not INT_MIN <= value <= INT_MAX:
                raise SerializationError(f"expected a 64-bit integer, got {value!r}")
            out.append(_I64.pack(value))
    return b"".join(out)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.at = 0

    def take(self, n: int) -> bytes:
        if self.at + n > len(self.data):
            raise SerializationError(f"truncated action encoding at byte {self.at}")
        chunk = self.data[self.at:self.at + n]
        self.at += n
        return chunk

    def u32(self) -> int:
        return _U32.unpack(self.take(4))[0]

    def text(self) -> str:
        raw = self.take(self.u32())
        try:
            return raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise SerializationError(f"invalid UTF-8 in action encoding: {exc}") from None


def decode_action(data: bytes) -> EncodedAction:
    r = _Reader(data)
    if r.take(2) != MAGIC:
        raise SerializationError("bad magic in action encoding")
    name = r.text()
    fields = []
    for _ in range(r.u32()):
        tag = r.take(1)
        if tag == b"S":
            fields.append(("String", r.text()))
        elif tag in (b"I", b"L"):
            fields.append((TYPE_FOR_TAG[tag], _I64.unpack(r.take(8))[0]))
        else:
            raise SerializationError(f"unknown field tag {tag!r}")
    if r.at != len(data):
        raise SerializationError(f"{len(data) - r.at} trailing bytes after action encoding")
    return EncodedAction(name, tuple(fields))


def encode_envelope(replica: int, seq: int, action: bytes) -> bytes:
    return _ENVELOPE.pack(replica, seq) + action


def decode_envelope(data: bytes) -> Envelope:
    if len(data) < _ENVELOPE.size:
        raise SerializationError("truncated envelope")
    replica, seq = _ENVELOPE.unpack_from(data)
    return Envelope(replica, seq, bytes(data[_ENVELOPE.size:]))
