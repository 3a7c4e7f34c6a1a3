"""Append-only decision log with CRC-checked records.

Record framing::

    u32 payload length | type byte | payload | u32 CRC32(payload)

Types: ``P`` promise, ``C`` accept, ``D`` decide, ``I`` incarnation. A record
cut short at the end of the log (a torn write) is dropped on recovery. Any
damage before the tail is fatal.
"""

from __future__ import annotations

import os
import struct
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .errors import RecoveryError

PROMISE = b"P"
ACCEPT = b"C"
DECIDE = b"D"
INCARNATION = b"I"
RECORD_TYPES = (PROMISE, ACCEPT, DECIDE, INCARNATION)

_HEADER = struct.Struct(">Ic")
_CRC = struct.Struct(">I")
_BALLOT = struct.Struct(">QI")
_SLOT = struct.Struct(">Q")


@dataclass(frozen=True)
class Record:
    kind: bytes
    payload: bytes


def frame(record: Record) -> bytes:
    return (_HEADER.pack(len(record.payload), record.kind) + record.payload
            + _CRC.pack(zlib.crc32(record.payload)))


def parse_records(data: bytes) -> tuple[list[Record], int]:
    """Decode ``data``; returns the records and the byte length of the valid prefix."""
    records, at, n = [], 0, len(data)
    while at < n:
        if at + _HEADER.size > n:
            break
        length, kind = _HEADER.unpack_from(data, at)
        end = at + _HEADER.size + length + _CRC.size
        if end > n:
            break
        payload = bytes(data[at + _HEADER.size: at + _HEADER.size + length])
        (crc,) = _CRC.unpack_from(data, end - _CRC.size)
        if crc != zlib.crc32(payload) or kind not in RECORD_TYPES:
            if end == n:
                break  # damaged final record: treat like a torn write
            raise RecoveryError(f"corrupted log record at byte {at}")
        records.append(Record(kind, payload))
        at = end
    return records, at


# -- payload codecs ------------------------------------------------------------

def promise_payload(ballot) -> bytes:
    return _BALLOT.pack(*ballot)


def accept_payload(slot: int, ballot, value: bytes) -> bytes:
    return _SLOT.pack(slot) + _BALLOT.pack(*ballot) + value


def decide_payload(slot: int, value: bytes) -> bytes:
    return _SLOT.pack(slot) + value


def incarnation_payload(n: int) -> bytes:
    return _SLOT.pack(n)


def unpack_promise(p: bytes) -> tuple:
    return _BALLOT.unpack(p)


def unpack_accept(p: bytes) -> tuple:
    (slot,) = _SLOT.unpack_from(p)
    ballot = _BALLOT.unpack_from(p, _SLOT.size)
    return slot, ballot, p[_SLOT.size + _BALLOT.size:]


def unpack_decide(p: bytes) -> tuple:
    (slot,) = _SLOT.unpack_from(p)
    return slot, p[_SLOT.size:]


def unpack_incarnation(p: bytes) -> int:
    return _SLOT.unpack(p)[0]


# -- storage -----------------------------------------------------------------

class MemoryStorage:
    """Bytes that survive a simulated crash because the simulator owns them."""

    def __init__(self, data: bytes = b""):
        self.data = bytearray(data)

    def read(self) -> bytes:
        return bytes(self.data)

    def append(self, chunk: bytes) -> None:
        self.data += chunk

    def truncate(self, size: int) -> None:
        del self.data[size:]


class FileStorage:
    def __init__(self, path, fsync: bool = True):
        self.path = Path(path)
        self.fsync = fsync
        self.path.parent.mkdir(parents=True, exist_ok=True)

    def read(self) -> bytes:
        return self.path.read_bytes() if self.path.exists() else b""

    def append(self, chunk: bytes) -> None:
        with open(self.path, "ab") as fh:
            fh.write(chunk)
            fh.flush()
            if self.fsync:
                os.fsync(fh.fileno())

    def truncate(self, size: int) -> None:
        if self.path.exists():
            with open(self.path, "r+b") as fh:
                fh.truncate(size)


def log_path(directory, replica_id: int) -> Path:
    return Path(directory) / f"replica-{replica_id}.log"


@dataclass
class RecoveredState:
    promised: Optional[tuple]
    accepted: dict  # slot -> (ballot, value)
    decided: dict  # slot -> value
    incarnation: int


class DecisionLog:
    def __init__(self, storage):
        self.storage = storage

    def append(self, kind: bytes, payload: bytes) -> None:
        self.storage.append(frame(Record(kind, payload)))

    def records(self) -> list[Record]:
        return parse_records(self.storage.read())[0]

    def recover(self) -> RecoveredState:
        """Replay the log, dropping (and truncating away) a torn tail."""
        data = self.storage.read()
        records, valid = parse_records(data)
        if valid < len(data):
            self.storage.truncate(valid)
        promised, accepted, decided, incarnation = None, {}, {}, 0
        for rec in records:
            if rec.kind == PROMISE:
                b = unpack_promise(rec.payload)
                promised = b if promised is None or b > promised else promised
            elif rec.kind == ACCEPT:
                slot, b, value = unpack_accept(rec.payload)
                if slot not in accepted or b >= accepted[slot][0]:
                    accepted[slot] = (b, value)
            elif rec.kind == DECIDE:
                slot, value = unpack_decide(rec.payload)
                if slot in decided and decided[slot] != value:
                    raise RecoveryError(f"log holds two different decisions for slot {slot}")
                decided[slot] = value
            else:
                incarnation = max(incarnation, unpack_incarnation(rec.payload))
        return RecoveredState(promised, accepted, decided, incarnation)
