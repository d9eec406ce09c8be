"""Event records, streams and the CKDE binary container.

Layout (all little-endian)::

    magic    4s   b"CKDE"
    version  u16  1
    width    u16
    height   u16
    reserved u32  0
    count    u64
    count x { t: u64, x: u16, y: u16, p: u8 }   # 13 bytes, packed
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Iterable, Iterator, NamedTuple

import numpy as np

MAGIC = b"CKDE"
VERSION = 1
HEADER = struct.Struct("<4sHHHIQ")
RECORD_DTYPE = np.dtype([("t", "<u8"), ("x", "<u2"), ("y", "<u2"), ("p", "u1")])
assert RECORD_DTYPE.itemsize == 13 and HEADER.size == 22


class EventFormatError(ValueError):
    """Base class for malformed CKDE input."""


class UnrecognizedFormatError(EventFormatError):
    def __init__(self, detail: str = ""):
        super().__init__("unrecognized format" + (f": {detail}" if detail else ""))


class TruncatedStreamError(EventFormatError):
    def __init__(self, offset: int, detail: str = ""):
        self.offset = offset
        super().__init__(f"unexpected end of stream at byte offset {offset}" + (f" ({detail})" if detail else ""))


class RecordError(EventFormatError):
    """A record violates bounds, polarity or ordering constraints."""

    def __init__(self, index: int, detail: str):
        self.index = index
        super().__init__(f"record {index}: {detail}")


class EventRecord(NamedTuple):
    t: int
    x: int
    y: int
    p: int


@dataclass
class EventStream:
    width: int
    height: int
    events: np.ndarray  # structured, RECORD_DTYPE

    def __post_init__(self):
        if not (0 < self.width <= 0xFFFF and 0 < self.height <= 0xFFFF):
            raise ValueError(f"sensor dims out of range: {self.width}x{self.height}")
        self.events = np.ascontiguousarray(self.events, dtype=RECORD_DTYPE)

    @classmethod
    def from_records(cls, width: int, height: int, records: Iterable) -> "EventStream":
        arr = np.array([tuple(r) for r in records], dtype=RECORD_DTYPE)
        return cls(width, height, arr)

    @classmethod
    def from_arrays(cls, width, height, t, x, y, p) -> "EventStream":
        arr = np.empty(len(t), dtype=RECORD_DTYPE)
        arr["t"], arr["x"], arr["y"], arr["p"] = t, x, y, p
        return cls(width, height, arr)

    def __len__(self) -> int:
        return len(self.events)

    def __iter__(self) -> Iterator[EventRecord]:
        for e in self.events:
            yield EventRecord(int(e["t"]), int(e["x"]), int(e["y"]), int(e["p"]))

    def records(self) -> list[EventRecord]:
        return list(self)

    def validate(self) -> None:
        validate_events(self.events, self.width, self.height)

    def __eq__(self, other) -> bool:
        if not isinstance(other, EventStream):
            return NotImplemented
        return (self.width, self.height) == (other.width, other.height) and np.array_equal(self.events, other.events)


def validate_events(events: np.ndarray, width: int, height: int) -> None:
    if len(events) == 0:
        return
    bad = np.flatnonzero((events["x"] >= width) | (events["y"] >= height))
    if bad.size:
        i = int(bad[0])
        raise RecordError(i, f"coordinate ({events['x'][i]}, {events['y'][i]}) outside {width}x{height}")
    bad = np.flatnonzero(events["p"] > 1)
    if bad.size:
        i = int(bad[0])
        raise RecordError(i, f"polarity {events['p'][i]} not in {{0, 1}}")
    bad = np.flatnonzero(np.diff(events["t"].astype(np.int64)) < 0)
    if bad.size:
        i = int(bad[0]) + 1
        raise RecordError(i, "timestamps not sorted")


def parse_event_file(data: bytes) -> EventStream:
    """Decode and validate a CKDE byte string."""
    data = bytes(data)
    if len(data) < len(MAGIC) or data[:4] != MAGIC:
        raise UnrecognizedFormatError("bad magic")
    if len(data) < HEADER.size:
        raise TruncatedStreamError(len(data), "header")
    _, version, width, height, reserved, count = HEADER.unpack_from(data)
    if version != VERSION:
        raise UnrecognizedFormatError(f"version {version}")
    if reserved != 0:
        raise UnrecognizedFormatError("reserved field is non-zero")
    if width == 0 or height == 0:
        raise UnrecognizedFormatError(f"sensor dims {width}x{height}")
    body = len(data) - HEADER.size
    need = count * RECORD_DTYPE.itemsize
    if body < need:
        complete = body // RECORD_DTYPE.itemsize
        raise TruncatedStreamError(HEADER.size + complete * RECORD_DTYPE.itemsize,
                                   f"record {complete} of {count}")
    if body > need:
        raise UnrecognizedFormatError(f"{body - need} trailing bytes after {count} records")
    events = np.frombuffer(data, dtype=RECORD_DTYPE, count=count, offset=HEADER.size).copy()
    validate_events(events, width, height)
    return EventStream(width, height, events)


def serialize_event_stream(stream: EventStream) -> bytes:
    header = HEADER.pack(MAGIC, VERSION, stream.width, stream.height, 0, len(stream.events))
    return header + np.ascontiguousarray(stream.events, dtype=RECORD_DTYPE).tobytes()


def read_event_file(path) -> EventStream:
    with open(path, "rb") as fh:
        return parse_event_file(fh.read())


def write_event_file(path, stream: EventStream) -> None:
    with open(path, "wb") as fh:
        fh.write(serialize_event_stream(stream))
