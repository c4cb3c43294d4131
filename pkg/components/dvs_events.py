"""
DVS event model, stream container and the two on-disk event formats.

CSV:    ``# evdenoise-csv v1 W=<int> H=<int>`` then ``x,y,t,p,label`` per line.
Packed: ``EVD1`` + little-endian u16 W, u16 H, u64 count, then 14-byte records
        (u16 x, u16 y, u64 t, u8 p, u8 label).
"""

import re
import struct
from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from utils.output import Output

out = Output(__name__)

EVENT_DTYPE = np.dtype(
    [("x", "<u2"), ("y", "<u2"), ("t", "<u8"), ("p", "u1"), ("label", "u1")]
)
PACKED_MAGIC = b"EVD1"
_PACKED_HEADER = struct.Struct("<4sHHQ")
_CSV_HEADER_RE = re.compile(r"^#\s*evdenoise-csv\s+v1\s+W=(\d+)\s+H=(\d+)\s*$")


class Polarity(IntEnum):
    NEGATIVE = 0
    POSITIVE = 1


class Label(IntEnum):
    NOISE = 0
    SIGNAL = 1
    UNLABELED = 2


class EventParseError(ValueError):
    """Malformed event file; carries the path and the line or byte offset."""

    def __init__(self, path, message: str, line: int | None = None, offset: int | None = None):
        self.path = Path(path)
        self.line = line
        self.offset = offset
        where = ""
        if line is not None:
            where = f" (line {line})"
        elif offset is not None:
            where = f" (offset {offset})"
        super().__init__(f"{self.path}{where}: {message}")


class EventValidationError(ValueError):
    """Event coordinate, polarity or label outside its domain."""


class EventOrderError(ValueError):
    """Timestamps decrease somewhere in the stream."""


class GeometryMismatchError(ValueError):
    """Two streams with different sensor geometries were combined."""


@dataclass(frozen=True)
class SensorGeometry:
    width: int
    height: int

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise EventValidationError(
                f"Sensor geometry must be at least 1x1, got {self.width}x{self.height}"
            )
        if self.width > 0xFFFF or self.height > 0xFFFF:
            raise EventValidationError(
                f"Sensor geometry {self.width}x{self.height} exceeds 16-bit coordinates"
            )

    @property
    def pixels(self) -> int:
        return self.width * self.height

    def contains(self, x: int, y: int) -> bool:
        return 0 <= x < self.width and 0 <= y < self.height

    def __str__(self) -> str:
        return f"{self.width}x{self.height}"


@dataclass(frozen=True)
class Event:
    x: int
    y: int
    t: int
    p: Polarity
    label: Label = Label.UNLABELED


class EventStream:
    """
    Immutable, time-ordered sequence of events on one sensor.

    Events are held column-wise in a read-only numpy structured array; iterating
    yields ``Event`` objects, while the ``x``/``y``/``t``/``p``/``label`` views are
    what the hot loops use.
    """

    __slots__ = ("geometry", "_events")

    def __init__(self, geometry: SensorGeometry, events: np.ndarray | None = None):
        if events is None:
            events = np.zeros(0, dtype=EVENT_DTYPE)
        array = np.array(events, dtype=EVENT_DTYPE, copy=True).reshape(-1)
        _validate(geometry, array)
        array.setflags(write=False)
        self.geometry = geometry
        self._events = array

    @classmethod
    def from_events(cls, geometry: SensorGeometry, events: Iterable[Event]) -> "EventStream":
        rows = [(e.x, e.y, e.t, int(e.p), int(e.label)) for e in events]
        if any(r[0] < 0 or r[1] < 0 or r[2] < 0 for r in rows):
            raise EventValidationError("Negative coordinate or timestamp in event list")
        return cls(geometry, np.array(rows, dtype=EVENT_DTYPE))

    @classmethod
    def from_columns(cls, geometry, x, y, t, p, label) -> "EventStream":
        array = np.zeros(len(t), dtype=EVENT_DTYPE)
        array["x"] = x
        array["y"] = y
        array["t"] = t
        array["p"] = p
        array["label"] = label
        return cls(geometry, array)

    @property
    def events(self) -> np.ndarray:
        return self._events

    @property
    def x(self) -> np.ndarray:
        return self._events["x"]

    @property
    def y(self) -> np.ndarray:
        return self._events["y"]

    @property
    def t(self) -> np.ndarray:
        return self._events["t"]

    @property
    def p(self) -> np.ndarray:
        return self._events["p"]

    @property
    def label(self) -> np.ndarray:
        return self._events["label"]

    @property
    def span_us(self) -> int:
        if len(self._events) == 0:
            return 0
        return int(self._events["t"][-1] - self._events["t"][0])

    def __len__(self) -> int:
        return len(self._events)

    def __getitem__(self, index: int) -> Event:
        row = self._events[index]
        return Event(
            int(row["x"]),
            int(row["y"]),
            int(row["t"]),
            Polarity(int(row["p"])),
            Label(int(row["label"])),
        )

    def __iter__(self) -> Iterator[Event]:
        for index in range(len(self._events)):
            yield self[index]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, EventStream):
            return NotImplemented
        return self.geometry == other.geometry and np.array_equal(
            self._events, other._events
        )

    def __repr__(self) -> str:
        return f"EventStream(geometry={self.geometry}, events={len(self)})"

    def slice_time(self, t0: int, t1: int) -> "EventStream":
        """Events with ``t0 <= t < t1``."""
        lo, hi = np.searchsorted(self.t, [t0, t1], side="left")
        return EventStream(self.geometry, self._events[lo:hi])

    def count_by_label(self) -> dict[Label, int]:
        counts = np.bincount(self.label, minlength=len(Label))
        return {label: int(counts[label]) for label in Label}

    def is_fully_labeled(self) -> bool:
        return not np.any(self.label == Label.UNLABELED)


def _validate(geometry: SensorGeometry, array: np.ndarray) -> None:
    if len(array) == 0:
        return
    bad = np.flatnonzero((array["x"] >= geometry.width) | (array["y"] >= geometry.height))
    if bad.size:
        i = int(bad[0])
        raise EventValidationError(
            f"Event {i} at ({array['x'][i]}, {array['y'][i]}) outside {geometry}"
        )
    bad = np.flatnonzero(array["p"] > Polarity.POSITIVE)
    if bad.size:
        raise EventValidationError(f"Event {int(bad[0])} has invalid polarity")
    bad = np.flatnonzero(array["label"] > Label.UNLABELED)
    if bad.size:
        raise EventValidationError(f"Event {int(bad[0])} has invalid label")
    bad = np.flatnonzero(array["t"][1:] < array["t"][:-1])
    if bad.size:
        i = int(bad[0]) + 1
        raise EventOrderError(
            f"Timestamp decreases at event {i}: {array['t'][i - 1]} -> {array['t'][i]}"
        )


def _resolve_format(path: Path, fmt: str | None) -> str:
    if fmt is None:
        fmt = "csv" if path.suffix.lower() == ".csv" else "packed"
    if fmt not in ("csv", "packed"):
        raise ValueError(f"Unknown event format: {fmt}")
    return fmt


def read_events(path, format: str | None = None) -> EventStream:
    path = Path(path)
    fmt = _resolve_format(path, format)
    if fmt == "csv":
        stream = _read_csv(path)
    else:
        stream = _read_packed(path)
    out.log_only(f"Read {len(stream)} events ({fmt}, {stream.geometry}) from {path}")
    return stream


def _read_csv(path: Path) -> EventStream:
    with path.open("r", encoding="utf-8") as handle:
        header = handle.readline()
        match = _CSV_HEADER_RE.match(header.strip())
        if not match:
            raise EventParseError(path, "missing or malformed evdenoise-csv header", line=1)
        geometry = SensorGeometry(int(match.group(1)), int(match.group(2)))

        rows = []
        last_t = -1
        for line_no, line in enumerate(handle, start=2):
            text = line.strip()
            if not text:
                continue
            fields = text.split(",")
            if len(fields) != 5:
                raise EventParseError(path, f"expected 5 fields, got {len(fields)}", line=line_no)
            try:
                x, y, t, p, label = (int(field) for field in fields)
            except ValueError as exc:
                raise EventParseError(path, f"non-integer field: {exc}", line=line_no) from exc
            if not geometry.contains(x, y):
                raise EventValidationError(
                    f"{path} (line {line_no}): ({x}, {y}) outside {geometry}"
                )
            if p not in (0, 1) or label not in (0, 1, 2) or t < 0 or t >= 2**64:
                raise EventValidationError(
                    f"{path} (line {line_no}): polarity, label or timestamp out of range"
                )
            if t < last_t:
                raise EventOrderError(
                    f"{path} (line {line_no}): timestamp {t} precedes {last_t}"
                )
            last_t = t
            rows.append((x, y, t, p, label))

    return EventStream(geometry, np.array(rows, dtype=EVENT_DTYPE))


def _read_packed(path: Path) -> EventStream:
    data = path.read_bytes()
    if len(data) < _PACKED_HEADER.size:
        raise EventParseError(path, "truncated header", offset=len(data))
    magic, width, height, count = _PACKED_HEADER.unpack_from(data, 0)
    if magic != PACKED_MAGIC:
        raise EventParseError(path, f"bad magic {magic!r}", offset=0)
    expected = _PACKED_HEADER.size + count * EVENT_DTYPE.itemsize
    if len(data) != expected:
        raise EventParseError(
            path,
            f"expected {expected} bytes for {count} events, found {len(data)}",
            offset=min(len(data), expected),
        )
    geometry = SensorGeometry(width, height)
    events = np.frombuffer(data, dtype=EVENT_DTYPE, count=count, offset=_PACKED_HEADER.size)
    return EventStream(geometry, events)


def write_events(stream: EventStream, path, format: str | None = None) -> None:
    path = Path(path)
    fmt = _resolve_format(path, format)
    path.parent.mkdir(parents=True, exist_ok=True)
    geometry = stream.geometry
    if fmt == "csv":
        with path.open("w", encoding="utf-8", newline="\n") as handle:
            handle.write(f"# evdenoise-csv v1 W={geometry.width} H={geometry.height}\n")
            if len(stream):
                columns = np.column_stack(
                    [stream.x, stream.y, stream.t, stream.p, stream.label]
                ).astype(np.uint64)
                np.savetxt(handle, columns, fmt="%d", delimiter=",")
    else:
        with path.open("wb") as handle:
            handle.write(
                _PACKED_HEADER.pack(PACKED_MAGIC, geometry.width, geometry.height, len(stream))
            )
            handle.write(stream.events.tobytes())
    out.log_only(f"Wrote {len(stream)} events ({fmt}) to {path}")


def merge_streams(a: EventStream, b: EventStream) -> EventStream:
    """Stable time merge; on equal timestamps events of ``a`` come first."""
    if a.geometry != b.geometry:
        raise GeometryMismatchError(
            f"Cannot merge streams of geometry {a.geometry} and {b.geometry}"
        )
    combined = np.concatenate([a.events, b.events])
    order = np.argsort(combined["t"], kind="stable")
    return EventStream(a.geometry, combined[order])


def relabel(stream: EventStream, label: Label) -> EventStream:
    events = stream.events.copy()
    events["label"] = int(label)
    return EventStream(stream.geometry, events)
