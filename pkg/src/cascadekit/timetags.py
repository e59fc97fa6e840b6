"""
Time-tag data model and file IO.

A :class:`TimeTagStream` holds integer detection timestamps (clock ticks) and
small integer channel labels.  Streams are immutable: the underlying arrays are
marked read-only so a stream can be shared between workers without copying.

Two on-disk formats are supported:

TTAG (canonical, little-endian)
    ``magic "TTAG" | version u16 = 1 | resolution_ps u32 | channel_count u8 |
    reserved u8 = 0 | duration_ticks u64 | n_records u64`` followed by
    ``n_records`` packed records of ``(timestamp u64, channel u8)``.
    The header is :data:`HEADER_SIZE` = 28 bytes, each record 9 bytes.

CSV
    A ``timestamp_ps,channel`` header line followed by decimal integer rows.
"""
from __future__ import annotations

import io
import struct
from dataclasses import dataclass
from typing import Iterator, NamedTuple

import numpy as np

from .errors import ConfigurationError, FormatError, ValidationError

__all__ = [
    "TimeTag",
    "TimeTagStream",
    "read_stream",
    "write_stream",
    "read_csv",
    "write_csv",
    "merge_streams",
    "HEADER_SIZE",
    "RECORD_SIZE",
]

MAGIC = b"TTAG"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sHIBBQQ")
HEADER_SIZE = _HEADER.size  # 28
RECORD_DTYPE = np.dtype([("timestamp", "<u8"), ("channel", "u1")])
RECORD_SIZE = RECORD_DTYPE.itemsize  # 9
CSV_HEADER = "timestamp_ps,channel"


class TimeTag(NamedTuple):
    timestamp: int
    channel: int


def _readonly(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class TimeTagStream:
    """Sorted photon detection record.

    Parameters
    ----------
    timestamps : array_like of int
        Detection times in clock ticks, non-decreasing.
    channels : array_like of int
        Channel label of every tag, ``< channel_count``.
    resolution_ps : int
        Picoseconds per tick.
    duration_ticks : int
        Acquisition span; every timestamp must be ``<= duration_ticks``.
    channel_count : int
        Number of declared channels (1..255).
    """

    timestamps: np.ndarray
    channels: np.ndarray
    resolution_ps: int = 1
    duration_ticks: int = 0
    channel_count: int = 1

    def __post_init__(self):
        ts = np.array(self.timestamps, dtype=np.int64, copy=True).reshape(-1)
        ch = np.array(self.channels, dtype=np.int64, copy=True).reshape(-1)
        if ts.shape != ch.shape:
            raise ValidationError("timestamps and channels differ in length")
        if int(self.resolution_ps) <= 0:
            raise ValidationError("resolution_ps must be positive")
        if not 1 <= int(self.channel_count) <= 255:
            raise ValidationError("channel_count must be in 1..255")
        if int(self.duration_ticks) < 0:
            raise ValidationError("duration_ticks must be non-negative")
        if ts.size:
            if ts[0] < 0:
                raise ValidationError("negative timestamp")
            if ts[-1] > int(self.duration_ticks):
                raise ValidationError("timestamp beyond duration_ticks")
            if np.any(np.diff(ts) < 0):
                raise ValidationError("timestamps are not sorted")
            if ch.min() < 0 or ch.max() >= int(self.channel_count):
                raise ValidationError("channel out of range")
            _check_ties(ts, ch)
        object.__setattr__(self, "timestamps", _readonly(ts.astype(np.uint64)))
        object.__setattr__(self, "channels", _readonly(ch.astype(np.uint8)))
        object.__setattr__(self, "resolution_ps", int(self.resolution_ps))
        object.__setattr__(self, "duration_ticks", int(self.duration_ticks))
        object.__setattr__(self, "channel_count", int(self.channel_count))

    def __len__(self) -> int:
        return int(self.timestamps.size)

    def __iter__(self) -> Iterator[TimeTag]:
        for t, c in zip(self.timestamps.tolist(), self.channels.tolist()):
            yield TimeTag(t, c)

    def __eq__(self, other) -> bool:
        if not isinstance(other, TimeTagStream):
            return NotImplemented
        return (
            self.resolution_ps == other.resolution_ps
            and self.duration_ticks == other.duration_ticks
            and self.channel_count == other.channel_count
            and np.array_equal(self.timestamps, other.timestamps)
            and np.array_equal(self.channels, other.channels)
        )

    @property
    def tags(self) -> list[TimeTag]:
        return list(self)

    @property
    def duration_ps(self) -> int:
        return self.duration_ticks * self.resolution_ps

    @property
    def times_ps(self) -> np.ndarray:
        """Timestamps converted to picoseconds (int64)."""
        return self.timestamps.astype(np.int64) * self.resolution_ps

    @classmethod
    def empty(cls, resolution_ps=1, duration_ticks=0, channel_count=1):
        return cls(np.zeros(0, np.int64), np.zeros(0, np.int64),
                   resolution_ps, duration_ticks, channel_count)

    def select(self, channel: int) -> "TimeTagStream":
        """Sub-stream of a single channel, keeping the channel label."""
        keep = self.channels == channel
        return TimeTagStream(self.timestamps[keep], self.channels[keep],
                             self.resolution_ps, self.duration_ticks,
                             self.channel_count)

    def relabel(self, channel: int, channel_count: int | None = None):
        """Copy with every tag moved to ``channel``."""
        cc = self.channel_count if channel_count is None else channel_count
        return TimeTagStream(self.timestamps, np.full(len(self), channel),
                             self.resolution_ps, self.duration_ticks, cc)


def _check_ties(ts: np.ndarray, ch: np.ndarray) -> None:
    tie = np.flatnonzero(np.diff(ts) == 0)
    if tie.size == 0:
        return
    order = np.lexsort((ch, ts))
    sts, sch = ts[order], ch[order]
    dup = (np.diff(sts) == 0) & (np.diff(sch) == 0)
    if np.any(dup):
        raise ValidationError("duplicate timestamp within one channel")


def write_stream(stream: TimeTagStream) -> bytes:
    """Serialize ``stream`` to canonical TTAG bytes."""
    if not isinstance(stream, TimeTagStream):
        raise ValidationError("expected a TimeTagStream")
    header = _HEADER.pack(MAGIC, FORMAT_VERSION, stream.resolution_ps,
                          stream.channel_count, 0, stream.duration_ticks,
                          len(stream))
    rec = np.empty(len(stream), dtype=RECORD_DTYPE)
    rec["timestamp"] = stream.timestamps
    rec["channel"] = stream.channels
    return header + rec.tobytes()


def read_stream(data: bytes, **csv_kwargs) -> TimeTagStream:
    """Parse TTAG bytes (or CSV text bytes) into a validated stream.

    The format is detected from the leading bytes.  Keyword arguments are
    forwarded to :func:`read_csv` when the input is CSV.
    """
    data = bytes(data)
    if data[:4] != MAGIC:
        if data.lstrip().startswith(CSV_HEADER.encode()):
            return read_csv(data.decode("ascii"), **csv_kwargs)
        raise FormatError("missing TTAG magic and not a recognised CSV file")
    if len(data) < HEADER_SIZE:
        raise FormatError("truncated TTAG header")
    magic, version, res, nch, reserved, duration, n = _HEADER.unpack_from(data)
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported TTAG version {version}")
    if reserved != 0:
        raise FormatError("reserved header byte must be zero")
    if res == 0 or nch == 0:
        raise FormatError("resolution and channel count must be non-zero")
    if len(data) != HEADER_SIZE + n * RECORD_SIZE:
        raise FormatError(
            f"expected {n} records ({HEADER_SIZE + n * RECORD_SIZE} bytes), "
            f"got {len(data)} bytes")
    rec = np.frombuffer(data, dtype=RECORD_DTYPE, offset=HEADER_SIZE, count=n)
    ts = rec["timestamp"]
    if n and ts.max() > np.iinfo(np.int64).max:
        raise ValidationError("timestamp exceeds int64 range")
    return TimeTagStream(ts.astype(np.int64), rec["channel"], res, duration, nch)


def write_csv(stream: TimeTagStream) -> str:
    """CSV text with timestamps expressed in picoseconds."""
    buf = io.StringIO()
    buf.write(CSV_HEADER + "\n")
    if len(stream):
        np.savetxt(buf, np.column_stack([stream.times_ps, stream.channels]),
                   fmt="%d", delimiter=",")
    return buf.getvalue()


def read_csv(text: str, resolution_ps: int = 1, duration_ticks: int | None = None,
             channel_count: int | None = None) -> TimeTagStream:
    """Parse the CSV alternative.

    CSV carries no metadata, so the resolution, duration and channel count
    default to 1 ps, the last timestamp and the highest channel + 1.
    """
    lines = text.strip().splitlines()
    if not lines or lines[0].strip() != CSV_HEADER:
        raise FormatError(f"CSV must start with '{CSV_HEADER}'")
    body = [ln for ln in lines[1:] if ln.strip()]
    try:
        arr = np.array([[int(v) for v in ln.split(",")] for ln in body],
                       dtype=np.int64).reshape(-1, 2)
    except ValueError as exc:
        raise FormatError(f"bad CSV row: {exc}") from None
    t_ps, ch = arr[:, 0], arr[:, 1]
    if np.any(t_ps % resolution_ps):
        raise FormatError("timestamps are not multiples of resolution_ps")
    ticks = t_ps // resolution_ps
    if duration_ticks is None:
        duration_ticks = int(ticks.max()) if ticks.size else 0
    if channel_count is None:
        channel_count = int(ch.max()) + 1 if ch.size else 1
    return TimeTagStream(ticks, ch, resolution_ps, duration_ticks, channel_count)


def merge_streams(a: TimeTagStream, b: TimeTagStream,
                  channel_offset_b: int = 0) -> TimeTagStream:
    """Merge two streams into one sorted stream.

    Equal timestamps keep ``a`` before ``b``.  ``channel_offset_b`` is added to
    the channels of ``b`` so callers can keep labels disjoint.
    """
    if a.resolution_ps != b.resolution_ps:
        raise ConfigurationError(
            f"resolution mismatch: {a.resolution_ps} ps vs {b.resolution_ps} ps")
    ts = np.concatenate([a.timestamps, b.timestamps]).astype(np.int64)
    ch = np.concatenate([a.channels.astype(np.int64),
                         b.channels.astype(np.int64) + channel_offset_b])
    order = np.argsort(ts, kind="stable")
    nch = max(a.channel_count, b.channel_count + channel_offset_b)
    if nch > 255:
        raise ConfigurationError("merged channel count exceeds 255")
    return TimeTagStream(ts[order], ch[order], a.resolution_ps,
                         max(a.duration_ticks, b.duration_ticks), nch)
