"""Streaming, bounded-memory parsing and validation of antenna and CDR CSV files.

File formats (UTF-8, LF, one header line):

* antennas: ``antenna_id,lat,lon``
* CDRs: ``timestamp,user_id,peer_id,direction,antenna_id`` with integer epoch
  seconds, direction ``OUT``/``IN`` and an optional (possibly empty) peer.

A line is malformed when it has the wrong field count, an unparsable number,
or an unknown direction token. An antenna id missing from the registry is
treated the same way under the skip-and-count policy, since real feeds carry
decommissioned antennas; under the strict policy it aborts the stream.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from typing import Dict, Iterable, Iterator, Optional, Tuple

from .core import (
    Antenna,
    AntennaId,
    CallDirection,
    CdrRecord,
    SECONDS_PER_DAY,
)

AntennaRegistry = Dict[AntennaId, Antenna]

ANTENNA_HEADER = ("antenna_id", "lat", "lon")
CDR_HEADER = ("timestamp", "user_id", "peer_id", "direction", "antenna_id")

_DIRECTIONS = {"OUT": CallDirection.OUTGOING, "IN": CallDirection.INCOMING}


class IngestError(Exception):
    """Base class for ingestion failures."""


class MalformedLine(IngestError):
    def __init__(self, line_no: int, reason: str):
        super().__init__(f"line {line_no}: {reason}")
        self.line_no = line_no
        self.reason = reason


class DuplicateAntenna(IngestError):
    def __init__(self, antenna_id: AntennaId):
        super().__init__(f"duplicate antenna id {antenna_id}")
        self.antenna_id = antenna_id


class CoordinateOutOfRange(IngestError):
    def __init__(self, antenna_id: AntennaId):
        super().__init__(f"antenna {antenna_id}: coordinates out of range")
        self.antenna_id = antenna_id


class UnknownAntenna(IngestError):
    def __init__(self, antenna_id: AntennaId, line_no: Optional[int] = None):
        at = f" at line {line_no}" if line_no is not None else ""
        super().__init__(f"unknown antenna id {antenna_id}{at}")
        self.antenna_id = antenna_id
        self.line_no = line_no


class ParsePolicy(Enum):
    STRICT = "strict"
    SKIP_AND_COUNT = "skip-and-count"


@dataclass
class DatasetStats:
    """Aggregate counts for one pass over a CDR source.

    `record_count` counts valid records only; malformed lines are tallied
    separately and never contribute to the per-day counts or the time range.
    Days are local calendar days under the configured UTC offset.
    """

    record_count: int = 0
    user_count: int = 0
    malformed_count: int = 0
    time_range: Optional[Tuple[int, int]] = None
    per_day_counts: Dict[str, int] = field(default_factory=dict)


class _StatsAccumulator:
    __slots__ = ("offset_s", "count", "malformed", "t_min", "t_max", "users", "days")

    def __init__(self, utc_offset: float):
        self.offset_s = int(utc_offset * 3600)
        self.count = 0
        self.malformed = 0
        self.t_min: Optional[int] = None
        self.t_max: Optional[int] = None
        self.users = set()
        self.days: Dict[int, int] = {}

    def add(self, timestamp: int, user: int) -> None:
        self.count += 1
        self.users.add(user)
        if self.t_min is None or timestamp < self.t_min:
            self.t_min = timestamp
        if self.t_max is None or timestamp > self.t_max:
            self.t_max = timestamp
        day = (timestamp + self.offset_s) // SECONDS_PER_DAY
        self.days[day] = self.days.get(day, 0) + 1

    def finish(self) -> DatasetStats:
        per_day = {
            _day_label(day): n for day, n in sorted(self.days.items())
        }
        time_range = None
        if self.t_min is not None:
            time_range = (self.t_min, self.t_max)
        return DatasetStats(
            record_count=self.count,
            user_count=len(self.users),
            malformed_count=self.malformed,
            time_range=time_range,
            per_day_counts=per_day,
        )


def _day_label(day_index: int) -> str:
    dt = datetime.fromtimestamp(day_index * SECONDS_PER_DAY, tz=timezone.utc)
    return dt.date().isoformat()


def load_antennas(path: str) -> AntennaRegistry:
    """Load an antenna registry CSV, validating ids and coordinate bounds."""
    registry: AntennaRegistry = {}
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or tuple(header) != ANTENNA_HEADER:
            raise MalformedLine(1, f"expected header {','.join(ANTENNA_HEADER)}")
        for row in reader:
            line_no = reader.line_num
            if len(row) != 3:
                raise MalformedLine(line_no, f"expected 3 fields, got {len(row)}")
            try:
                antenna_id = int(row[0])
                lat = float(row[1])
                lon = float(row[2])
            except ValueError as exc:
                raise MalformedLine(line_no, str(exc)) from None
            if not (-90.0 <= lat <= 90.0 and -180.0 <= lon <= 180.0):
                raise CoordinateOutOfRange(antenna_id)
            if antenna_id in registry:
                raise DuplicateAntenna(antenna_id)
            registry[antenna_id] = Antenna(antenna_id, lat, lon)
    if not registry:
        raise IngestError(f"antenna registry is empty: {path}")
    return registry


def write_antennas(path: str, registry: AntennaRegistry) -> None:
    """Write a registry in the exact format `load_antennas` consumes."""
    with open(path, "w", newline="", encoding="utf-8") as f:
        f.write(",".join(ANTENNA_HEADER) + "\n")
        for antenna_id in sorted(registry):
            a = registry[antenna_id]
            f.write(f"{a.id},{a.lat!r},{a.lon!r}\n")


class CdrStream:
    """Single-consumer iterator over the records of one CDR file.

    Records are yielded in file order with memory usage independent of file
    size. `stats` is complete once the iterator has been exhausted; reading it
    earlier reflects the lines consumed so far.
    """

    def __init__(
        self,
        path: str,
        registry: AntennaRegistry,
        policy: ParsePolicy = ParsePolicy.SKIP_AND_COUNT,
        utc_offset: float = 0.0,
    ):
        self.path = path
        self.registry = registry
        self.policy = policy
        self._acc = _StatsAccumulator(utc_offset)

    @property
    def stats(self) -> DatasetStats:
        return self._acc.finish()

    def __iter__(self) -> Iterator[CdrRecord]:
        strict = self.policy is ParsePolicy.STRICT
        registry = self.registry
        acc = self._acc
        directions = _DIRECTIONS
        with open(self.path, newline="", encoding="utf-8") as f:
            reader = csv.reader(f)
            header = next(reader, None)
            if header is None or tuple(header) != CDR_HEADER:
                raise MalformedLine(1, f"expected header {','.join(CDR_HEADER)}")
            for row in reader:
                if len(row) != 5:
                    if strict:
                        raise MalformedLine(
                            reader.line_num, f"expected 5 fields, got {len(row)}"
                        )
                    acc.malformed += 1
                    continue
                try:
                    timestamp = int(row[0])
                    user = int(row[1])
                    peer = int(row[2]) if row[2] else None
                    direction = directions[row[3]]
                    antenna = int(row[4])
                except (ValueError, KeyError) as exc:
                    if strict:
                        raise MalformedLine(reader.line_num, repr(exc)) from None
                    acc.malformed += 1
                    continue
                if antenna not in registry:
                    if strict:
                        raise UnknownAntenna(antenna, reader.line_num)
                    acc.malformed += 1
                    continue
                acc.add(timestamp, user)
                yield CdrRecord(timestamp, user, peer, direction, antenna)


def stream_cdrs(
    path: str,
    registry: AntennaRegistry,
    policy: ParsePolicy = ParsePolicy.SKIP_AND_COUNT,
    utc_offset: float = 0.0,
) -> CdrStream:
    """Open a CDR file for streaming; see `CdrStream`."""
    return CdrStream(path, registry, policy, utc_offset)


def write_cdrs(path: str, records: Iterable[CdrRecord]) -> int:
    """Write records in the exact format `stream_cdrs` consumes; returns count."""
    n = 0
    with open(path, "w", newline="", encoding="utf-8") as f:
        f.write(",".join(CDR_HEADER) + "\n")
        for rec in records:
            peer = "" if rec.peer is None else rec.peer
            f.write(
                f"{rec.timestamp},{rec.user},{peer},{rec.direction.value},{rec.antenna}\n"
            )
            n += 1
    return n


def dataset_stats(records: Iterable[CdrRecord], utc_offset: float = 0.0) -> DatasetStats:
    """Exact counts over an in-memory or streamed record sequence."""
    acc = _StatsAccumulator(utc_offset)
    for rec in records:
        acc.add(rec.timestamp, rec.user)
    return acc.finish()


def write_stats(path: str, stats: DatasetStats) -> None:
    """Stats CSV: one summary row, then per-day rows."""
    t_min = stats.time_range[0] if stats.time_range else ""
    t_max = stats.time_range[1] if stats.time_range else ""
    with open(path, "w", newline="", encoding="utf-8") as f:
        f.write("record_count,user_count,malformed_count,time_min,time_max\n")
        f.write(
            f"{stats.record_count},{stats.user_count},{stats.malformed_count},"
            f"{t_min},{t_max}\n"
        )
        f.write("day,count\n")
        for day, n in stats.per_day_counts.items():
            f.write(f"{day},{n}\n")
