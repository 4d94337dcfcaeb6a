"""Shared mobility primitives: weekly time slots, great-circle distance, grid geometry.

All types here are immutable values and all functions are pure, so they are
safe for unrestricted concurrent use.
"""

from __future__ import annotations

import math
from enum import Enum
from typing import NamedTuple, Optional, Tuple

# Mean Earth radius (IUGG), km.
EARTH_RADIUS_KM = 6371.0088

SLOTS_PER_WEEK = 168
SECONDS_PER_DAY = 86400
SECONDS_PER_WEEK = 7 * SECONDS_PER_DAY

# The Unix epoch (1970-01-01) fell on a Thursday; weekday 3 with Monday = 0.
_EPOCH_WEEKDAY = 3

# Identifiers are opaque integers: users 64-bit, antennas 32-bit.
UserId = int
AntennaId = int

# Weekly slot index in [0, 168): weekday * 24 + local hour, Monday = weekday 0.
TimeSlot = int


class CallDirection(Enum):
    """Direction of a call relative to the located subscriber."""

    OUTGOING = "OUT"
    INCOMING = "IN"


class GeoPoint(NamedTuple):
    lat: float
    lon: float


class Antenna(NamedTuple):
    id: AntennaId
    lat: float
    lon: float

    @property
    def point(self) -> GeoPoint:
        return GeoPoint(self.lat, self.lon)


class CdrRecord(NamedTuple):
    """One located call event.

    `user` is the operator's subscriber served by `antenna`; the peer (absent
    for some records) is metadata only and is never located.
    """

    timestamp: int  # epoch seconds, UTC
    user: UserId
    peer: Optional[UserId]
    direction: CallDirection
    antenna: AntennaId


class BoundingBox(NamedTuple):
    """Axis-aligned lat/lon rectangle, min corner strictly below max corner."""

    min_lat: float
    min_lon: float
    max_lat: float
    max_lon: float

    def contains(self, point: GeoPoint) -> bool:
        return (
            self.min_lat <= point[0] <= self.max_lat
            and self.min_lon <= point[1] <= self.max_lon
        )


def time_slot(timestamp: int, utc_offset: float = 0.0) -> TimeSlot:
    """Weekly slot index for an epoch timestamp.

    Slots are hour-of-week buckets (Monday 00:00 local = slot 0, Sunday 23:00
    local = slot 167). Local time is UTC shifted by a fixed `utc_offset` in
    hours; there is no DST handling.
    """
    local = int(timestamp) + int(utc_offset * 3600)
    days, rem = divmod(local, SECONDS_PER_DAY)
    return ((days + _EPOCH_WEEKDAY) % 7) * 24 + rem // 3600


def haversine_km(a: GeoPoint, b: GeoPoint) -> float:
    """Great-circle distance in kilometers on a sphere of radius 6371.0088 km.

    Spherical rather than ellipsoidal: the error is below 0.5% at the
    city-commute scales this package deals with.
    """
    lat1 = math.radians(a[0])
    lat2 = math.radians(b[0])
    dlat = math.radians(b[0] - a[0])
    dlon = math.radians(b[1] - a[1])
    s = (
        math.sin(dlat / 2.0) ** 2
        + math.cos(lat1) * math.cos(lat2) * math.sin(dlon / 2.0) ** 2
    )
    return 2.0 * EARTH_RADIUS_KM * math.asin(math.sqrt(s))


def grid_shape(bbox: BoundingBox, cell_deg: float) -> Tuple[int, int]:
    """(rows, cols) of the cell grid covering `bbox` at `cell_deg` resolution.

    The last row/column absorbs any remainder when the bbox span is not an
    exact multiple of the cell size.
    """
    if cell_deg <= 0:
        raise ValueError(f"cell_deg must be positive, got {cell_deg}")
    if bbox.min_lat >= bbox.max_lat or bbox.min_lon >= bbox.max_lon:
        raise ValueError(f"degenerate bounding box: {bbox}")
    # The 1e-9 slack keeps exact multiples (e.g. 1.0 / 0.1) from gaining a
    # spurious extra row to float noise.
    rows = max(1, math.ceil((bbox.max_lat - bbox.min_lat) / cell_deg - 1e-9))
    cols = max(1, math.ceil((bbox.max_lon - bbox.min_lon) / cell_deg - 1e-9))
    return rows, cols


def grid_cell(
    point: GeoPoint, bbox: BoundingBox, cell_deg: float
) -> Optional[Tuple[int, int]]:
    """Cell (row, col) containing `point`, or None when outside the bbox.

    Rows index latitude from the min corner, columns longitude. Points on the
    max edge clamp into the last cell so the grid partitions the whole box.
    """
    if not bbox.contains(point):
        return None
    rows, cols = grid_shape(bbox, cell_deg)
    row = min(int((point[0] - bbox.min_lat) / cell_deg), rows - 1)
    col = min(int((point[1] - bbox.min_lon) / cell_deg), cols - 1)
    return row, col
