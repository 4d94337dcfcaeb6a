"""Home/work anchor inference, commute radius, and hourly call-density grids.

A user's two most frequently used antennas are taken as their important
places; the great-circle distance between them is the commute radius. Which
of the pair is home and which is work is deliberately not decided, since the
radius only needs the pair.
"""

from __future__ import annotations

import statistics
from dataclasses import dataclass, field
from typing import Dict, Iterable, Optional, Tuple

import numpy as np

from .core import (
    AntennaId,
    BoundingBox,
    CdrRecord,
    GeoPoint,
    UserId,
    grid_cell,
    grid_shape,
    haversine_km,
)
from .ingest import AntennaRegistry, UnknownAntenna
from .predictor import SlotHistogram


@dataclass(frozen=True)
class ImportantPlaces:
    """A user's top-two antennas by total call count (ties to smaller id)."""

    first: Tuple[AntennaId, int]
    second: Optional[Tuple[AntennaId, int]]
    total_calls: int
    qualified: bool


def important_places(
    histogram: SlotHistogram, min_calls: int = 10
) -> Dict[UserId, ImportantPlaces]:
    """Rank each user's antennas across all slots and keep the top two.

    A user qualifies for commute statistics only with at least `min_calls`
    total calls and two distinct antennas; below that the ranking is noise.
    """
    if min_calls < 1:
        raise ValueError(f"min_calls must be >= 1, got {min_calls}")
    totals: Dict[UserId, Dict[AntennaId, int]] = {}
    for (user, _slot), counts in histogram.items():
        acc = totals.setdefault(user, {})
        for antenna, c in counts.items():
            acc[antenna] = acc.get(antenna, 0) + c

    places: Dict[UserId, ImportantPlaces] = {}
    for user, acc in totals.items():
        ranked = sorted(acc.items(), key=lambda kv: (-kv[1], kv[0]))
        total = sum(acc.values())
        first = ranked[0]
        second = ranked[1] if len(ranked) > 1 else None
        places[user] = ImportantPlaces(
            first=first,
            second=second,
            total_calls=total,
            qualified=second is not None and total >= min_calls,
        )
    return places


@dataclass
class CommuteReport:
    users_considered: int
    users_qualified: int
    mean_radius_km: Optional[float]
    median_radius_km: Optional[float]
    histogram_km: Dict[int, int] = field(default_factory=dict)  # 1 km bins


def commute_radius(
    places: Dict[UserId, ImportantPlaces], registry: AntennaRegistry
) -> CommuteReport:
    """Distance between each qualified user's two places, aggregated."""
    radii = []
    hist: Dict[int, int] = {}
    for user in sorted(places):
        p = places[user]
        if not p.qualified:
            continue
        for antenna_id in (p.first[0], p.second[0]):
            if antenna_id not in registry:
                raise UnknownAntenna(antenna_id)
        a = registry[p.first[0]]
        b = registry[p.second[0]]
        r = haversine_km(a.point, b.point)
        radii.append(r)
        hist[int(r)] = hist.get(int(r), 0) + 1

    return CommuteReport(
        users_considered=len(places),
        users_qualified=len(radii),
        mean_radius_km=sum(radii) / len(radii) if radii else None,
        median_radius_km=statistics.median(radii) if radii else None,
        histogram_km=dict(sorted(hist.items())),
    )


@dataclass
class DensityGrid:
    """Call counts over a cell grid; sum(cells) equals the matching records."""

    bbox: BoundingBox
    cell_deg: float
    rows: int
    cols: int
    cells: np.ndarray  # (rows, cols) int64
    time_filter: str

    @property
    def total(self) -> int:
        return int(self.cells.sum())


def empty_grid(bbox: BoundingBox, cell_deg: float, time_filter: str) -> DensityGrid:
    rows, cols = grid_shape(bbox, cell_deg)
    return DensityGrid(
        bbox=bbox,
        cell_deg=cell_deg,
        rows=rows,
        cols=cols,
        cells=np.zeros((rows, cols), dtype=np.int64),
        time_filter=time_filter,
    )


_MISSING = object()


def density_grid(
    records: Iterable[CdrRecord],
    registry: AntennaRegistry,
    bbox: BoundingBox,
    cell_deg: float,
    hour: int,
    utc_offset: float = 0.0,
) -> DensityGrid:
    """Grid of call counts for records in the given local hour of day."""
    if not 0 <= hour <= 23:
        raise ValueError(f"hour must be in 0..23, got {hour}")
    grid = empty_grid(bbox, cell_deg, time_filter=f"hour={hour:02d}")
    offset_s = int(utc_offset * 3600)
    cells = grid.cells
    # Antennas do not move; resolve each id's cell once.
    cell_of: Dict[AntennaId, Optional[Tuple[int, int]]] = {}
    for rec in records:
        if ((rec.timestamp + offset_s) % 86400) // 3600 != hour:
            continue
        cell = cell_of.get(rec.antenna, _MISSING)
        if cell is _MISSING:
            a = registry[rec.antenna]
            cell = grid_cell(GeoPoint(a.lat, a.lon), bbox, cell_deg)
            cell_of[rec.antenna] = cell
        if cell is not None:
            cells[cell] += 1
    return grid


GRID_META_HEADER = (
    "bbox_min_lat",
    "bbox_min_lon",
    "bbox_max_lat",
    "bbox_max_lon",
    "cell_deg",
    "rows",
    "cols",
)


def write_grid(path: str, grid: DensityGrid) -> None:
    """Grid CSV: a metadata header and row, then non-zero `row,col,count` cells."""
    with open(path, "w", newline="", encoding="utf-8") as f:
        f.write(",".join(GRID_META_HEADER) + "\n")
        b = grid.bbox
        f.write(
            f"{b.min_lat!r},{b.min_lon!r},{b.max_lat!r},{b.max_lon!r},"
            f"{grid.cell_deg!r},{grid.rows},{grid.cols}\n"
        )
        f.write("row,col,count\n")
        rows, cols = np.nonzero(grid.cells)
        for r, c in zip(rows.tolist(), cols.tolist()):
            f.write(f"{r},{c},{int(grid.cells[r, c])}\n")


def load_grid(path: str, time_filter: str = "") -> DensityGrid:
    with open(path, newline="", encoding="utf-8") as f:
        header = f.readline().strip()
        if header != ",".join(GRID_META_HEADER):
            raise ValueError(f"unexpected grid header in {path}")
        meta = f.readline().strip().split(",")
        bbox = BoundingBox(*(float(x) for x in meta[:4]))
        cell_deg = float(meta[4])
        rows, cols = int(meta[5]), int(meta[6])
        grid = DensityGrid(
            bbox=bbox,
            cell_deg=cell_deg,
            rows=rows,
            cols=cols,
            cells=np.zeros((rows, cols), dtype=np.int64),
            time_filter=time_filter,
        )
        triple_header = f.readline().strip()
        if triple_header != "row,col,count":
            raise ValueError(f"unexpected cell header in {path}")
        for line in f:
            r, c, n = line.strip().split(",")
            grid.cells[int(r), int(c)] = int(n)
    return grid


def write_commute_report(path: str, report: CommuteReport) -> None:
    """Commute CSV: a summary row, then 1 km histogram bins."""
    mean = repr(report.mean_radius_km) if report.mean_radius_km is not None else ""
    med = repr(report.median_radius_km) if report.median_radius_km is not None else ""
    with open(path, "w", newline="", encoding="utf-8") as f:
        f.write("users_considered,users_qualified,mean_radius_km,median_radius_km\n")
        f.write(f"{report.users_considered},{report.users_qualified},{mean},{med}\n")
        f.write("bin_km,count\n")
        for bin_km, n in report.histogram_km.items():
            f.write(f"{bin_km},{n}\n")
