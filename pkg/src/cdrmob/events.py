"""Fixture-driven event analytics: stadium zones, fan tagging, enrichment.

A fixture (one team's scheduled matches, venue plus time window) is the
external data source. Users calling from antennas near the venue during the
windows of enough consecutive matches get tagged as fans; a tagged user's
location during any later match window is then predicted at the match venue,
even if they have never called there before.
"""

from __future__ import annotations

import csv
from bisect import bisect_right
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Set, Tuple

from .core import (
    Antenna,
    AntennaId,
    BoundingBox,
    CdrRecord,
    GeoPoint,
    UserId,
    grid_cell,
    haversine_km,
    time_slot,
)
from .commute import DensityGrid, empty_grid
from .ingest import AntennaRegistry
from .predictor import BaselineModel, EvalReport

_MISSING = object()


class EmptyZone(Exception):
    def __init__(self, match_id: str):
        super().__init__(f"no antenna within the zone radius of match {match_id}")
        self.match_id = match_id


@dataclass(frozen=True)
class MatchEvent:
    match_id: str
    team: str
    venue: GeoPoint
    kickoff: int
    window: Tuple[int, int]  # [start, end), start <= kickoff < end

    def __post_init__(self):
        start, end = self.window
        if not start <= self.kickoff < end:
            raise ValueError(
                f"match {self.match_id}: kickoff must lie inside the window"
            )


class Fixture:
    """Kickoff-ordered matches of one team, with non-overlapping windows."""

    def __init__(self, matches: Sequence[MatchEvent]):
        self.matches = list(matches)
        for prev, cur in zip(self.matches, self.matches[1:]):
            if cur.kickoff <= prev.kickoff:
                raise ValueError("fixture kickoffs must be strictly increasing")
            if cur.window[0] < prev.window[1]:
                raise ValueError(
                    f"windows of {prev.match_id} and {cur.match_id} overlap"
                )
        self._window_starts = [m.window[0] for m in self.matches]

    def __len__(self) -> int:
        return len(self.matches)

    def __iter__(self):
        return iter(self.matches)

    def __getitem__(self, i: int) -> MatchEvent:
        return self.matches[i]

    @property
    def team(self) -> str:
        return self.matches[0].team if self.matches else ""

    def match_at(self, timestamp: int) -> Optional[MatchEvent]:
        """The match whose window contains `timestamp`, if any."""
        i = bisect_right(self._window_starts, timestamp) - 1
        if i >= 0 and timestamp < self.matches[i].window[1]:
            return self.matches[i]
        return None


FIXTURE_HEADER = (
    "match_id",
    "team",
    "venue_lat",
    "venue_lon",
    "kickoff_epoch",
    "window_start_epoch",
    "window_end_epoch",
)


def load_fixture(path: str) -> Fixture:
    matches = []
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or tuple(header) != FIXTURE_HEADER:
            raise ValueError(f"expected fixture header {','.join(FIXTURE_HEADER)}")
        for row in reader:
            matches.append(
                MatchEvent(
                    match_id=row[0],
                    team=row[1],
                    venue=GeoPoint(float(row[2]), float(row[3])),
                    kickoff=int(row[4]),
                    window=(int(row[5]), int(row[6])),
                )
            )
    return Fixture(matches)


def save_fixture(path: str, fixture: Fixture) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        f.write(",".join(FIXTURE_HEADER) + "\n")
        for m in fixture:
            f.write(
                f"{m.match_id},{m.team},{m.venue.lat!r},{m.venue.lon!r},"
                f"{m.kickoff},{m.window[0]},{m.window[1]}\n"
            )


def nearest_antenna(antennas: Iterable[Antenna], point: GeoPoint) -> AntennaId:
    """Antenna closest to a point, ties to the smallest id."""
    best_id = None
    best_d = None
    for a in antennas:
        d = haversine_km(a.point, point)
        if best_d is None or d < best_d or (d == best_d and a.id < best_id):
            best_id, best_d = a.id, d
    if best_id is None:
        raise ValueError("empty antenna collection")
    return best_id


@dataclass(frozen=True)
class StadiumZone:
    match_id: str
    antenna_set: frozenset  # AntennaIds within the zone radius of the venue
    representative: AntennaId  # nearest to the venue, ties to smallest id


def stadium_zone(
    registry: AntennaRegistry, match: MatchEvent, zone_radius_km: float
) -> StadiumZone:
    """Antennas within `zone_radius_km` of the venue (inclusive)."""
    if zone_radius_km <= 0:
        raise ValueError(f"zone_radius_km must be positive, got {zone_radius_km}")
    members = []
    best_id = None
    best_d = None
    for antenna_id in sorted(registry):
        a = registry[antenna_id]
        d = haversine_km(a.point, match.venue)
        if d <= zone_radius_km:
            members.append(antenna_id)
            if best_d is None or d < best_d:
                best_id, best_d = antenna_id, d
    if not members:
        raise EmptyZone(match.match_id)
    return StadiumZone(
        match_id=match.match_id,
        antenna_set=frozenset(members),
        representative=best_id,
    )


def build_zones(
    registry: AntennaRegistry, fixture: Fixture, zone_radius_km: float
) -> Dict[str, StadiumZone]:
    return {
        m.match_id: stadium_zone(registry, m, zone_radius_km) for m in fixture
    }


@dataclass
class FanTagSet:
    team: str
    users: Set[UserId]
    k_consecutive: int
    zone_radius_km: float

    def __contains__(self, user: UserId) -> bool:
        return user in self.users


def tag_fans(
    records: Iterable[CdrRecord],
    fixture: Fixture,
    registry: AntennaRegistry,
    zone_radius_km: float = 1.0,
    k: int = 3,
) -> FanTagSet:
    """Tag users seen in-zone during the windows of k consecutive matches.

    Consecutive means adjacent in the fixture's kickoff order, home and away
    alike. A single in-zone, in-window call marks a match as attended for
    the purpose of tagging.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if len(fixture) == 0:
        raise ValueError("fixture is empty")
    zones = build_zones(registry, fixture, zone_radius_km)
    index_of = {m.match_id: i for i, m in enumerate(fixture)}

    seen: Dict[UserId, Set[int]] = {}
    for rec in records:
        match = fixture.match_at(rec.timestamp)
        if match is None:
            continue
        if rec.antenna in zones[match.match_id].antenna_set:
            seen.setdefault(rec.user, set()).add(index_of[match.match_id])

    tagged = set()
    for user, indices in seen.items():
        run = 0
        for i in range(len(fixture)):
            run = run + 1 if i in indices else 0
            if run >= k:
                tagged.add(user)
                break
    return FanTagSet(
        team=fixture.team,
        users=tagged,
        k_consecutive=k,
        zone_radius_km=zone_radius_km,
    )


TAGS_HEADER = ("user_id", "team")


def write_tags(path: str, tags: FanTagSet) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        f.write(",".join(TAGS_HEADER) + "\n")
        for user in sorted(tags.users):
            f.write(f"{user},{tags.team}\n")


def load_tags(path: str, k_consecutive: int = 0, zone_radius_km: float = 0.0) -> FanTagSet:
    users = set()
    team = ""
    with open(path, newline="", encoding="utf-8") as f:
        header = f.readline().strip()
        if header != ",".join(TAGS_HEADER):
            raise ValueError(f"unexpected tags header: {header}")
        for line in f:
            u, team = line.strip().split(",", 1)
            users.add(int(u))
    return FanTagSet(
        team=team, users=users, k_consecutive=k_consecutive, zone_radius_km=zone_radius_km
    )


def enriched_predict(
    model: BaselineModel,
    tags: FanTagSet,
    fixture: Fixture,
    zones: Dict[str, StadiumZone],
    user: UserId,
    timestamp: int,
    utc_offset: float = 0.0,
) -> Optional[AntennaId]:
    """Baseline prediction, overridden to the match venue for tagged users.

    During a match window a tagged user is predicted at the zone
    representative even with no training data for that slot; everywhere else
    this is exactly the baseline (including its abstentions).
    """
    if user in tags:
        match = fixture.match_at(timestamp)
        if match is not None:
            return zones[match.match_id].representative
    return model.predict(user, time_slot(timestamp, utc_offset))


class ComparisonMode:
    """How an enriched (venue) prediction is scored against the observation."""

    ZONE_SET = "zone-set"  # correct iff the observed antenna is in the zone
    EXACT_ANTENNA = "exact-antenna"  # correct iff it equals the representative


@dataclass
class EnrichedEvalReport:
    """Baseline vs fixture-enriched scores on the same match-window events."""

    baseline: EvalReport
    enriched: EvalReport
    n_tagged_users: int = 0
    mode: str = ComparisonMode.ZONE_SET


def compare_on_matches(
    model: BaselineModel,
    tags: FanTagSet,
    fixture: Fixture,
    zones: Dict[str, StadiumZone],
    test: Iterable[CdrRecord],
    mode: str = ComparisonMode.ZONE_SET,
    utc_offset: float = 0.0,
) -> EnrichedEvalReport:
    """Score baseline and enriched predictors on tagged users' match events.

    The event set is every test record of a tagged user inside a match
    window. The baseline predicts per slot and abstains where untrained,
    scored on exact antenna match; the enriched predictor always answers
    with the zone representative, scored per `mode`.
    """
    if mode not in (ComparisonMode.ZONE_SET, ComparisonMode.EXACT_ANTENNA):
        raise ValueError(f"unknown comparison mode: {mode}")
    base = EvalReport()
    enr = EvalReport()
    offset_s = int(utc_offset * 3600)

    for rec in test:
        if rec.user not in tags:
            continue
        match = fixture.match_at(rec.timestamp)
        if match is None:
            continue
        local = rec.timestamp + offset_s
        days, rem = divmod(local, 86400)
        slot = ((days + 3) % 7) * 24 + rem // 3600

        base.total_events += 1
        enr.total_events += 1
        base.per_slot[slot, 0] += 1
        enr.per_slot[slot, 0] += 1

        p = model.predict(rec.user, slot)
        if p is not None:
            base.predicted_events += 1
            base.per_slot[slot, 1] += 1
            if p == rec.antenna:
                base.correct_events += 1
                base.per_slot[slot, 2] += 1

        zone = zones[match.match_id]
        enr.predicted_events += 1
        enr.per_slot[slot, 1] += 1
        if mode == ComparisonMode.ZONE_SET:
            hit = rec.antenna in zone.antenna_set
        else:
            hit = rec.antenna == zone.representative
        if hit:
            enr.correct_events += 1
            enr.per_slot[slot, 2] += 1

    return EnrichedEvalReport(
        baseline=base, enriched=enr, n_tagged_users=len(tags.users), mode=mode
    )


ENRICHED_HEADER = ("variant", "total", "predicted", "correct", "accuracy", "coverage")


def write_enriched_report(path: str, report: EnrichedEvalReport) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        f.write(",".join(ENRICHED_HEADER) + "\n")
        for variant, rep in (("baseline", report.baseline), ("enriched", report.enriched)):
            acc = repr(rep.accuracy) if rep.accuracy is not None else ""
            cov = repr(rep.coverage) if rep.coverage is not None else ""
            f.write(
                f"{variant},{rep.total_events},{rep.predicted_events},"
                f"{rep.correct_events},{acc},{cov}\n"
            )


def convergence_grids(
    records: Iterable[CdrRecord],
    registry: AntennaRegistry,
    match: MatchEvent,
    bbox: BoundingBox,
    cell_deg: float,
    offsets_hours: Sequence[int],
    zone_radius_km: float = 1.0,
) -> List[DensityGrid]:
    """Hourly grids around one match for users post-selected as attendees.

    Attendees are users with at least one in-zone call during the match
    window. Each grid counts every call those users place (at any antenna in
    the bbox) during [kickoff + offset, kickoff + offset + 1h). Single pass:
    only records inside some offset hour are buffered.
    """
    zone = stadium_zone(registry, match, zone_radius_km)
    w_start, w_end = match.window
    hour_ranges = [
        (match.kickoff + int(off * 3600), match.kickoff + int(off * 3600) + 3600)
        for off in offsets_hours
    ]

    attendees: Set[UserId] = set()
    buffered: List[List[Tuple[UserId, AntennaId]]] = [[] for _ in hour_ranges]
    for rec in records:
        ts = rec.timestamp
        if w_start <= ts < w_end and rec.antenna in zone.antenna_set:
            attendees.add(rec.user)
        for i, (lo, hi) in enumerate(hour_ranges):
            if lo <= ts < hi:
                buffered[i].append((rec.user, rec.antenna))

    grids = []
    for i, off in enumerate(offsets_hours):
        grid = empty_grid(
            bbox,
            cell_deg,
            time_filter=f"match={match.match_id} offset={off:+d}h",
        )
        cell_of: Dict[AntennaId, object] = {}
        for user, antenna in buffered[i]:
            if user not in attendees:
                continue
            cell = cell_of.get(antenna, _MISSING)
            if cell is _MISSING:
                a = registry[antenna]
                cell = grid_cell(GeoPoint(a.lat, a.lon), bbox, cell_deg)
                cell_of[antenna] = cell
            if cell is not None:
                grid.cells[cell] += 1
        grids.append(grid)
    return grids
