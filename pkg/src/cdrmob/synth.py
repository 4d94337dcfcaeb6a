"""Seeded synthetic populations and CDR streams with planted ground truth.

Every downstream claim in this package is verified against data produced
here: planted home/work anchors, fan flags, and match attendance give exact
expectations for the predictor, commute and event modules.

Randomness comes from numpy's PCG64 generator. The population is drawn from
``SeedSequence(seed, spawn_key=(0,))`` and each user's call stream from
``SeedSequence(seed, spawn_key=(1, user_id))``, so generation is reproducible
and can be parallelized across users without changing a single byte of
output. Per user the draw order is fixed: daily call counts, in-day call
times, per-match attendance, anchor adherence, noise antennas, per-attended-
match extra calls, directions, peers.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Set, Tuple

import numpy as np

from .core import (
    Antenna,
    AntennaId,
    BoundingBox,
    SECONDS_PER_DAY,
    SECONDS_PER_WEEK,
    SLOTS_PER_WEEK,
    UserId,
    _EPOCH_WEEKDAY,
)
from .events import Fixture, nearest_antenna
from .ingest import AntennaRegistry, CDR_HEADER

# Monday 2023-01-02 00:00 UTC; generation starts on the first local Monday
# midnight at or after this instant.
DEFAULT_START_EPOCH = 1_672_617_600

# Anchor schedule: weekday working hours sit at the work antenna, every other
# slot at home.
WORK_START_HOUR = 9
WORK_END_HOUR = 18


class ConfigInvalid(ValueError):
    """A synthesis parameter violates its documented bounds."""


@dataclass(frozen=True)
class SynthConfig:
    n_users: int
    n_antennas: int
    bbox: BoundingBox
    weeks: int
    utc_offset: float = 0.0
    call_rate: float = 4.0  # mean calls per user per day (Poisson)
    p_slot_adherence: float = 0.8
    fan_fraction: float = 0.0
    p_attend: float = 0.0
    seed: int = 0
    start_epoch: int = DEFAULT_START_EPOCH
    # Antennas excluded from home/work assignment; lets event scenarios plant
    # venues no user is anchored at.
    reserved_antennas: frozenset = frozenset()

    def validate(self) -> None:
        if self.n_users <= 0 or self.n_antennas <= 0 or self.weeks <= 0:
            raise ConfigInvalid("n_users, n_antennas and weeks must be positive")
        if self.call_rate <= 0:
            raise ConfigInvalid("call_rate must be positive")
        for name in ("p_slot_adherence", "fan_fraction", "p_attend"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ConfigInvalid(f"{name} must be in [0, 1], got {p}")
        if not -12.0 <= self.utc_offset <= 14.0:
            raise ConfigInvalid(f"utc_offset out of range: {self.utc_offset}")
        b = self.bbox
        if b.min_lat >= b.max_lat or b.min_lon >= b.max_lon:
            raise ConfigInvalid(f"degenerate bbox: {b}")
        if not (-90 <= b.min_lat and b.max_lat <= 90 and -180 <= b.min_lon and b.max_lon <= 180):
            raise ConfigInvalid(f"bbox outside coordinate bounds: {b}")
        free = self.n_antennas - len(self.reserved_antennas)
        if free < 2:
            raise ConfigInvalid("need at least 2 unreserved antennas for home/work")
        for a in self.reserved_antennas:
            if not 1 <= a <= self.n_antennas:
                raise ConfigInvalid(f"reserved antenna {a} outside 1..{self.n_antennas}")

    @property
    def n_days(self) -> int:
        return self.weeks * 7

    def start(self) -> int:
        """First local Monday 00:00 at or after `start_epoch`, as a UTC epoch."""
        offset_s = int(self.utc_offset * 3600)
        local = self.start_epoch + offset_s
        days, rem = divmod(local, SECONDS_PER_DAY)
        week_pos = ((days + _EPOCH_WEEKDAY) % 7) * SECONDS_PER_DAY + rem
        return self.start_epoch + (-week_pos) % SECONDS_PER_WEEK

    def end(self) -> int:
        return self.start() + self.n_days * SECONDS_PER_DAY

    def train_test_split(self, train_weeks: int) -> int:
        """Epoch boundary separating the first `train_weeks` from the rest."""
        if not 0 < train_weeks < self.weeks:
            raise ConfigInvalid(f"train_weeks must be in (0, {self.weeks})")
        return self.start() + train_weeks * SECONDS_PER_WEEK


@dataclass
class UserTruth:
    home: AntennaId
    work: AntennaId
    is_fan: bool


@dataclass
class SyntheticGroundTruth:
    """Planted facts the analytics are expected to recover."""

    users: Dict[UserId, UserTruth]
    attended: Set[Tuple[UserId, str]] = field(default_factory=set)

    def anchor(self, user: UserId, slot: int) -> AntennaId:
        truth = self.users[user]
        return truth.work if is_work_slot(slot) else truth.home

    def anchor_map(self, user: UserId) -> List[AntennaId]:
        return [self.anchor(user, s) for s in range(SLOTS_PER_WEEK)]

    def fans(self) -> Set[UserId]:
        return {u for u, t in self.users.items() if t.is_fan}


def is_work_slot(slot: int) -> bool:
    return slot // 24 < 5 and WORK_START_HOUR <= slot % 24 < WORK_END_HOUR


_WORK_SLOT_MASK = np.array([is_work_slot(s) for s in range(SLOTS_PER_WEEK)])


def generate_population(cfg: SynthConfig) -> Tuple[AntennaRegistry, SyntheticGroundTruth]:
    """Antennas uniform over the bbox; homes/works uniform with home != work."""
    cfg.validate()
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(0,)))

    lats = rng.uniform(cfg.bbox.min_lat, cfg.bbox.max_lat, cfg.n_antennas)
    lons = rng.uniform(cfg.bbox.min_lon, cfg.bbox.max_lon, cfg.n_antennas)
    registry = {
        i + 1: Antenna(i + 1, float(lats[i]), float(lons[i]))
        for i in range(cfg.n_antennas)
    }

    assignable = np.array(
        sorted(set(registry) - set(cfg.reserved_antennas)), dtype=np.int64
    )
    homes = assignable[rng.integers(0, len(assignable), cfg.n_users)]
    works = assignable[rng.integers(0, len(assignable), cfg.n_users)]
    clash = works == homes
    while clash.any():
        works[clash] = assignable[rng.integers(0, len(assignable), int(clash.sum()))]
        clash = works == homes
    fans = rng.random(cfg.n_users) < cfg.fan_fraction

    truth = SyntheticGroundTruth(
        users={
            u + 1: UserTruth(int(homes[u]), int(works[u]), bool(fans[u]))
            for u in range(cfg.n_users)
        }
    )
    return registry, truth


def _slots_of(ts: np.ndarray, utc_offset: float) -> np.ndarray:
    local = ts + int(utc_offset * 3600)
    days, rem = np.divmod(local, SECONDS_PER_DAY)
    return ((days + _EPOCH_WEEKDAY) % 7) * 24 + rem // 3600


def _user_stream(
    uid: int,
    cfg: SynthConfig,
    truth: SyntheticGroundTruth,
    windows: List[Tuple[int, int, int, str]],
    attended: Set[Tuple[UserId, str]],
) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """One user's (timestamps, antennas, directions, peers), unsorted."""
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(1, uid)))
    user = truth.users[uid]
    start = cfg.start()

    counts = rng.poisson(cfg.call_rate, cfg.n_days)
    n = int(counts.sum())
    ts = (
        start
        + np.repeat(np.arange(cfg.n_days, dtype=np.int64), counts) * SECONDS_PER_DAY
        + rng.integers(0, SECONDS_PER_DAY, n)
    )

    my_windows = []
    if user.is_fan:
        for w_start, w_end, venue_ant, match_id in windows:
            if rng.random() < cfg.p_attend:
                my_windows.append((w_start, w_end, venue_ant))
                attended.add((uid, match_id))

    anchors = np.where(_WORK_SLOT_MASK, user.work, user.home)[_slots_of(ts, cfg.utc_offset)]
    adhere = rng.random(n) < cfg.p_slot_adherence
    noise = rng.integers(1, cfg.n_antennas + 1, n)
    ants = np.where(adhere, anchors, noise)

    # Attendance pins every in-window call to the venue antenna and adds at
    # least one forced call there, so attended windows are never silent.
    extra_ts: List[np.ndarray] = []
    extra_ants: List[np.ndarray] = []
    for w_start, w_end, venue_ant in my_windows:
        ants[(ts >= w_start) & (ts < w_end)] = venue_ant
        k = 1 + rng.poisson(cfg.call_rate * (w_end - w_start) / SECONDS_PER_DAY)
        extra_ts.append(w_start + rng.integers(0, w_end - w_start, k))
        extra_ants.append(np.full(k, venue_ant, dtype=np.int64))
    if extra_ts:
        ts = np.concatenate([ts] + extra_ts)
        ants = np.concatenate([ants] + extra_ants)

    total = len(ts)
    directions = rng.integers(0, 2, total)
    peers = rng.integers(1, cfg.n_users + 1, total)
    return ts, ants.astype(np.int64), directions, peers


def generate_cdrs(
    registry: AntennaRegistry,
    truth: SyntheticGroundTruth,
    fixture: Optional[Fixture],
    cfg: SynthConfig,
    out_path: str,
    threads: int = 1,
) -> int:
    """Write the CDR CSV for a generated population; returns records written.

    Match attendance is decided here (fans attend each fixture match with
    probability `p_attend`) and recorded into `truth.attended`. Output rows
    are sorted by timestamp, ties by user order, so the file is byte-stable
    for a given (cfg, fixture) regardless of `threads`.
    """
    cfg.validate()
    windows: List[Tuple[int, int, int, str]] = []
    if fixture is not None and len(fixture) > 0:
        for match in fixture:
            if not (cfg.start() <= match.window[0] and match.window[1] <= cfg.end()):
                raise ConfigInvalid(
                    f"match {match.match_id} window outside generated range"
                )
            venue_ant = nearest_antenna(registry.values(), match.venue)
            windows.append((match.window[0], match.window[1], venue_ant, match.match_id))

    user_ids = list(truth.users)
    if threads <= 1:
        parts = [_user_stream(u, cfg, truth, windows, truth.attended) for u in user_ids]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(
                pool.map(lambda u: _user_stream(u, cfg, truth, windows, truth.attended), user_ids)
            )

    ts = np.concatenate([p[0] for p in parts])
    ants = np.concatenate([p[1] for p in parts])
    dirs = np.concatenate([p[2] for p in parts])
    peers = np.concatenate([p[3] for p in parts])
    users = np.repeat(
        np.array(user_ids, dtype=np.int64),
        np.array([len(p[0]) for p in parts], dtype=np.int64),
    )

    order = np.argsort(ts, kind="stable")
    ts, users, peers, dirs, ants = (
        ts[order], users[order], peers[order], dirs[order], ants[order],
    )

    n = len(ts)
    with open(out_path, "w", newline="", encoding="utf-8") as f:
        f.write(",".join(CDR_HEADER) + "\n")
        chunk = 200_000
        for lo in range(0, n, chunk):
            hi = min(lo + chunk, n)
            t_l = ts[lo:hi].tolist()
            u_l = users[lo:hi].tolist()
            p_l = peers[lo:hi].tolist()
            d_l = dirs[lo:hi].tolist()
            a_l = ants[lo:hi].tolist()
            f.write(
                "".join(
                    f"{t},{u},{p},{'OUT' if d == 0 else 'IN'},{a}\n"
                    for t, u, p, d, a in zip(t_l, u_l, p_l, d_l, a_l)
                )
            )
    return n


GROUND_TRUTH_HEADER = ("user_id", "home_antenna", "work_antenna", "is_fan")
ATTENDANCE_HEADER = ("user_id", "match_id")


def write_ground_truth(path: str, truth: SyntheticGroundTruth) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        f.write(",".join(GROUND_TRUTH_HEADER) + "\n")
        for uid in sorted(truth.users):
            t = truth.users[uid]
            f.write(f"{uid},{t.home},{t.work},{int(t.is_fan)}\n")


def load_ground_truth(path: str) -> SyntheticGroundTruth:
    users: Dict[UserId, UserTruth] = {}
    with open(path, newline="", encoding="utf-8") as f:
        header = f.readline().strip()
        if header != ",".join(GROUND_TRUTH_HEADER):
            raise ValueError(f"unexpected ground-truth header: {header}")
        for line in f:
            u, home, work, fan = line.strip().split(",")
            users[int(u)] = UserTruth(int(home), int(work), fan == "1")
    return SyntheticGroundTruth(users=users)


def write_attendance(path: str, truth: SyntheticGroundTruth) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        f.write(",".join(ATTENDANCE_HEADER) + "\n")
        for uid, match_id in sorted(truth.attended):
            f.write(f"{uid},{match_id}\n")


def load_attendance(path: str) -> Set[Tuple[UserId, str]]:
    attended: Set[Tuple[UserId, str]] = set()
    with open(path, newline="", encoding="utf-8") as f:
        header = f.readline().strip()
        if header != ",".join(ATTENDANCE_HEADER):
            raise ValueError(f"unexpected attendance header: {header}")
        for line in f:
            u, match_id = line.strip().split(",", 1)
            attended.add((int(u), match_id))
    return attended
