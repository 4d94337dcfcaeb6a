"""Per-(user, weekly-slot) most-frequent-antenna baseline.

Training counts antennas per user and hour-of-week slot; prediction returns
the most frequent antenna for the slot, abstaining when the slot was never
seen in training. Ties break toward the smallest antenna id, which makes
models independent of record order and of how training was sharded.
"""

from __future__ import annotations

import csv
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from itertools import islice
from typing import Dict, Iterable, Iterator, List, Optional, Tuple

import numpy as np

from .core import (
    AntennaId,
    CallDirection,
    CdrRecord,
    EARTH_RADIUS_KM,
    SLOTS_PER_WEEK,
    TimeSlot,
    UserId,
)
from .ingest import AntennaRegistry

SlotHistogram = Dict[Tuple[UserId, TimeSlot], Dict[AntennaId, int]]


class DirectionFilter(Enum):
    ALL = "all"
    OUTGOING_ONLY = "out"
    INCOMING_ONLY = "in"

    def accepts(self, direction: CallDirection) -> bool:
        if self is DirectionFilter.ALL:
            return True
        if self is DirectionFilter.OUTGOING_ONLY:
            return direction is CallDirection.OUTGOING
        return direction is CallDirection.INCOMING


def _argmax(counts: Dict[AntennaId, int]) -> AntennaId:
    best_a = -1
    best_c = 0
    for a, c in counts.items():
        if c > best_c or (c == best_c and a < best_a):
            best_a, best_c = a, c
    return best_a


def rebuild_argmax(histogram: SlotHistogram) -> Dict[Tuple[UserId, TimeSlot], AntennaId]:
    return {key: _argmax(counts) for key, counts in histogram.items()}


@dataclass
class BaselineModel:
    histogram: SlotHistogram
    argmax: Dict[Tuple[UserId, TimeSlot], AntennaId]
    direction_filter: DirectionFilter = DirectionFilter.ALL
    training_range: Optional[Tuple[int, int]] = None

    def predict(self, user: UserId, slot: TimeSlot) -> Optional[AntennaId]:
        """Most frequent training antenna for (user, slot), None if untrained."""
        return self.argmax.get((user, slot))


def merge_histograms(dst: SlotHistogram, src: SlotHistogram) -> None:
    """Add `src` counts into `dst`; merging shards in any order is equivalent."""
    for key, counts in src.items():
        inner = dst.get(key)
        if inner is None:
            dst[key] = dict(counts)
        else:
            for a, c in counts.items():
                inner[a] = inner.get(a, 0) + c


def _train_chunk(
    records: Iterable[CdrRecord], direction_filter: DirectionFilter, utc_offset: float
) -> Tuple[SlotHistogram, Optional[int], Optional[int]]:
    hist: SlotHistogram = {}
    t_min: Optional[int] = None
    t_max: Optional[int] = None
    offset_s = int(utc_offset * 3600)
    check_direction = direction_filter is not DirectionFilter.ALL
    for rec in records:
        if check_direction and not direction_filter.accepts(rec.direction):
            continue
        ts = rec.timestamp
        if t_min is None or ts < t_min:
            t_min = ts
        if t_max is None or ts > t_max:
            t_max = ts
        local = ts + offset_s
        days, rem = divmod(local, 86400)
        slot = ((days + 3) % 7) * 24 + rem // 3600
        key = (rec.user, slot)
        inner = hist.get(key)
        if inner is None:
            hist[key] = {rec.antenna: 1}
        else:
            a = rec.antenna
            inner[a] = inner.get(a, 0) + 1
    return hist, t_min, t_max


def _chunks(records: Iterable[CdrRecord], size: int) -> Iterator[List[CdrRecord]]:
    it = iter(records)
    while True:
        chunk = list(islice(it, size))
        if not chunk:
            return
        yield chunk


def train(
    records: Iterable[CdrRecord],
    direction_filter: DirectionFilter = DirectionFilter.ALL,
    utc_offset: float = 0.0,
    threads: int = 1,
    chunk_records: int = 1 << 18,
) -> BaselineModel:
    """Build a baseline model from a (possibly streamed) record sequence.

    Sharded training merges per-chunk histograms additively, so the result is
    identical for any `threads` value and any record order.
    """
    hist: SlotHistogram = {}
    t_min: Optional[int] = None
    t_max: Optional[int] = None

    if threads <= 1:
        hist, t_min, t_max = _train_chunk(records, direction_filter, utc_offset)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = []
            for chunk in _chunks(records, chunk_records):
                futures.append(
                    pool.submit(_train_chunk, chunk, direction_filter, utc_offset)
                )
                # Keep at most `threads` chunks buffered.
                while len(futures) > threads:
                    part, lo, hi = futures.pop(0).result()
                    merge_histograms(hist, part)
                    t_min = lo if t_min is None else (t_min if lo is None else min(t_min, lo))
                    t_max = hi if t_max is None else (t_max if hi is None else max(t_max, hi))
            for fut in futures:
                part, lo, hi = fut.result()
                merge_histograms(hist, part)
                t_min = lo if t_min is None else (t_min if lo is None else min(t_min, lo))
                t_max = hi if t_max is None else (t_max if hi is None else max(t_max, hi))

    training_range = (t_min, t_max) if t_min is not None else None
    return BaselineModel(
        histogram=hist,
        argmax=rebuild_argmax(hist),
        direction_filter=direction_filter,
        training_range=training_range,
    )


@dataclass
class EvalReport:
    """Prediction outcome counts, globally and per weekly slot.

    Accuracy is over predicted (non-abstained) events; coverage is the
    predicted fraction of all events. Both are None when their denominator
    is zero.
    """

    total_events: int = 0
    predicted_events: int = 0
    correct_events: int = 0
    per_slot: np.ndarray = None  # (168, 3) int64: total, predicted, correct

    def __post_init__(self):
        if self.per_slot is None:
            self.per_slot = np.zeros((SLOTS_PER_WEEK, 3), dtype=np.int64)

    @property
    def accuracy(self) -> Optional[float]:
        if self.predicted_events == 0:
            return None
        return self.correct_events / self.predicted_events

    @property
    def coverage(self) -> Optional[float]:
        if self.total_events == 0:
            return None
        return self.predicted_events / self.total_events

    @property
    def mean_slot_accuracy(self) -> Optional[float]:
        """Unweighted mean of per-slot accuracies over slots with predictions.

        Reported alongside the event-weighted global accuracy; the two differ
        whenever busy slots predict better or worse than quiet ones.
        """
        accs = [c / p for _t, p, c in self.per_slot.tolist() if p > 0]
        if not accs:
            return None
        return sum(accs) / len(accs)


@dataclass
class AntennaClustering:
    """Total map antenna id -> cluster id (the smallest member's id)."""

    assignment: Dict[AntennaId, int]
    threshold_km: float

    @property
    def method(self) -> str:
        return f"single-linkage<{self.threshold_km}km"

    def cluster_of(self, antenna_id: AntennaId) -> int:
        return self.assignment[antenna_id]

    def n_clusters(self) -> int:
        return len(set(self.assignment.values()))


def cluster_antennas(registry: AntennaRegistry, threshold_km: float) -> AntennaClustering:
    """Single-linkage agglomeration: antennas closer than `threshold_km` join.

    Joining uses strict inequality, so a zero threshold yields the identity
    clustering even for coincident antennas. Cluster ids are deterministic:
    each cluster is labeled by its smallest member antenna id.
    """
    if threshold_km < 0:
        raise ValueError(f"threshold_km must be >= 0, got {threshold_km}")
    ids = sorted(registry)
    parent = {a: a for a in ids}

    def find(a: int) -> int:
        root = a
        while parent[root] != root:
            root = parent[root]
        while parent[a] != root:
            parent[a], a = root, parent[a]
        return root

    if threshold_km > 0 and len(ids) > 1:
        lat = np.radians(np.array([registry[a].lat for a in ids]))
        lon = np.radians(np.array([registry[a].lon for a in ids]))
        for i in range(len(ids) - 1):
            dlat = lat[i + 1 :] - lat[i]
            dlon = lon[i + 1 :] - lon[i]
            s = (
                np.sin(dlat / 2) ** 2
                + np.cos(lat[i]) * np.cos(lat[i + 1 :]) * np.sin(dlon / 2) ** 2
            )
            d = 2 * EARTH_RADIUS_KM * np.arcsin(np.sqrt(s))
            for j in np.nonzero(d < threshold_km)[0]:
                ra, rb = find(ids[i]), find(ids[i + 1 + j])
                if ra != rb:
                    parent[max(ra, rb)] = min(ra, rb)

    assignment = {a: find(a) for a in ids}
    return AntennaClustering(assignment=assignment, threshold_km=threshold_km)


def evaluate(
    model: BaselineModel,
    test: Iterable[CdrRecord],
    utc_offset: float = 0.0,
    clustering: Optional[AntennaClustering] = None,
    direction_filter: Optional[DirectionFilter] = None,
) -> EvalReport:
    """Score the model on test records (filtered like the model by default).

    A prediction is correct on exact antenna match, or cluster match when a
    clustering is supplied. Warns if the test range overlaps the training
    range, since that inflates accuracy.
    """
    dfilter = model.direction_filter if direction_filter is None else direction_filter
    check_direction = dfilter is not DirectionFilter.ALL
    offset_s = int(utc_offset * 3600)
    argmax = model.argmax
    report = EvalReport()
    per_slot = report.per_slot
    total = predicted = correct = 0
    t_min: Optional[int] = None
    t_max: Optional[int] = None

    for rec in test:
        if check_direction and not dfilter.accepts(rec.direction):
            continue
        ts = rec.timestamp
        if t_min is None or ts < t_min:
            t_min = ts
        if t_max is None or ts > t_max:
            t_max = ts
        local = ts + offset_s
        days, rem = divmod(local, 86400)
        slot = ((days + 3) % 7) * 24 + rem // 3600
        total += 1
        per_slot[slot, 0] += 1
        p = argmax.get((rec.user, slot))
        if p is None:
            continue
        predicted += 1
        per_slot[slot, 1] += 1
        if clustering is None:
            hit = p == rec.antenna
        else:
            hit = clustering.cluster_of(p) == clustering.cluster_of(rec.antenna)
        if hit:
            correct += 1
            per_slot[slot, 2] += 1

    if (
        t_min is not None
        and model.training_range is not None
        and t_min <= model.training_range[1]
        and t_max >= model.training_range[0]
    ):
        warnings.warn(
            "test records overlap the training range; accuracy will be inflated",
            stacklevel=2,
        )

    report.total_events = total
    report.predicted_events = predicted
    report.correct_events = correct
    return report


def per_slot_report(report: EvalReport, path: str) -> None:
    """CSV with one row per weekly slot: counts plus accuracy and coverage.

    Ratio columns are left blank where their denominator is zero.
    """
    with open(path, "w", newline="", encoding="utf-8") as f:
        f.write("slot,total,predicted,correct,accuracy,coverage\n")
        for slot in range(SLOTS_PER_WEEK):
            t, p, c = (int(x) for x in report.per_slot[slot])
            acc = repr(c / p) if p else ""
            cov = repr(p / t) if t else ""
            f.write(f"{slot},{t},{p},{c},{acc},{cov}\n")


MODEL_HEADER = ("user_id", "slot", "antenna_id", "count")


def save_model(model: BaselineModel, path: str) -> None:
    """Persist histogram rows; the argmax cache is recomputed on load."""
    with open(path, "w", newline="", encoding="utf-8") as f:
        f.write(",".join(MODEL_HEADER) + "\n")
        for (user, slot) in sorted(model.histogram):
            counts = model.histogram[(user, slot)]
            for antenna in sorted(counts):
                f.write(f"{user},{slot},{antenna},{counts[antenna]}\n")


def load_model(
    path: str,
    direction_filter: DirectionFilter = DirectionFilter.ALL,
    training_range: Optional[Tuple[int, int]] = None,
) -> BaselineModel:
    """Rebuild a model from histogram rows.

    The CSV does not carry the direction filter or training range; callers
    that know them pass them back in.
    """
    hist: SlotHistogram = {}
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or tuple(header) != MODEL_HEADER:
            raise ValueError(f"unexpected model header in {path}")
        for row in reader:
            user, slot, antenna, count = int(row[0]), int(row[1]), int(row[2]), int(row[3])
            hist.setdefault((user, slot), {})[antenna] = count
    return BaselineModel(
        histogram=hist,
        argmax=rebuild_argmax(hist),
        direction_filter=direction_filter,
        training_range=training_range,
    )
