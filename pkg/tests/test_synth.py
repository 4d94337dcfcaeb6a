import math

import pytest

from cdrmob.core import BoundingBox, GeoPoint
from cdrmob.events import Fixture, MatchEvent
from cdrmob.ingest import ParsePolicy, stream_cdrs
from cdrmob.synth import (
    ConfigInvalid,
    SynthConfig,
    generate_cdrs,
    generate_population,
    is_work_slot,
    load_attendance,
    load_ground_truth,
    write_attendance,
    write_ground_truth,
)

BBOX = BoundingBox(-35.0, -59.0, -34.0, -58.0)


def make_cfg(**kw):
    base = dict(
        n_users=50,
        n_antennas=10,
        bbox=BBOX,
        weeks=2,
        utc_offset=-3,
        call_rate=3.0,
        p_slot_adherence=0.8,
        seed=42,
    )
    base.update(kw)
    return SynthConfig(**base)


def saturday_match(cfg, week, match_id, venue, hour=18):
    """A match in the given week, Saturday local `hour`, 1h before to 3h after."""
    kickoff = cfg.start() + week * 7 * 86400 + 5 * 86400 + hour * 3600
    return MatchEvent(
        match_id=match_id,
        team="home",
        venue=venue,
        kickoff=kickoff,
        window=(kickoff - 3600, kickoff + 3 * 3600),
    )


class TestConfig:
    def test_bad_probability(self):
        with pytest.raises(ConfigInvalid):
            make_cfg(p_slot_adherence=1.5).validate()

    def test_bad_counts(self):
        with pytest.raises(ConfigInvalid):
            make_cfg(n_users=0).validate()
        with pytest.raises(ConfigInvalid):
            make_cfg(call_rate=0.0).validate()

    def test_degenerate_bbox(self):
        with pytest.raises(ConfigInvalid):
            make_cfg(bbox=BoundingBox(1.0, 0.0, 0.0, 1.0)).validate()

    def test_reserved_leaves_too_few(self):
        with pytest.raises(ConfigInvalid):
            make_cfg(n_antennas=3, reserved_antennas=frozenset({1, 2})).validate()

    def test_start_is_local_monday_midnight(self):
        from cdrmob.core import time_slot

        for off in (-3, 0, 5.5):
            cfg = make_cfg(utc_offset=off)
            assert time_slot(cfg.start(), off) == 0
            assert (cfg.start() + int(off * 3600)) % 86400 == 0


class TestAnchorSchedule:
    def test_work_slots_are_weekday_business_hours(self):
        assert not is_work_slot(0)  # Monday 00
        assert is_work_slot(9)  # Monday 09
        assert is_work_slot(17)  # Monday 17
        assert not is_work_slot(18)  # Monday 18
        assert is_work_slot(4 * 24 + 12)  # Friday noon
        assert not is_work_slot(5 * 24 + 12)  # Saturday noon
        assert sum(is_work_slot(s) for s in range(168)) == 5 * 9


class TestPopulation:
    def test_deterministic(self):
        cfg = make_cfg(n_users=10, n_antennas=5)
        assert generate_population(cfg) == generate_population(cfg)

    def test_home_differs_from_work(self):
        _, truth = generate_population(make_cfg(n_users=200, n_antennas=5))
        assert all(t.home != t.work for t in truth.users.values())

    def test_no_fans_at_zero_fraction(self):
        _, truth = generate_population(make_cfg(fan_fraction=0.0))
        assert truth.fans() == set()

    def test_fan_count_within_binomial_bounds(self):
        cfg = make_cfg(n_users=10_000, fan_fraction=0.3)
        _, truth = generate_population(cfg)
        expected = 3000
        sigma = math.sqrt(10_000 * 0.3 * 0.7)
        assert abs(len(truth.fans()) - expected) <= 3 * sigma

    def test_antennas_inside_bbox(self):
        registry, _ = generate_population(make_cfg(n_antennas=100))
        for a in registry.values():
            assert BBOX.contains(GeoPoint(a.lat, a.lon))

    def test_reserved_antennas_never_anchors(self):
        cfg = make_cfg(n_antennas=6, reserved_antennas=frozenset({1, 2}))
        _, truth = generate_population(cfg)
        for t in truth.users.values():
            assert t.home not in (1, 2)
            assert t.work not in (1, 2)


class TestGenerateCdrs:
    def test_byte_identical_across_runs_and_threads(self, tmp_path):
        cfg = make_cfg()
        paths = []
        for name, threads in (("a", 1), ("b", 1), ("c", 4)):
            registry, truth = generate_population(cfg)
            p = tmp_path / f"{name}.csv"
            generate_cdrs(registry, truth, None, cfg, str(p), threads=threads)
            paths.append(p)
        blobs = [p.read_bytes() for p in paths]
        assert blobs[0] == blobs[1] == blobs[2]

    def test_valid_under_strict_ingest(self, tmp_path):
        cfg = make_cfg()
        registry, truth = generate_population(cfg)
        p = str(tmp_path / "c.csv")
        n = generate_cdrs(registry, truth, None, cfg, p)
        stream = stream_cdrs(p, registry, ParsePolicy.STRICT)
        records = list(stream)
        assert len(records) == n
        assert stream.stats.malformed_count == 0
        # sorted by timestamp
        times = [r.timestamp for r in records]
        assert times == sorted(times)
        assert all(cfg.start() <= t < cfg.end() for t in times)

    def test_ingest_write_roundtrip_is_byte_exact(self, tmp_path):
        from cdrmob.ingest import write_cdrs

        cfg = make_cfg()
        registry, truth = generate_population(cfg)
        first = tmp_path / "c.csv"
        generate_cdrs(registry, truth, None, cfg, str(first))
        second = tmp_path / "c2.csv"
        write_cdrs(str(second), stream_cdrs(str(first), registry, ParsePolicy.STRICT))
        assert first.read_bytes() == second.read_bytes()

    def test_total_volume_matches_poisson_sum(self, tmp_path):
        cfg = make_cfg(n_users=1000, weeks=1, call_rate=2.0, seed=7)
        registry, truth = generate_population(cfg)
        n = generate_cdrs(registry, truth, None, cfg, str(tmp_path / "c.csv"))
        expected = 1000 * 7 * 2.0
        assert abs(n - expected) <= 3 * math.sqrt(expected)

    def test_full_adherence_pins_every_call_to_anchor(self, tmp_path):
        from cdrmob.core import time_slot

        cfg = make_cfg(p_slot_adherence=1.0)
        registry, truth = generate_population(cfg)
        p = str(tmp_path / "c.csv")
        generate_cdrs(registry, truth, None, cfg, p)
        for rec in stream_cdrs(p, registry):
            slot = time_slot(rec.timestamp, cfg.utc_offset)
            assert rec.antenna == truth.anchor(rec.user, slot)

    def test_anchor_match_rate_follows_bernoulli_mixture(self, tmp_path):
        from cdrmob.core import time_slot

        cfg = make_cfg(
            n_users=1000, weeks=15, n_antennas=20, call_rate=1.0,
            p_slot_adherence=0.8, seed=11,
        )
        registry, truth = generate_population(cfg)
        p = str(tmp_path / "c.csv")
        generate_cdrs(registry, truth, None, cfg, p)
        hits = total = 0
        for rec in stream_cdrs(p, registry):
            total += 1
            slot = time_slot(rec.timestamp, cfg.utc_offset)
            hits += rec.antenna == truth.anchor(rec.user, slot)
        # Chance hits: a noise draw lands on the anchor with prob 1/n_antennas.
        expected = 0.8 + 0.2 / cfg.n_antennas
        sigma = math.sqrt(expected * (1 - expected) / total)
        assert abs(hits / total - expected) <= 3 * sigma

    def test_unanchored_antenna_gets_only_chance_traffic(self, tmp_path):
        # With no fixture there is nothing special about any antenna beyond
        # its anchored users; a reserved antenna sees pure noise traffic.
        cfg = make_cfg(
            n_users=500, weeks=4, n_antennas=10, call_rate=2.0,
            p_slot_adherence=0.8, reserved_antennas=frozenset({5}), seed=13,
        )
        registry, truth = generate_population(cfg)
        p = str(tmp_path / "c.csv")
        n = generate_cdrs(registry, truth, None, cfg, p)
        at_reserved = sum(1 for r in stream_cdrs(p, registry) if r.antenna == 5)
        expected = n * (1 - 0.8) / 10
        sigma = math.sqrt(expected)
        assert abs(at_reserved - expected) <= 3 * sigma

    def test_forced_attendance_places_calls_at_venue(self, tmp_path):
        cfg = make_cfg(
            n_users=30, n_antennas=8, weeks=3, fan_fraction=0.5, p_attend=1.0,
            reserved_antennas=frozenset({8}), seed=3,
        )
        registry, truth = generate_population(cfg)
        venue = GeoPoint(registry[8].lat, registry[8].lon)
        fixture = Fixture([saturday_match(cfg, w, f"m{w}", venue) for w in range(3)])
        p = str(tmp_path / "c.csv")
        generate_cdrs(registry, truth, fixture, cfg, p)

        fans = truth.fans()
        assert fans, "scenario needs at least one fan"
        assert truth.attended == {(u, m.match_id) for u in fans for m in fixture}
        in_window_at_venue = {(m.match_id, u): 0 for m in fixture for u in fans}
        for rec in stream_cdrs(p, registry):
            m = fixture.match_at(rec.timestamp)
            if m is None or rec.user not in fans:
                continue
            # every in-window call of an attendee is at the venue antenna
            assert rec.antenna == 8
            in_window_at_venue[(m.match_id, rec.user)] += 1
        assert all(n >= 1 for n in in_window_at_venue.values())

    def test_fixture_window_outside_range_rejected(self, tmp_path):
        cfg = make_cfg(weeks=1)
        registry, truth = generate_population(cfg)
        venue = GeoPoint(registry[1].lat, registry[1].lon)
        late = saturday_match(cfg, 5, "m", venue)  # week 5 of a 1-week range
        with pytest.raises(ConfigInvalid):
            generate_cdrs(registry, truth, Fixture([late]), cfg, str(tmp_path / "c.csv"))


class TestGroundTruthFiles:
    def test_roundtrip(self, tmp_path):
        cfg = make_cfg(fan_fraction=0.4)
        _, truth = generate_population(cfg)
        truth.attended.add((3, "m1"))
        truth.attended.add((7, "m2"))
        gt = str(tmp_path / "gt.csv")
        att = str(tmp_path / "att.csv")
        write_ground_truth(gt, truth)
        write_attendance(att, truth)
        loaded = load_ground_truth(gt)
        assert loaded.users == truth.users
        assert load_attendance(att) == truth.attended
