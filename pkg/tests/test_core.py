import math
import random

import pytest

from cdrmob.core import (
    BoundingBox,
    EARTH_RADIUS_KM,
    GeoPoint,
    SECONDS_PER_WEEK,
    grid_cell,
    grid_shape,
    haversine_km,
    time_slot,
)

# Monday 2023-01-02 00:00:00 UTC
MONDAY = 1_672_617_600


def vector_great_circle_km(a, b):
    """Independent oracle: 3D unit vectors and atan2(|cross|, dot)."""
    lat1, lon1, lat2, lon2 = map(math.radians, (a[0], a[1], b[0], b[1]))
    v1 = (math.cos(lat1) * math.cos(lon1), math.cos(lat1) * math.sin(lon1), math.sin(lat1))
    v2 = (math.cos(lat2) * math.cos(lon2), math.cos(lat2) * math.sin(lon2), math.sin(lat2))
    cross = (
        v1[1] * v2[2] - v1[2] * v2[1],
        v1[2] * v2[0] - v1[0] * v2[2],
        v1[0] * v2[1] - v1[1] * v2[0],
    )
    cn = math.sqrt(sum(c * c for c in cross))
    dot = sum(x * y for x, y in zip(v1, v2))
    return EARTH_RADIUS_KM * math.atan2(cn, dot)


class TestTimeSlot:
    def test_first_slot(self):
        assert time_slot(MONDAY + 30 * 60, 0) == 0

    def test_last_slot(self):
        sunday_2359 = MONDAY + 6 * 86400 + 23 * 3600 + 59 * 60
        assert time_slot(sunday_2359, 0) == 167

    def test_wednesday_afternoon(self):
        # 2*24 + 14 by direct enumeration of the weekday-major layout
        wed_1430 = MONDAY + 2 * 86400 + 14 * 3600 + 30 * 60
        assert time_slot(wed_1430, 0) == 62

    def test_offset_shifts_local_hour(self):
        # Monday 03:30 UTC is Monday 00:30 at UTC-3
        assert time_slot(MONDAY + 3 * 3600 + 30 * 60, -3) == 0
        # and Monday 17:30 at UTC+14
        assert time_slot(MONDAY + 3 * 3600 + 30 * 60, 14) == 17

    def test_fractional_offset(self):
        # UTC+5.5: Monday 00:00 UTC is Monday 05:30 local
        assert time_slot(MONDAY, 5.5) == 5

    def test_range_property(self):
        rng = random.Random(20240)
        for _ in range(2000):
            ts = rng.randrange(-(2**33), 2**33)
            off = rng.uniform(-12, 14)
            assert 0 <= time_slot(ts, off) < 168

    def test_weekly_periodicity(self):
        rng = random.Random(20241)
        for _ in range(1000):
            ts = rng.randrange(0, 2**33)
            off = rng.choice([-12, -3, 0, 5.5, 14])
            assert time_slot(ts + SECONDS_PER_WEEK, off) == time_slot(ts, off)


class TestHaversine:
    def test_coincident_points(self):
        p = GeoPoint(-34.6037, -58.3816)
        assert haversine_km(p, p) == 0.0

    def test_one_degree_meridian_arc(self):
        d = haversine_km(GeoPoint(0, 0), GeoPoint(1, 0))
        assert d == pytest.approx(math.pi / 180 * EARTH_RADIUS_KM, abs=1e-9)
        assert d == pytest.approx(111.195, abs=0.01)

    def test_city_block_pair_vs_independent_oracle(self):
        a = GeoPoint(-34.6037, -58.3816)
        b = GeoPoint(-34.6345, -58.3642)
        oracle = vector_great_circle_km(a, b)
        assert oracle == pytest.approx(3.776839920182487, rel=1e-12)  # frozen
        assert haversine_km(a, b) == pytest.approx(oracle, rel=0.005)

    def test_symmetry_and_triangle_inequality(self):
        rng = random.Random(20242)
        for _ in range(500):
            pts = [
                GeoPoint(rng.uniform(-90, 90), rng.uniform(-180, 180))
                for _ in range(3)
            ]
            ab = haversine_km(pts[0], pts[1])
            ba = haversine_km(pts[1], pts[0])
            assert ab == pytest.approx(ba, abs=1e-12)
            assert ab >= 0
            ac = haversine_km(pts[0], pts[2])
            cb = haversine_km(pts[2], pts[1])
            assert ab <= ac + cb + 1e-9


class TestGrid:
    BBOX = BoundingBox(0.0, 0.0, 1.0, 1.0)

    def test_interior_point(self):
        assert grid_cell(GeoPoint(0.25, 0.25), self.BBOX, 0.5) == (0, 0)

    def test_max_edge_clamps_into_last_cell(self):
        assert grid_cell(GeoPoint(1.0, 1.0), self.BBOX, 0.5) == (1, 1)

    def test_outside_bbox(self):
        assert grid_cell(GeoPoint(2.0, 0.5), self.BBOX, 0.5) is None

    def test_shape_handles_inexact_multiples(self):
        assert grid_shape(self.BBOX, 0.5) == (2, 2)
        assert grid_shape(self.BBOX, 0.1) == (10, 10)
        assert grid_shape(self.BBOX, 0.3) == (4, 4)

    def test_partition_property(self):
        # Every in-bbox point maps to exactly one valid cell.
        rng = random.Random(20243)
        bbox = BoundingBox(-35.0, -59.0, -34.0, -58.0)
        rows, cols = grid_shape(bbox, 0.07)
        for _ in range(2000):
            p = GeoPoint(
                rng.uniform(bbox.min_lat, bbox.max_lat),
                rng.uniform(bbox.min_lon, bbox.max_lon),
            )
            cell = grid_cell(p, bbox, 0.07)
            assert cell is not None
            r, c = cell
            assert 0 <= r < rows and 0 <= c < cols
            # The cell actually contains the point (up to edge clamping).
            assert bbox.min_lat + r * 0.07 <= p.lat
            assert bbox.min_lon + c * 0.07 <= p.lon

    def test_degenerate_bbox_rejected(self):
        with pytest.raises(ValueError):
            grid_shape(BoundingBox(1.0, 0.0, 0.0, 1.0), 0.5)
        with pytest.raises(ValueError):
            grid_shape(self.BBOX, 0.0)
