import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from geowalks.errors import DataError, WKTError
from geowalks.geometry import (GeometryCollection, GeoPoint, LineString, MultiLineString, MultiPoint,
                               MultiPolygon, Point, Polygon, centroid, parse_wkt, point_in_polygon,
                               read_boundaries, to_wkt)

UNIT = Polygon((((0, 0), (1, 0), (1, 1), (0, 1), (0, 0)),))


# -- parsing ----------------------------------------------------------------------

def test_point():
    assert parse_wkt("POINT (8.46 49.48)") == Point(8.46, 49.48)


def test_polygon_ring():
    g = parse_wkt("POLYGON ((0 0, 1 0, 1 1, 0 1, 0 0))")
    assert isinstance(g, Polygon)
    assert len(g.rings) == 1 and len(g.exterior) == 5


def test_point_arity_error():
    with pytest.raises(WKTError) as exc:
        parse_wkt("POINT (8.46)")
    assert exc.value.offset == 11


@pytest.mark.parametrize("text", [
    "point(1 2)", "  Point  (  1   2 )  ", "POINT(1e0 2.0)", "POINT Z (1 2 3)", "POINT ZM (1 2 3 4)",
    "<http://www.opengis.net/def/crs/OGC/1.3/CRS84> POINT (1 2)", "SRID=4326;POINT (1 2)",
])
def test_point_spellings(text):
    assert parse_wkt(text) == Point(1.0, 2.0)


@pytest.mark.parametrize("text, offset", [
    ("POINT (1 2", 10),
    ("POINT (a 2)", 7),
    ("POINT (200 2)", 7),
    ("POINT (1 -95)", 7),
    ("POINT EMPTY", 6),
    ("CIRCLE (1 2)", 0),
    ("POINT (1 2 3)", 11),
    ("POINT (1 2))", 11),
    ("POLYGON ((0 0, 1 0, 1 1, 0 0.5))", 9),
    ("POLYGON ((0 0, 1 0, 0 0))", 9),
    ("LINESTRING (0 0)", 11),
    ("POINT (1 2) ?", 12),
])
def test_errors_carry_offsets(text, offset):
    with pytest.raises(WKTError) as exc:
        parse_wkt(text)
    assert exc.value.offset == offset


def test_offsets_are_bytes():
    with pytest.raises(WKTError) as exc:
        parse_wkt("POINT (1 é)")
    assert exc.value.offset == 9
    with pytest.raises(WKTError) as exc:
        parse_wkt("SRID=28992;POINT (1 2)")
    assert exc.value.offset == 5


def test_foreign_crs_rejected():
    with pytest.raises(WKTError):
        parse_wkt("<http://www.opengis.net/def/crs/EPSG/0/28992> POINT (155000 463000)")


def test_all_variants():
    text = ("GEOMETRYCOLLECTION (POINT (1 2), LINESTRING (0 0, 1 1), "
            "MULTIPOINT ((1 1), 2 2), MULTILINESTRING ((0 0, 1 0), (1 1, 2 2)), "
            "MULTIPOLYGON (((0 0, 1 0, 1 1, 0 0)), ((5 5, 6 5, 6 6, 5 5), (5.2 5.1, 5.8 5.1, 5.8 5.7, 5.2 5.1))))")
    g = parse_wkt(text)
    assert isinstance(g, GeometryCollection)
    assert [type(x) for x in g.geometries] == [Point, LineString, MultiPoint, MultiLineString, MultiPolygon]
    assert g.geometries[2] == MultiPoint((Point(1, 1), Point(2, 2)))
    assert len(g.geometries[4].polygons[1].interiors) == 1
    assert parse_wkt(to_wkt(g)) == g


coord = st.tuples(st.floats(-180, 180, allow_nan=False), st.floats(-90, 90, allow_nan=False))


def _ring(cs):
    return tuple(cs) + (cs[0],)


points = st.builds(lambda c: Point(*c), coord)
lines = st.builds(LineString, st.lists(coord, min_size=2, max_size=6).map(tuple))
polygons = st.builds(lambda rs: Polygon(tuple(_ring(r) for r in rs)),
                     st.lists(st.lists(coord, min_size=3, max_size=6), min_size=1, max_size=3))
simple = st.one_of(points, lines, polygons,
                   st.builds(MultiPoint, st.lists(points, min_size=1, max_size=4).map(tuple)),
                   st.builds(MultiLineString, st.lists(lines, min_size=1, max_size=3).map(tuple)),
                   st.builds(MultiPolygon, st.lists(polygons, min_size=1, max_size=3).map(tuple)))
geometries = st.one_of(simple, st.builds(GeometryCollection, st.lists(simple, min_size=1, max_size=3).map(tuple)))


@settings(max_examples=200, deadline=None)
@given(geometries)
def test_round_trip_is_fixed_point(g):
    parsed = parse_wkt(to_wkt(g))
    assert parsed == g
    assert parse_wkt(to_wkt(parsed)) == parsed


# -- centroid ---------------------------------------------------------------------

def test_centroid_points_unweighted():
    assert centroid([Point(0, 0), Point(0, 2)]) == GeoPoint(0.0, 1.0)


def test_centroid_unit_square():
    assert centroid([UNIT]) == pytest.approx((0.5, 0.5), abs=1e-12)


def test_polygon_dominates_point():
    assert centroid([Point(5, 5), UNIT]) == pytest.approx((0.5, 0.5), abs=1e-12)


def test_centroid_area_weighted():
    # unit square at origin plus a 2x2 square centred on (5.5, 0.5): areas 1 and 4
    big = Polygon((((4.5, -0.5), (6.5, -0.5), (6.5, 1.5), (4.5, 1.5), (4.5, -0.5)),))
    assert centroid([UNIT, big]) == pytest.approx(((0.5 + 4 * 5.5) / 5, (0.5 + 4 * 0.5) / 5), abs=1e-12)


def test_centroid_hole_is_subtracted():
    holed = Polygon((((0, 0), (4, 0), (4, 4), (0, 4), (0, 0)), ((0, 0), (2, 0), (2, 2), (0, 2), (0, 0))))
    # 16 * (2, 2) - 4 * (1, 1) over area 12
    assert centroid([holed]) == pytest.approx((28 / 12, 28 / 12), abs=1e-12)


def test_centroid_winding_does_not_matter():
    cw = Polygon((((0, 0), (0, 1), (1, 1), (1, 0), (0, 0)),))
    assert centroid([cw]) == pytest.approx((0.5, 0.5), abs=1e-12)


def test_centroid_lines_length_weighted():
    g = [LineString(((0, 0), (2, 0))), LineString(((10, 0), (10, 1)))]
    # lengths 2 and 1, midpoints (1, 0) and (10, 0.5)
    assert centroid(g) == pytest.approx(((2 * 1 + 10) / 3, 0.5 / 3), abs=1e-12)


def test_line_beats_point():
    assert centroid([Point(50, 50), LineString(((0, 0), (2, 0)))]) == pytest.approx((1, 0), abs=1e-12)


def test_degenerate_polygon_falls_back_to_ring():
    flat = Polygon((((0, 0), (2, 0), (1, 0), (0, 0)),))
    assert centroid([flat]) == pytest.approx((1.0, 0.0), abs=1e-12)


def test_degenerate_line_falls_back_to_points():
    assert centroid([LineString(((3, 4), (3, 4)))]) == GeoPoint(3.0, 4.0)


def test_empty_set_rejected():
    with pytest.raises(ValueError):
        centroid([])


@settings(max_examples=200, deadline=None)
@given(coord)
def test_singleton_point_centroid_exact(c):
    assert centroid([Point(*c)]) == GeoPoint(*c)


def _shift(g, dx, dy):
    def mv(cs):
        return tuple((x + dx, y + dy) for x, y in cs)
    if isinstance(g, Point):
        return Point(g.lon + dx, g.lat + dy)
    if isinstance(g, LineString):
        return LineString(mv(g.coords))
    if isinstance(g, Polygon):
        return Polygon(tuple(mv(r) for r in g.rings))
    raise TypeError(g)


small_coord = st.tuples(st.floats(-60, 60, allow_nan=False), st.floats(-40, 40, allow_nan=False))
shapes = st.one_of(
    st.builds(lambda c: Point(*c), small_coord),
    st.builds(LineString, st.lists(small_coord, min_size=2, max_size=5).map(tuple)),
    st.builds(lambda r: Polygon((_ring(r),)), st.lists(small_coord, min_size=3, max_size=6)),
)


@settings(max_examples=200, deadline=None)
@given(st.lists(shapes, min_size=1, max_size=4), st.floats(-20, 20), st.floats(-20, 20))
def test_centroid_translation_equivariant(gs, dx, dy):
    base = centroid(gs)
    moved = centroid([_shift(g, dx, dy) for g in gs])
    assert moved.lon == pytest.approx(base.lon + dx, abs=1e-6)
    assert moved.lat == pytest.approx(base.lat + dy, abs=1e-6)


def test_sliver_polygon_centroid_is_stable_under_shift():
    sliver = Polygon((_ring([(0.0, 0.0), (1.0, 1.0), (2.220446049250313e-16, 0.0)]),))
    base, moved = centroid([sliver]), centroid([_shift(sliver, 2.0, 0.0)])
    assert moved.lon == pytest.approx(base.lon + 2.0, abs=1e-9)
    assert moved.lat == pytest.approx(base.lat, abs=1e-9)
    speck = [Point(0.0, 0.0), LineString(((1.0, 0.0), (1.0, 6.781957019144151e-244)))]
    assert tuple(centroid(speck)) == pytest.approx((2 / 3, 0.0), abs=1e-12)


# -- point in polygon -------------------------------------------------------------

@pytest.mark.parametrize("p, inside", [((0.5, 0.5), True), ((2, 2), False), ((1, 0.5), True), ((0, 0), True),
                                       ((1.0000001, 0.5), False)])
def test_unit_square_containment(p, inside):
    assert point_in_polygon(p, UNIT) is inside


def test_hole_and_multipolygon():
    holed = Polygon((((0, 0), (4, 0), (4, 4), (0, 4), (0, 0)), ((1, 1), (3, 1), (3, 3), (1, 3), (1, 1))))
    assert not point_in_polygon((2, 2), holed)
    assert point_in_polygon((0.5, 2), holed)
    assert point_in_polygon((1, 2), holed)  # on the hole's edge
    multi = MultiPolygon((UNIT, Polygon((((5, 5), (6, 5), (6, 6), (5, 5)),))))
    assert point_in_polygon((5.9, 5.5), multi)
    assert not point_in_polygon((3, 3), multi)


def _winding_number(px, py, ring):
    """Sunday's winding number (independent of the even-odd implementation)."""
    wn = 0
    for (ax, ay), (bx, by) in zip(ring, ring[1:]):
        is_left = (bx - ax) * (py - ay) - (px - ax) * (by - ay)
        if ay <= py < by and is_left > 0:
            wn += 1
        elif by <= py < ay and is_left < 0:
            wn -= 1
    return wn


def _star_ring(rng, cx, cy, r0, r1, n):
    ang = np.sort(rng.uniform(0, 2 * math.pi, n))
    rad = rng.uniform(r0, r1, n)
    pts = [(cx + r * math.cos(a), cy + r * math.sin(a)) for a, r in zip(ang, rad)]
    return tuple(pts) + (pts[0],)


@pytest.mark.parametrize("seed", range(5))
def test_containment_matches_winding_number(seed):
    rng = np.random.default_rng(seed)
    outer = _star_ring(rng, 10.0, 45.0, 2.0, 5.0, int(rng.integers(3, 25)))
    hole = _star_ring(rng, 10.0, 45.0, 0.3, 1.0, int(rng.integers(3, 10)))
    for poly in (Polygon((outer,)), Polygon((outer, hole))):
        xs = rng.uniform(4, 16, 1000)
        ys = rng.uniform(39, 51, 1000)
        for x, y in zip(xs, ys):
            expected = _winding_number(x, y, outer) != 0 and not (
                len(poly.rings) > 1 and _winding_number(x, y, hole) != 0)
            assert point_in_polygon((x, y), poly) is expected


def test_read_boundaries(tmp_path):
    p = tmp_path / "regions.tsv"
    p.write_text("# region\twkt\nA\tPOLYGON ((0 0, 1 0, 1 1, 0 0))\n"
                 "B\tMULTIPOLYGON (((5 5, 6 5, 6 6, 5 5)))\n")
    regions = read_boundaries(p)
    assert set(regions) == {"A", "B"}
    assert isinstance(regions["B"], MultiPolygon)
    p.write_text("C\tPOINT (1 2)\n")
    with pytest.raises(DataError):
        read_boundaries(p)
