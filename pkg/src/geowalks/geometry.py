"""WKT geometries in WGS84 lon/lat degrees: parsing, centroids, containment.

All math here is planar on lon/lat degrees.  Antimeridian-crossing shapes
are not treated specially.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, NamedTuple, Union

import numpy as np

from .errors import DataError, WKTError

Coord = tuple[float, float]

_BOUNDARY_EPS = 1e-12
# lines shorter than this many degrees (~0.1 um) and polygons whose area is
# below this share of their squared extent count as degenerate
_LENGTH_EPS = 1e-12
_AREA_REL_EPS = 1e-9


class GeoPoint(NamedTuple):
    lon: float
    lat: float


def _coords(seq) -> tuple[Coord, ...]:
    return tuple((float(x), float(y)) for x, y in seq)


@dataclass(frozen=True)
class Point:
    lon: float
    lat: float

    @property
    def coord(self) -> Coord:
        return (self.lon, self.lat)


@dataclass(frozen=True)
class LineString:
    coords: tuple[Coord, ...]

    def __post_init__(self):
        object.__setattr__(self, "coords", _coords(self.coords))


@dataclass(frozen=True)
class Polygon:
    """Exterior ring first, then holes.  Rings are closed (first == last)."""

    rings: tuple[tuple[Coord, ...], ...]

    def __post_init__(self):
        object.__setattr__(self, "rings", tuple(_coords(r) for r in self.rings))

    @property
    def exterior(self) -> tuple[Coord, ...]:
        return self.rings[0]

    @property
    def interiors(self) -> tuple[tuple[Coord, ...], ...]:
        return self.rings[1:]


@dataclass(frozen=True)
class MultiPoint:
    points: tuple[Point, ...]

    def __post_init__(self):
        object.__setattr__(self, "points", tuple(self.points))


@dataclass(frozen=True)
class MultiLineString:
    lines: tuple[LineString, ...]

    def __post_init__(self):
        object.__setattr__(self, "lines", tuple(self.lines))


@dataclass(frozen=True)
class MultiPolygon:
    polygons: tuple[Polygon, ...]

    def __post_init__(self):
        object.__setattr__(self, "polygons", tuple(self.polygons))


@dataclass(frozen=True)
class GeometryCollection:
    geometries: tuple["Geometry", ...]

    def __post_init__(self):
        object.__setattr__(self, "geometries", tuple(self.geometries))


Geometry = Union[Point, LineString, Polygon, MultiPoint, MultiLineString, MultiPolygon, GeometryCollection]


# ---------------------------------------------------------------------------
# WKT parsing

_TOKEN = re.compile(r"\s*(?:(?P<num>[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<word>[A-Za-z_]+)|(?P<punct>[(),]))")
_TRAILING_WS = re.compile(r"\s*\Z")
_LEADING_WS = re.compile(r"\s*")
_CRS_PREFIX = re.compile(r"\s*<([^>]*)>\s*")
_SRID_PREFIX = re.compile(r"\s*SRID=(\d+);", re.IGNORECASE)
_WGS84_CRS = ("http://www.opengis.net/def/crs/OGC/1.3/CRS84",
              "http://www.opengis.net/def/crs/EPSG/0/4326")


class _Parser:
    def __init__(self, text: str, start: int = 0):
        self.text = text
        self.pos = start
        self.tokens: list[tuple[str, str, int]] = []
        self.i = 0
        self._tokenize()

    def _offset(self, char_pos: int) -> int:
        return len(self.text[:char_pos].encode("utf-8"))

    def _tokenize(self) -> None:
        pos, text = self.pos, self.text
        while not _TRAILING_WS.match(text, pos):
            m = _TOKEN.match(text, pos)
            if m is None:
                bad = _LEADING_WS.match(text, pos).end()
                raise WKTError(self._offset(bad), f"unexpected character {text[bad]!r}")
            kind = m.lastgroup
            self.tokens.append((kind, m.group(kind), m.start(kind)))
            pos = m.end()
        self.tokens.append(("end", "", len(text)))

    def peek(self) -> tuple[str, str, int]:
        return self.tokens[self.i]

    def take(self) -> tuple[str, str, int]:
        tok = self.tokens[self.i]
        if tok[0] != "end":
            self.i += 1
        return tok

    def error(self, msg: str, tok=None) -> WKTError:
        tok = tok or self.peek()
        return WKTError(self._offset(tok[2]), msg)

    def expect(self, value: str) -> None:
        tok = self.take()
        if tok[1] != value:
            found = "end of input" if tok[0] == "end" else repr(tok[1])
            if value == ")" and tok[0] == "num":
                raise self.error("too many ordinates in coordinate", tok)
            raise self.error(f"expected {value!r}, found {found}", tok)

    def at(self, value: str) -> bool:
        return self.peek()[1] == value

    # grammar ------------------------------------------------------------
    def geometry(self) -> Geometry:
        kind, word, _ = tok = self.take()
        if kind != "word":
            raise self.error("expected geometry type", tok)
        gtype = word.upper()
        ndim = 2
        nxt = self.peek()
        if nxt[0] == "word" and nxt[1].upper() in ("Z", "M", "ZM"):
            ndim += len(nxt[1])
            self.take()
            nxt = self.peek()
        if nxt[0] == "word" and nxt[1].upper() == "EMPTY":
            raise self.error(f"empty {gtype} carries no location", nxt)
        self.ndim = ndim
        if gtype == "POINT":
            self.expect("(")
            lon, lat = self.coord()
            self.expect(")")
            return Point(lon, lat)
        if gtype == "LINESTRING":
            return LineString(self.line())
        if gtype == "POLYGON":
            return Polygon(self.polygon())
        if gtype == "MULTIPOINT":
            return MultiPoint(self.multipoint())
        if gtype == "MULTILINESTRING":
            return MultiLineString(tuple(LineString(c) for c in self.sequence(self.line)))
        if gtype == "MULTIPOLYGON":
            return MultiPolygon(tuple(Polygon(r) for r in self.sequence(self.polygon)))
        if gtype == "GEOMETRYCOLLECTION":
            return GeometryCollection(self.sequence(self.geometry))
        raise self.error(f"unsupported geometry type {word!r}", tok)

    def sequence(self, item) -> tuple:
        self.expect("(")
        out = [item()]
        while self.at(","):
            self.take()
            out.append(item())
        self.expect(")")
        return tuple(out)

    def coord(self) -> Coord:
        vals = []
        start = self.peek()
        while self.peek()[0] == "num" and len(vals) < self.ndim:
            vals.append(float(self.take()[1]))
        if len(vals) < self.ndim:
            tok = self.peek()
            if tok[0] == "word":
                raise self.error(f"non-numeric coordinate {tok[1]!r}", tok)
            raise self.error(f"coordinate needs {self.ndim} ordinates, got {len(vals)}", tok)
        lon, lat = vals[0], vals[1]
        if not (-180.0 <= lon <= 180.0 and -90.0 <= lat <= 90.0):
            raise self.error(f"coordinate ({lon}, {lat}) outside WGS84 lon/lat bounds", start)
        return (lon, lat)

    def line(self) -> tuple[Coord, ...]:
        start = self.peek()
        coords = self.sequence(self.coord)
        if len(coords) < 2:
            raise self.error("linestring needs at least 2 coordinates", start)
        return coords

    def ring(self) -> tuple[Coord, ...]:
        start = self.peek()
        coords = self.sequence(self.coord)
        if len(coords) < 4:
            raise self.error("polygon ring needs at least 4 coordinates", start)
        if coords[0] != coords[-1]:
            raise self.error("polygon ring is not closed", start)
        return coords

    def polygon(self) -> tuple[tuple[Coord, ...], ...]:
        return self.sequence(self.ring)

    def multipoint(self) -> tuple[Point, ...]:
        def item():
            if self.at("("):
                self.take()
                c = self.coord()
                self.expect(")")
            else:
                c = self.coord()
            return Point(*c)

        return self.sequence(item)


def parse_wkt(text: str) -> Geometry:
    """Parse a WKT literal (optionally prefixed by a GeoSPARQL CRS IRI or EWKT SRID)."""
    pos = 0
    m = _CRS_PREFIX.match(text)
    if m:
        if m.group(1) not in _WGS84_CRS:
            raise WKTError(m.start(1), f"unsupported CRS <{m.group(1)}>; reproject to WGS84 first")
        pos = m.end()
    else:
        m = _SRID_PREFIX.match(text)
        if m:
            if m.group(1) != "4326":
                raise WKTError(m.start(1), f"unsupported SRID {m.group(1)}; reproject to WGS84 first")
            pos = m.end()
    p = _Parser(text, pos)
    geom = p.geometry()
    tok = p.peek()
    if tok[0] != "end":
        raise p.error(f"trailing input {tok[1]!r}", tok)
    return geom


# ---------------------------------------------------------------------------
# serialization

def _num(v: float) -> str:
    s = repr(float(v))
    return s[:-2] if s.endswith(".0") else s


def _seq(coords) -> str:
    return "(" + ", ".join(f"{_num(x)} {_num(y)}" for x, y in coords) + ")"


def to_wkt(g: Geometry) -> str:
    if isinstance(g, Point):
        return f"POINT ({_num(g.lon)} {_num(g.lat)})"
    if isinstance(g, LineString):
        return "LINESTRING " + _seq(g.coords)
    if isinstance(g, Polygon):
        return "POLYGON (" + ", ".join(_seq(r) for r in g.rings) + ")"
    if isinstance(g, MultiPoint):
        return "MULTIPOINT (" + ", ".join(f"({_num(p.lon)} {_num(p.lat)})" for p in g.points) + ")"
    if isinstance(g, MultiLineString):
        return "MULTILINESTRING (" + ", ".join(_seq(l.coords) for l in g.lines) + ")"
    if isinstance(g, MultiPolygon):
        return "MULTIPOLYGON (" + ", ".join(
            "(" + ", ".join(_seq(r) for r in p.rings) + ")" for p in g.polygons) + ")"
    if isinstance(g, GeometryCollection):
        return "GEOMETRYCOLLECTION (" + ", ".join(to_wkt(x) for x in g.geometries) + ")"
    raise TypeError(f"not a geometry: {g!r}")


# ---------------------------------------------------------------------------
# centroid

def _explode(g: Geometry, points: list, lines: list, polygons: list) -> None:
    if isinstance(g, Point):
        points.append(g.coord)
    elif isinstance(g, LineString):
        lines.append(g.coords)
    elif isinstance(g, Polygon):
        polygons.append(g.rings)
    elif isinstance(g, MultiPoint):
        points.extend(p.coord for p in g.points)
    elif isinstance(g, MultiLineString):
        lines.extend(l.coords for l in g.lines)
    elif isinstance(g, MultiPolygon):
        polygons.extend(p.rings for p in g.polygons)
    elif isinstance(g, GeometryCollection):
        for x in g.geometries:
            _explode(x, points, lines, polygons)
    else:
        raise TypeError(f"not a geometry: {g!r}")


def _ring_moments(ring: np.ndarray) -> tuple[float, float, float]:
    x, y = ring[:-1, 0], ring[:-1, 1]
    x1, y1 = ring[1:, 0], ring[1:, 1]
    cross = x * y1 - x1 * y
    area = cross.sum() / 2.0
    return area, ((x + x1) * cross).sum() / 6.0, ((y + y1) * cross).sum() / 6.0


def centroid(geoms: Iterable[Geometry]) -> GeoPoint:
    """Representative point of a set of geometries.

    Only the highest-dimensional parts contribute: polygons are area
    weighted, lines are length weighted, points are averaged without
    weights.  Sliver polygons degrade to their rings as lines and
    near-zero-length lines to their vertices, so sub-micrometre parts
    never decide the result.
    """
    points: list[Coord] = []
    lines: list[tuple[Coord, ...]] = []
    polygons: list[tuple] = []
    for g in geoms:
        _explode(g, points, lines, polygons)
    if not (points or lines or polygons):
        raise ValueError("centroid of an empty geometry set")

    origin = np.array(
        polygons[0][0][0] if polygons else lines[0][0] if lines else points[0], dtype=float)

    if polygons:
        total = mx = my = extent = 0.0
        for rings in polygons:
            for k, ring in enumerate(rings):
                r = np.asarray(ring, dtype=float) - origin
                extent = max(extent, float(np.ptp(r, axis=0).max()))
                a, cx, cy = _ring_moments(r)
                # exterior counts positive, holes negative, whatever the winding
                sign = (1.0 if k == 0 else -1.0) * (1.0 if a >= 0 else -1.0)
                total += sign * a
                mx += sign * cx
                my += sign * cy
        if extent > _LENGTH_EPS and abs(total) > _AREA_REL_EPS * extent * extent:
            return GeoPoint(float(mx / total + origin[0]), float(my / total + origin[1]))
        lines.extend(ring for rings in polygons for ring in rings)

    if lines:
        length = mx = my = 0.0
        for line in lines:
            c = np.asarray(line, dtype=float) - origin
            seg = np.hypot(np.diff(c[:, 0]), np.diff(c[:, 1]))
            mid = (c[:-1] + c[1:]) / 2.0
            length += seg.sum()
            mx += (seg * mid[:, 0]).sum()
            my += (seg * mid[:, 1]).sum()
        if length > _LENGTH_EPS:
            return GeoPoint(float(mx / length + origin[0]), float(my / length + origin[1]))
        points.extend(c for line in lines for c in line)

    arr = np.asarray(points, dtype=float)
    if len(arr) == 1:
        return GeoPoint(float(arr[0, 0]), float(arr[0, 1]))
    c = (arr - origin).mean(axis=0) + origin
    return GeoPoint(float(c[0]), float(c[1]))


# ---------------------------------------------------------------------------
# containment

def _on_segment(px: float, py: float, a: Coord, b: Coord) -> bool:
    (ax, ay), (bx, by) = a, b
    cross = (bx - ax) * (py - ay) - (by - ay) * (px - ax)
    scale = max(abs(bx - ax), abs(by - ay), 1.0)
    if abs(cross) > _BOUNDARY_EPS * scale:
        return False
    return (min(ax, bx) - _BOUNDARY_EPS <= px <= max(ax, bx) + _BOUNDARY_EPS
            and min(ay, by) - _BOUNDARY_EPS <= py <= max(ay, by) + _BOUNDARY_EPS)


def _crossings_odd(px: float, py: float, ring: tuple[Coord, ...]) -> bool:
    inside = False
    for (ax, ay), (bx, by) in zip(ring, ring[1:]):
        if (ay > py) != (by > py):
            x_at = ax + (py - ay) * (bx - ax) / (by - ay)
            if px < x_at:
                inside = not inside
    return inside


def _in_polygon(px: float, py: float, poly: Polygon) -> bool:
    for ring in poly.rings:
        for a, b in zip(ring, ring[1:]):
            if _on_segment(px, py, a, b):
                return True
    if not _crossings_odd(px, py, poly.exterior):
        return False
    return not any(_crossings_odd(px, py, hole) for hole in poly.interiors)


def point_in_polygon(p: GeoPoint | tuple[float, float], poly: Polygon | MultiPolygon) -> bool:
    """Even-odd containment test; points on any ring boundary count as inside."""
    px, py = float(p[0]), float(p[1])
    if isinstance(poly, Polygon):
        return _in_polygon(px, py, poly)
    if isinstance(poly, MultiPolygon):
        return any(_in_polygon(px, py, q) for q in poly.polygons)
    raise TypeError(f"expected Polygon or MultiPolygon, got {type(poly).__name__}")


def read_boundaries(path: str | Path) -> dict[str, Polygon | MultiPolygon]:
    """Read ``region_id<TAB>WKT`` rows into a region -> (Multi)Polygon map."""
    regions: dict[str, Polygon | MultiPolygon] = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip() or line.startswith("#"):
                continue
            try:
                region, wkt = line.rstrip("\n").split("\t", 1)
            except ValueError:
                raise DataError(f"{path}:{line_no}: expected region<TAB>WKT") from None
            try:
                geom = parse_wkt(wkt)
            except WKTError as exc:
                raise DataError(f"{path}:{line_no}: {exc}") from exc
            if not isinstance(geom, (Polygon, MultiPolygon)):
                raise DataError(f"{path}:{line_no}: region {region!r} is not a (multi)polygon")
            regions[region] = geom
    return regions
