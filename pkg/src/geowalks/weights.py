"""Great-circle distances between node centroids and distance-to-weight kernels."""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from .errors import DataError, WeightingError
from .flooding import GeometryStore
from .geometry import GeoPoint
from .kg import KnowledgeGraph, Triple

EARTH_RADIUS_M = 6_378_137.0
EARTH_RADIUS_KM = EARTH_RADIUS_M / 1000.0

KERNELS = ("exponential", "threshold", "inverse")


def geodesic_distance(a: GeoPoint | tuple[float, float], b: GeoPoint | tuple[float, float]) -> float:
    """Spherical law-of-cosines distance in km between two (lon, lat) points in degrees."""
    lam1, phi1 = math.radians(a[0]), math.radians(a[1])
    lam2, phi2 = math.radians(b[0]), math.radians(b[1])
    cos_sigma = math.sin(phi1) * math.sin(phi2) + math.cos(phi1) * math.cos(phi2) * math.cos(lam2 - lam1)
    return EARTH_RADIUS_KM * math.acos(min(1.0, max(-1.0, cos_sigma)))


def geodesic_distances(lon1, lat1, lon2, lat2) -> np.ndarray:
    """Vectorized :func:`geodesic_distance`; inputs in degrees, output in km."""
    lam1, phi1, lam2, phi2 = map(np.radians, (lon1, lat1, lon2, lat2))
    cos_sigma = np.sin(phi1) * np.sin(phi2) + np.cos(phi1) * np.cos(phi2) * np.cos(lam2 - lam1)
    return EARTH_RADIUS_KM * np.arccos(np.clip(cos_sigma, -1.0, 1.0))


def exponential_weight(d):
    return np.exp(-np.asarray(d, dtype=float)) if np.ndim(d) else math.exp(-d)


def threshold_weight(d, delta: float):
    if delta <= 0:
        raise ValueError("threshold delta must be positive")
    if np.ndim(d):
        return (np.asarray(d, dtype=float) <= delta).astype(float)
    return 1.0 if d <= delta else 0.0


def inverse_distance_weight(d, alpha: int):
    """``d ** -alpha``; undefined (raises) at d = 0."""
    if alpha < 1 or int(alpha) != alpha:
        raise ValueError("alpha must be a positive integer")
    arr = np.asarray(d, dtype=float)
    if np.any(arr <= 0):
        raise WeightingError("inverse-distance weight is unbounded at distance 0")
    return arr ** -float(alpha) if np.ndim(d) else float(d) ** -float(alpha)


def normalize_distances(incident: Sequence[tuple[Triple, float]]) -> list[tuple[Triple, float]]:
    """Min-max scale the distances around one node to [0, 1].

    A degenerate range (all equal, including a single edge) maps to 0.
    """
    if not incident:
        raise ValueError("no distances to normalize")
    ds = [d for _, d in incident]
    lo, hi = min(ds), max(ds)
    if hi == lo:
        return [(t, 0.0) for t, _ in incident]
    return [(t, (d - lo) / (hi - lo)) for t, d in incident]


@dataclass(frozen=True)
class Kernel:
    name: str = "exponential"
    delta: float | None = None
    alpha: int | None = None

    def __post_init__(self):
        if self.name not in KERNELS:
            raise ValueError(f"unknown kernel {self.name!r}; choose from {KERNELS}")
        if self.name == "threshold" and (self.delta is None or self.delta <= 0):
            raise ValueError("threshold kernel needs delta > 0")
        if self.name == "inverse" and (self.alpha is None or self.alpha < 1):
            raise ValueError("inverse kernel needs a positive integer alpha")

    def __call__(self, d):
        if self.name == "exponential":
            return exponential_weight(d)
        if self.name == "threshold":
            return threshold_weight(d, self.delta)
        return inverse_distance_weight(d, self.alpha)


class WeightedEdge(NamedTuple):
    triple: Triple
    distance: float | None
    weight: float


def node_centroids(g: KnowledgeGraph, store: GeometryStore) -> tuple[np.ndarray, np.ndarray]:
    """Per-node centroid lon/lat arrays; NaN for nodes without geometry."""
    lon = np.full(g.num_nodes, np.nan)
    lat = np.full(g.num_nodes, np.nan)
    for v in store.assignments:
        if v < g.num_nodes:
            lon[v], lat[v] = store.centroid(v)
    return lon, lat


def assign_edge_weights(
    g: KnowledgeGraph,
    store: GeometryStore,
    kernel: Kernel = Kernel(),
    normalize: bool = True,
) -> list[WeightedEdge]:
    """Weight every triple by the spatial proximity of its endpoints.

    Edges whose endpoints both have geometry get the distance between the
    endpoint centroids and ``kernel(distance)``; with ``normalize`` the
    distance is first min-max scaled over the subject's full neighborhood
    (incoming and outgoing edges that carry a distance).  Every other edge
    gets weight 1 and no distance.
    """
    m = g.num_triples
    if m == 0:
        return []
    tri = np.asarray(g.triples, dtype=np.int64).reshape(m, 3)
    s, o = tri[:, 0], tri[:, 2]
    lon, lat = node_centroids(g, store)
    has = ~np.isnan(lon[s]) & ~np.isnan(lon[o])
    dist = np.full(m, np.nan)
    dist[has] = geodesic_distances(lon[s[has]], lat[s[has]], lon[o[has]], lat[o[has]])

    if normalize:
        lo = np.full(g.num_nodes, np.inf)
        hi = np.full(g.num_nodes, -np.inf)
        for ends in (s, o):
            np.minimum.at(lo, ends[has], dist[has])
            np.maximum.at(hi, ends[has], dist[has])
        span = hi[s] - lo[s]
        x = np.zeros(m)
        nz = has & (span > 0)
        x[nz] = (dist[nz] - lo[s[nz]]) / span[nz]
    else:
        x = dist

    weight = np.ones(m)
    if has.any():
        try:
            weight[has] = kernel(x[has])
        except WeightingError:
            bad = int(np.flatnonzero(has & (x <= 0))[0])
            t = g.triples[bad]
            raise WeightingError(
                f"{kernel.name} kernel undefined for triple #{bad} "
                f"({g.iri(t.subject)} {g.relation_iri(t.predicate)} {g.iri(t.object)}) at distance {x[bad]}"
            ) from None

    return [
        WeightedEdge(t, float(dist[i]) if has[i] else None, float(weight[i]))
        for i, t in enumerate(g.triples)
    ]


def write_weighted_edges(path: str | Path, g: KnowledgeGraph, edges: Sequence[WeightedEdge]) -> None:
    """TSV rows: subject IRI, predicate IRI, object IRI, distance km (or empty), weight."""
    with open(path, "w", encoding="utf-8") as fh:
        for e in edges:
            t = e.triple
            d = "" if e.distance is None else repr(e.distance)
            fh.write(f"{g.iri(t.subject)}\t{g.relation_iri(t.predicate)}\t{g.iri(t.object)}\t{d}\t{e.weight!r}\n")


def read_weighted_edges(path: str | Path, g: KnowledgeGraph) -> list[WeightedEdge]:
    """Inverse of :func:`write_weighted_edges`; rows must follow the graph's triple order."""
    edges = []
    with open(path, encoding="utf-8") as fh:
        for i, line in enumerate(fh):
            try:
                s, p, o, d, w = line.rstrip("\n").split("\t")
                t = g.triples[i]
            except (ValueError, IndexError):
                raise DataError(f"{path}:{i + 1}: malformed weighted edge row") from None
            if (s, p, o) != (g.iri(t.subject), g.relation_iri(t.predicate), g.iri(t.object)):
                raise DataError(f"{path}:{i + 1}: row does not match triple #{i} of the graph")
            edges.append(WeightedEdge(t, float(d) if d else None, float(w)))
    if len(edges) != g.num_triples:
        raise DataError(f"{path}: {len(edges)} rows for {g.num_triples} triples")
    return edges
