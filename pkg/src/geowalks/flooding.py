"""Geometry flooding: non-geographic nodes inherit the geometries of their
geographic neighbors, one frontier layer at a time, until nothing changes.
"""
from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

from .errors import DataError, WKTError
from .geometry import Geometry, GeoPoint, centroid, parse_wkt, to_wkt
from .kg import KnowledgeGraph

logger = logging.getLogger(__name__)


class GeometryStore:
    """Node -> geometry-set assignments (the set S), plus provenance.

    Geometries are interned in :attr:`geometries`; a node's set is a
    frozenset of indices into that table, so identical geometries reached
    along several paths are stored once.  ``origin[v]`` holds the iteration
    at which ``v`` was assigned (0 for original geometries) and the
    neighbors it inherited from.
    """

    def __init__(self, num_nodes: int = 0):
        self.num_nodes = num_nodes
        self.geometries: list[Geometry] = []
        self._geometry_index: dict[Geometry, int] = {}
        self.assignments: dict[int, frozenset[int]] = {}
        self.origin: dict[int, tuple[int, tuple[int, ...]]] = {}
        self._centroids: dict[frozenset[int], GeoPoint] = {}

    def intern(self, geom: Geometry) -> int:
        idx = self._geometry_index.get(geom)
        if idx is None:
            idx = len(self.geometries)
            self._geometry_index[geom] = idx
            self.geometries.append(geom)
        return idx

    def add_original(self, node: int, geom: Geometry) -> None:
        if self.origin.get(node, (0,))[0] != 0:
            raise ValueError(f"node {node} already holds flooded geometries")
        gid = self.intern(geom)
        self.assignments[node] = self.assignments.get(node, frozenset()) | {gid}
        self.origin[node] = (0, ())

    @classmethod
    def from_literals(
        cls, literals: dict[int, list[str]], num_nodes: int, strict: bool = True
    ) -> tuple["GeometryStore", list[tuple[int, str, str]]]:
        """Build the initial store from raw WKT literals keyed by node.

        Returns the store and a list of ``(node, literal, error)`` for
        literals that failed to parse (only populated when not ``strict``).
        """
        store = cls(num_nodes)
        rejected = []
        for node in sorted(literals):
            for text in literals[node]:
                try:
                    store.add_original(node, parse_wkt(text))
                except WKTError as exc:
                    if strict:
                        raise DataError(f"node {node}: {exc}") from exc
                    rejected.append((node, text, str(exc)))
        return store, rejected

    def copy(self) -> "GeometryStore":
        new = GeometryStore(self.num_nodes)
        new.geometries = list(self.geometries)
        new._geometry_index = dict(self._geometry_index)
        new.assignments = dict(self.assignments)
        new.origin = dict(self.origin)
        new._centroids = dict(self._centroids)
        return new

    def __contains__(self, node: int) -> bool:
        return node in self.assignments

    def __len__(self) -> int:
        return len(self.assignments)

    def geometry_set(self, node: int) -> list[Geometry]:
        return [self.geometries[i] for i in sorted(self.assignments.get(node, ()))]

    def iteration(self, node: int) -> int | None:
        o = self.origin.get(node)
        return None if o is None else o[0]

    def centroid(self, node: int) -> GeoPoint | None:
        ids = self.assignments.get(node)
        if ids is None:
            return None
        c = self._centroids.get(ids)
        if c is None:
            c = centroid(self.geometries[i] for i in sorted(ids))
            self._centroids[ids] = c
        return c

    # -- TSV -------------------------------------------------------------
    def write_tsv(self, path: str | Path, g: KnowledgeGraph) -> None:
        """One row per (node, geometry): node IRI, iteration, WKT."""
        with open(path, "w", encoding="utf-8") as fh:
            for node in sorted(self.assignments):
                it = self.origin[node][0]
                for gid in sorted(self.assignments[node]):
                    fh.write(f"{g.iri(node)}\t{it}\t{to_wkt(self.geometries[gid])}\n")

    @classmethod
    def read_tsv(cls, path: str | Path, g: KnowledgeGraph) -> "GeometryStore":
        store = cls(g.num_nodes)
        rows: dict[int, tuple[int, set[int]]] = {}
        with open(path, encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                try:
                    iri, it, wkt = line.rstrip("\n").split("\t")
                    node, it = g.node_id(iri), int(it)
                    gid = store.intern(parse_wkt(wkt))
                except (ValueError, KeyError, WKTError) as exc:
                    raise DataError(f"{path}:{line_no}: {exc}") from exc
                rows.setdefault(node, (it, set()))[1].add(gid)
        for node, (it, ids) in rows.items():
            store.assignments[node] = frozenset(ids)
            store.origin[node] = (it, ())
        return store


def flood(g: KnowledgeGraph, initial: GeometryStore, max_iterations: int | None = None) -> GeometryStore:
    """Propagate geometry sets across the undirected neighborhood, layer by layer.

    Iteration ``k`` considers every unassigned node adjacent to an assigned
    one and gives it the union of the sets held by those neighbors at the
    *start* of the iteration; assignments made during iteration ``k`` only
    become visible in iteration ``k + 1``.  Nodes in components without any
    geometry stay unassigned.  ``initial`` is not modified.
    """
    store = initial.copy()
    store.num_nodes = max(store.num_nodes, g.num_nodes)
    assigned = store.assignments
    k = max((o[0] for o in store.origin.values()), default=0)

    frontier = {u for v in assigned for u in g.neighbors(v)} - assigned.keys()
    while frontier:
        if max_iterations is not None and k >= max_iterations:
            logger.warning("flooding stopped at iteration cap %d with %d nodes pending", k, len(frontier))
            break
        k += 1
        layer: dict[int, tuple[frozenset[int], tuple[int, ...]]] = {}
        for v in sorted(frontier):
            sources = tuple(sorted(u for u in g.neighbors(v) if u in assigned))
            sets = {assigned[u] for u in sources}
            # share the neighbor's frozenset when there is only one distinct set
            merged = next(iter(sets)) if len(sets) == 1 else frozenset().union(*sets)
            layer[v] = (merged, sources)
        for v, (merged, sources) in layer.items():
            assigned[v] = merged
            store.origin[v] = (k, sources)
        frontier = {u for v in layer for u in g.neighbors(v)} - assigned.keys()
        logger.debug("flood iteration %d assigned %d nodes", k, len(layer))
    return store


@dataclass
class FloodingReport:
    iterations: int = 0
    per_iteration: dict[int, int] = field(default_factory=dict)
    set_sizes: dict[int, int] = field(default_factory=dict)
    unassigned: int = 0

    def as_dict(self) -> dict:
        return {"iterations": self.iterations,
                "per_iteration": {str(k): v for k, v in self.per_iteration.items()},
                "set_sizes": {str(k): v for k, v in self.set_sizes.items()},
                "unassigned": self.unassigned}


def flooding_report(store: GeometryStore) -> FloodingReport:
    per_it = Counter(o[0] for o in store.origin.values())
    sizes = Counter(len(s) for s in store.assignments.values())
    return FloodingReport(
        iterations=max(per_it, default=0),
        per_iteration=dict(sorted(per_it.items())),
        set_sizes=dict(sorted(sizes.items())),
        unassigned=store.num_nodes - len(store.assignments),
    )
