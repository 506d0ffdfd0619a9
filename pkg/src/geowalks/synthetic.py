"""Synthetic partially-geographic graphs with a known class per node.

Nodes live in geographic clusters (the class label).  Most edges join
nearby nodes of the same cluster; a share of "twin town" edges jumps to a
random node of another cluster, which is exactly the kind of link that
spatially weighted walks should learn to avoid.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import Point, to_wkt

GEOMETRY_PREDICATE = "http://www.opengis.net/ont/geosparql#asWKT"
BASE = "http://example.org/synthetic/"

DEFAULT_CENTERS = ((4.0, 44.0), (16.0, 44.0), (4.0, 54.0), (16.0, 54.0))


@dataclass
class SyntheticGraph:
    triples: list[tuple[str, str, str]] = field(default_factory=list)
    geometries: dict[str, str] = field(default_factory=dict)
    labels: dict[str, str] = field(default_factory=dict)

    def ntriples(self) -> str:
        lines = [f"<{s}> <{p}> <{o}> ." for s, p, o in self.triples]
        lines += [f'<{n}> <{GEOMETRY_PREDICATE}> "{w}" .' for n, w in self.geometries.items()]
        return "\n".join(lines) + "\n"

    def write(self, directory: str | Path) -> tuple[Path, Path]:
        """Write ``graph.nt`` and ``labels.tsv`` into ``directory``."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        graph, labels = directory / "graph.nt", directory / "labels.tsv"
        graph.write_text(self.ntriples(), encoding="utf-8")
        labels.write_text("".join(f"{n}\t{c}\n" for n, c in self.labels.items()), encoding="utf-8")
        return graph, labels


def cluster_graph(
    n_nodes: int = 2000,
    centers: tuple[tuple[float, float], ...] = DEFAULT_CENTERS,
    geo_fraction: float = 0.3,
    local_degree: int = 2,
    twin_degree: int = 2,
    spread_deg: float = 0.5,
    local_pool: int = 25,
    n_predicates: int = 4,
    seed: int = 0,
) -> SyntheticGraph:
    """Generate a clustered benchmark graph.

    Every node gets ``local_degree`` out-edges to nodes drawn from its
    ``local_pool`` geographically nearest cluster mates, plus
    ``twin_degree`` out-edges to uniformly random nodes of other clusters.
    Predicates are drawn uniformly so they carry no class signal.  A
    ``geo_fraction`` share of nodes gets its latent position as a POINT.
    """
    rng = np.random.default_rng(seed)
    k = len(centers)
    cluster = np.arange(n_nodes) % k
    rng.shuffle(cluster)
    pos = np.asarray(centers, dtype=float)[cluster] + rng.normal(0.0, spread_deg, size=(n_nodes, 2))
    names = [f"{BASE}n{i}" for i in range(n_nodes)]
    preds = [f"{BASE}p{j}" for j in range(n_predicates)]

    out = SyntheticGraph()
    members = [np.flatnonzero(cluster == c) for c in range(k)]
    for i in range(n_nodes):
        mates = members[cluster[i]]
        mates = mates[mates != i]
        d = np.hypot(*(pos[mates] - pos[i]).T)
        near = mates[np.argsort(d, kind="stable")[:local_pool]]
        others = np.flatnonzero(cluster != cluster[i])
        targets = list(rng.choice(near, size=local_degree, replace=False))
        targets += list(rng.choice(others, size=twin_degree, replace=False))
        for t in targets:
            out.triples.append((names[i], preds[rng.integers(n_predicates)], names[int(t)]))
        out.labels[names[i]] = f"cluster{cluster[i]}"

    n_geo = int(round(geo_fraction * n_nodes))
    for i in sorted(rng.choice(n_nodes, size=n_geo, replace=False).tolist()):
        out.geometries[names[i]] = to_wkt(Point(round(pos[i, 0], 6), round(pos[i, 1], 6)))
    return out
