"""Random-walk corpus extraction over weighted out-edges.

Each step picks an out-edge of the current node with probability
proportional to its weight.  Walks stop at nodes without out-edges or after
``depth`` hops, and alternate entity and predicate tokens.
"""
from __future__ import annotations

import bisect
import itertools
import logging
import math
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .kg import KnowledgeGraph
from .weights import WeightedEdge

logger = logging.getLogger(__name__)

Walk = tuple[str, ...]


@dataclass(frozen=True)
class WalkConfig:
    depth: int = 4
    walks_per_vertex: int = 10
    seed: int = 0
    weighted: bool = True
    with_predicates: bool = True

    def __post_init__(self):
        if self.depth < 1:
            raise ValueError("depth must be >= 1")
        if self.walks_per_vertex < 1:
            raise ValueError("walks_per_vertex must be >= 1")


@dataclass
class WalkCorpus:
    walks: list[Walk] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.walks)

    def __iter__(self):
        return iter(self.walks)

    @property
    def vocabulary(self) -> Counter:
        return Counter(itertools.chain.from_iterable(self.walks))

    def write(self, path: str | Path) -> None:
        """One walk per line, tokens separated by single spaces."""
        with open(path, "w", encoding="utf-8") as fh:
            for walk in self.walks:
                fh.write(" ".join(walk))
                fh.write("\n")

    @classmethod
    def read(cls, path: str | Path) -> "WalkCorpus":
        with open(path, encoding="utf-8") as fh:
            return cls([tuple(line.split()) for line in fh if line.strip()])


def transition_probabilities(out_edges: Sequence[WeightedEdge]) -> list[tuple[WeightedEdge, float]]:
    """Pair each out-edge with ``weight / weighted out-degree``.

    An empty result marks a terminal node (no out-edges, or all of zero weight).
    Parallel edges keep separate probability mass.
    """
    weights = [e.weight for e in out_edges]
    if any(w < 0 for w in weights):
        raise ValueError("edge weights must be non-negative")
    total = math.fsum(weights)
    if not out_edges or total == 0:
        return []
    return [(e, w / total) for e, w in zip(out_edges, weights)]


class _Transitions:
    """Per-node cumulative out-edge weights for inverse-CDF sampling."""

    def __init__(self, g: KnowledgeGraph, edges: Sequence[WeightedEdge] | None, weighted: bool):
        if weighted and edges is None:
            raise ValueError("weighted walks need edge weights")
        if edges is not None and len(edges) != g.num_triples:
            raise ValueError(f"{len(edges)} weighted edges for {g.num_triples} triples")
        self.node_tokens = list(g.node_table)
        self.pred_tokens = list(g.relation_table)
        self.targets: list[list[tuple[int, int]]] = []
        self.cumulative: list[list[float]] = []
        for v in range(g.num_nodes):
            idx = g.out_triples(v)
            self.targets.append([(g.triples[i].predicate, g.triples[i].object) for i in idx])
            ws = [edges[i].weight for i in idx] if weighted else [1.0] * len(idx)
            if any(w < 0 for w in ws):
                raise ValueError(f"negative weight on an out-edge of node {v}")
            self.cumulative.append(list(itertools.accumulate(ws)))

    def walks_from(self, v: int, cfg: WalkConfig) -> list[Walk]:
        # one RNG stream per (seed, vertex) keeps output independent of scheduling
        rng = np.random.default_rng([cfg.seed, v])
        draws = iter(rng.random(cfg.walks_per_vertex * cfg.depth).tolist())
        out = []
        for _ in range(cfg.walks_per_vertex):
            cur = v
            tokens = [self.node_tokens[v]]
            for _ in range(cfg.depth):
                cum = self.cumulative[cur]
                if not cum or cum[-1] <= 0:
                    break
                u = next(draws) * cum[-1]
                j = min(bisect.bisect_right(cum, u), len(cum) - 1)
                pred, cur = self.targets[cur][j]
                if cfg.with_predicates:
                    tokens.append(self.pred_tokens[pred])
                tokens.append(self.node_tokens[cur])
            out.append(tuple(tokens))
        return out


_shared: _Transitions | None = None


def _init_worker(trans: _Transitions) -> None:
    global _shared
    _shared = trans


def _walk_chunk(args: tuple[list[int], WalkConfig]) -> list[list[Walk]]:
    vertices, cfg = args
    return [_shared.walks_from(v, cfg) for v in vertices]


def generate_walks(
    g: KnowledgeGraph,
    edges: Sequence[WeightedEdge] | None,
    cfg: WalkConfig,
    workers: int = 1,
    vertices: Iterable[int] | None = None,
) -> WalkCorpus:
    """Extract ``walks_per_vertex`` walks rooted at every vertex (or ``vertices``).

    With ``cfg.weighted`` false the edge weights are ignored and every
    out-edge, parallel edges included, is equally likely.  The corpus is
    identical for any ``workers`` count.
    """
    trans = _Transitions(g, edges, cfg.weighted)
    roots = list(range(g.num_nodes)) if vertices is None else list(vertices)
    if workers <= 1 or len(roots) < 2:
        per_vertex = [trans.walks_from(v, cfg) for v in roots]
    else:
        size = max(1, -(-len(roots) // (workers * 4)))
        chunks = [(roots[i:i + size], cfg) for i in range(0, len(roots), size)]
        with ProcessPoolExecutor(workers, initializer=_init_worker, initargs=(trans,)) as ex:
            per_vertex = [w for part in ex.map(_walk_chunk, chunks) for w in part]
    corpus = WalkCorpus([w for ws in per_vertex for w in ws])
    logger.info("generated %d walks from %d roots", len(corpus), len(roots))
    return corpus
