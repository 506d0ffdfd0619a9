"""N-Triples ingestion and the directed labeled multigraph used by every stage.

Node and relation identifiers are dense integers assigned in order of first
appearance.  IRIs are stored without angle brackets, blank nodes keep their
``_:`` prefix, and literals kept as terminal tokens are stored in their
N-Triples form with whitespace escaped so they stay a single corpus token.
"""
from __future__ import annotations

import io
import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import BinaryIO, Iterable, NamedTuple

from .errors import DataError, NTriplesError

logger = logging.getLogger(__name__)

SNAPSHOT_FORMAT = "geowalks-kg"
SNAPSHOT_VERSION = 1

LITERAL_POLICIES = ("drop", "keep")

_IRI = r"<([^<>\"{}|^`\\\x00-\x20]*)>"
_BNODE = r"(_:[A-Za-z0-9_](?:[A-Za-z0-9_.\-]*[A-Za-z0-9_\-])?)"
_LITERAL = r"\"((?:[^\"\\\n\r]|\\.)*)\"(?:@([A-Za-z]+(?:-[A-Za-z0-9]+)*)|\^\^" + _IRI + r")?"
_LINE = re.compile(
    r"^\s*(?:" + _IRI + "|" + _BNODE + r")"
    r"\s*" + _IRI +
    r"\s*(?:" + _IRI + "|" + _BNODE + "|" + _LITERAL + r")"
    r"\s*\.\s*(?:#.*)?$"
)
_ESCAPE = re.compile(r"\\(?:u([0-9A-Fa-f]{4})|U([0-9A-Fa-f]{8})|(.))")
_SIMPLE_ESCAPES = {"t": "\t", "b": "\b", "n": "\n", "r": "\r", "f": "\f",
                   '"': '"', "'": "'", "\\": "\\"}
_WS = re.compile(r"\s")


class Triple(NamedTuple):
    subject: int
    predicate: int
    object: int


def unescape_literal(text: str) -> str:
    def repl(m: re.Match) -> str:
        if m.group(1) or m.group(2):
            return chr(int(m.group(1) or m.group(2), 16))
        ch = m.group(3)
        if ch not in _SIMPLE_ESCAPES:
            raise ValueError(f"invalid escape \\{ch}")
        return _SIMPLE_ESCAPES[ch]

    return _ESCAPE.sub(repl, text)


def literal_token(lexical: str, lang: str | None, datatype: str | None) -> str:
    """Render a literal as a single whitespace-free token in N-Triples syntax."""
    body = lexical.replace("\\", "\\\\").replace('"', '\\"')
    body = _WS.sub(lambda m: "\\u%04X" % ord(m.group(0)), body)
    token = f'"{body}"'
    if lang:
        token += "@" + lang
    elif datatype:
        token += f"^^<{datatype}>"
    return token


class KnowledgeGraph:
    """Directed labeled multigraph over interned node and relation keys.

    Construction goes through :meth:`add_triple`; once handed to downstream
    stages the graph is treated as read-only.
    """

    def __init__(self) -> None:
        self.node_table: list[str] = []
        self.relation_table: list[str] = []
        self._node_index: dict[str, int] = {}
        self._relation_index: dict[str, int] = {}
        self.triples: list[Triple] = []
        # per-node triple indices; (relation, neighbor) views are derived
        self._out: list[list[int]] = []
        self._in: list[list[int]] = []

    # -- construction -------------------------------------------------
    @classmethod
    def from_triples(cls, triples: Iterable[tuple[str, str, str]], nodes: Iterable[str] = ()) -> "KnowledgeGraph":
        g = cls()
        for n in nodes:
            g.intern_node(n)
        for s, p, o in triples:
            g.add_triple(s, p, o)
        return g

    def intern_node(self, key: str) -> int:
        idx = self._node_index.get(key)
        if idx is None:
            idx = len(self.node_table)
            self._node_index[key] = idx
            self.node_table.append(key)
            self._out.append([])
            self._in.append([])
        return idx

    def intern_relation(self, key: str) -> int:
        idx = self._relation_index.get(key)
        if idx is None:
            idx = len(self.relation_table)
            self._relation_index[key] = idx
            self.relation_table.append(key)
        return idx

    def add_triple(self, s: str, p: str, o: str) -> Triple:
        t = Triple(self.intern_node(s), self.intern_relation(p), self.intern_node(o))
        self._append(t)
        return t

    def _append(self, t: Triple) -> None:
        idx = len(self.triples)
        self.triples.append(t)
        self._out[t.subject].append(idx)
        self._in[t.object].append(idx)

    # -- lookup -------------------------------------------------------
    @property
    def num_nodes(self) -> int:
        return len(self.node_table)

    @property
    def num_triples(self) -> int:
        return len(self.triples)

    def node_id(self, key: str) -> int:
        return self._node_index[key]

    def has_node(self, key: str) -> bool:
        return key in self._node_index

    def relation_id(self, key: str) -> int:
        return self._relation_index[key]

    def iri(self, node: int) -> str:
        return self.node_table[node]

    def relation_iri(self, rel: int) -> str:
        return self.relation_table[rel]

    def out_triples(self, v: int) -> list[int]:
        """Indices into :attr:`triples` of the edges leaving ``v``, in input order."""
        return self._out[v]

    def in_triples(self, v: int) -> list[int]:
        return self._in[v]

    def out_adj(self, v: int) -> list[tuple[int, int]]:
        return [(self.triples[i].predicate, self.triples[i].object) for i in self._out[v]]

    def in_adj(self, v: int) -> list[tuple[int, int]]:
        return [(self.triples[i].predicate, self.triples[i].subject) for i in self._in[v]]

    def neighbors(self, v: int) -> set[int]:
        """Undirected neighbor set N(v): union of out- and in-neighbors."""
        out = {self.triples[i].object for i in self._out[v]}
        out.update(self.triples[i].subject for i in self._in[v])
        return out

    def neighborhood(self, v: int) -> set[Triple]:
        """H(v): every triple having ``v`` as subject or object."""
        return {self.triples[i] for i in self._out[v]} | {self.triples[i] for i in self._in[v]}

    def neighborhood_indices(self, v: int) -> list[int]:
        """Triple indices incident to ``v``; a self-loop is listed once."""
        seen = dict.fromkeys(self._out[v])
        seen.update(dict.fromkeys(self._in[v]))
        return list(seen)

    def degree(self, v: int) -> int:
        return len(self._out[v]) + len(self._in[v])

    def __repr__(self) -> str:
        return f"KnowledgeGraph(nodes={self.num_nodes}, relations={len(self.relation_table)}, triples={self.num_triples})"

    # -- snapshot -----------------------------------------------------
    def to_snapshot(self, geometry_literals: dict[int, list[str]] | None = None) -> dict:
        return {
            "format": SNAPSHOT_FORMAT,
            "version": SNAPSHOT_VERSION,
            "nodes": self.node_table,
            "relations": self.relation_table,
            "triples": [list(t) for t in self.triples],
            "geometries": {str(k): v for k, v in sorted((geometry_literals or {}).items())},
        }

    @classmethod
    def from_snapshot(cls, data: dict) -> tuple["KnowledgeGraph", dict[int, list[str]]]:
        if data.get("format") != SNAPSHOT_FORMAT:
            raise DataError(f"not a graph snapshot (format={data.get('format')!r})")
        if data.get("version") != SNAPSHOT_VERSION:
            raise DataError(f"unsupported snapshot version {data.get('version')!r}")
        g = cls()
        for n in data["nodes"]:
            g.intern_node(n)
        for r in data["relations"]:
            g.intern_relation(r)
        n_nodes, n_rel = g.num_nodes, len(g.relation_table)
        for s, p, o in data["triples"]:
            if not (0 <= s < n_nodes and 0 <= o < n_nodes and 0 <= p < n_rel):
                raise DataError(f"snapshot triple ({s}, {p}, {o}) out of range")
            g._append(Triple(s, p, o))
        geoms = {int(k): list(v) for k, v in data.get("geometries", {}).items()}
        return g, geoms

    def save(self, path: str | Path, geometry_literals: dict[int, list[str]] | None = None) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_snapshot(geometry_literals), fh, separators=(",", ":"))

    @classmethod
    def load(cls, path: str | Path) -> tuple["KnowledgeGraph", dict[int, list[str]]]:
        with open(path, encoding="utf-8") as fh:
            return cls.from_snapshot(json.load(fh))


@dataclass
class ParseStats:
    lines: int = 0
    triples: int = 0
    geometries: int = 0
    literals_dropped: int = 0
    malformed: int = 0
    errors: list[tuple[int, str]] = field(default_factory=list)

    @property
    def skipped(self) -> int:
        return self.literals_dropped + self.malformed

    def as_dict(self) -> dict:
        return {"lines": self.lines, "triples": self.triples, "geometries": self.geometries,
                "literals_dropped": self.literals_dropped, "malformed": self.malformed,
                "skipped": self.skipped}


class ParseResult(NamedTuple):
    graph: KnowledgeGraph
    geometry_literals: dict[int, list[str]]
    stats: ParseStats


def parse_ntriples(
    stream: BinaryIO | str | Path | bytes,
    geometry_predicates: Iterable[str] = (),
    literal_policy: str = "drop",
    strict: bool = False,
) -> ParseResult:
    """Parse line-oriented N-Triples into a :class:`KnowledgeGraph`.

    Triples whose predicate is one of ``geometry_predicates`` and whose
    object is a literal are not added to the graph; the literal's lexical
    form is collected per subject instead.  Other literals are dropped or,
    with ``literal_policy="keep"``, interned as terminal nodes.

    Malformed lines raise :class:`NTriplesError` when ``strict`` is set and
    are otherwise counted and skipped.
    """
    if literal_policy not in LITERAL_POLICIES:
        raise ValueError(f"literal_policy must be one of {LITERAL_POLICIES}")
    geo_preds = {p.strip("<>") for p in geometry_predicates}
    if isinstance(stream, bytes):
        stream = io.BytesIO(stream)
    if isinstance(stream, (str, Path)):
        with open(stream, "rb") as fh:
            return parse_ntriples(fh, geo_preds, literal_policy, strict)

    g = KnowledgeGraph()
    geoms: dict[int, list[str]] = {}
    stats = ParseStats()

    def bad(line_no: int, msg: str) -> None:
        if strict:
            raise NTriplesError(line_no, msg)
        stats.malformed += 1
        stats.errors.append((line_no, msg))

    for line_no, raw in enumerate(stream, start=1):
        try:
            line = raw.decode("utf-8") if isinstance(raw, bytes) else raw
        except UnicodeDecodeError as exc:
            stats.lines += 1
            bad(line_no, f"invalid UTF-8: {exc}")
            continue
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        stats.lines += 1
        m = _LINE.match(line)
        if m is None:
            bad(line_no, "not a valid N-Triples statement")
            continue
        s_iri, s_bnode, pred, o_iri, o_bnode, lex, lang, dtype = m.groups()
        subject = s_iri if s_iri is not None else s_bnode
        if o_iri is not None or o_bnode is not None:
            g.add_triple(subject, pred, o_iri if o_iri is not None else o_bnode)
            stats.triples += 1
            continue
        try:
            value = unescape_literal(lex)
        except ValueError as exc:
            bad(line_no, str(exc))
            continue
        s_id = g.intern_node(subject)
        if pred in geo_preds:
            geoms.setdefault(s_id, []).append(value)
            stats.geometries += 1
        elif literal_policy == "keep":
            g.add_triple(subject, pred, literal_token(value, lang, dtype))
            stats.triples += 1
        else:
            stats.literals_dropped += 1

    logger.info("ingest %s", json.dumps(stats.as_dict(), sort_keys=True))
    return ParseResult(g, geoms, stats)
