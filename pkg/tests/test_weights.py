import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from geowalks.errors import DataError, WeightingError
from geowalks.flooding import GeometryStore, flood
from geowalks.geometry import Point
from geowalks.kg import KnowledgeGraph
from geowalks.weights import (EARTH_RADIUS_KM, Kernel, assign_edge_weights, exponential_weight,
                              geodesic_distance, geodesic_distances, inverse_distance_weight,
                              normalize_distances, read_weighted_edges, threshold_weight,
                              write_weighted_edges)

from graphs import erdos_renyi, seed_points

MANNHEIM = (8.4660, 49.4875)
ZURICH = (8.5417, 47.3769)
MANNHEIM_ZURICH_KM = 235.01740148381361878  # 50-digit law-of-cosines evaluation


def test_zero_distance():
    assert geodesic_distance(MANNHEIM, MANNHEIM) == 0.0


def test_quarter_meridian():
    assert geodesic_distance((0, 0), (0, 90)) == pytest.approx(10018.754171394621538, abs=1e-3)
    assert geodesic_distance((0, 0), (90, 0)) == pytest.approx(10018.754171394621538, abs=1e-3)


def test_city_pair():
    assert abs(geodesic_distance(MANNHEIM, ZURICH) - MANNHEIM_ZURICH_KM) <= 1e-3


def test_clamping_near_coincident_and_antipodal():
    a = (13.404954, 52.520008)
    assert geodesic_distance(a, (a[0] + 1e-12, a[1])) >= 0
    assert geodesic_distance((0, 0), (180, 0)) == pytest.approx(math.pi * EARTH_RADIUS_KM)
    assert not math.isnan(geodesic_distance((10, -30), (-170, 30)))


def test_vectorized_matches_scalar(rng):
    pts = np.column_stack([rng.uniform(-180, 180, (200, 2)), rng.uniform(-90, 90, (200, 2))])
    vec = geodesic_distances(pts[:, 0], pts[:, 2], pts[:, 1], pts[:, 3])
    for row, d in zip(pts, vec):
        assert d == pytest.approx(geodesic_distance((row[0], row[2]), (row[1], row[3])), abs=1e-9)


lonlat = st.tuples(st.floats(-180, 180), st.floats(-90, 90))


@settings(max_examples=300, deadline=None)
@given(lonlat, lonlat)
def test_distance_properties(a, b):
    d = geodesic_distance(a, b)
    assert d == geodesic_distance(b, a) or abs(d - geodesic_distance(b, a)) <= 1e-12
    assert 0 <= d <= math.pi * EARTH_RADIUS_KM + 1e-9


# -- kernels ------------------------------------------------------------------

def test_exponential_values():
    assert exponential_weight(0) == 1.0
    # 5 km worked value; the 1 km case is checked by the acceptance suite
    assert abs(exponential_weight(5.0) - 0.0067) <= 5e-5
    assert exponential_weight(np.array([0.0, 1.0])) == pytest.approx([1.0, math.exp(-1)])


@settings(max_examples=200, deadline=None)
@given(st.floats(0, 700), st.floats(0, 700))
def test_exponential_monotone(d1, d2):
    d1, d2 = sorted((d1, d2))
    assert exponential_weight(d1) >= exponential_weight(d2)
    # below ~1e-16 apart both round to the same double
    if d2 - d1 >= 1e-9:
        assert exponential_weight(d1) > exponential_weight(d2)


@pytest.mark.parametrize("d, w", [(2, 1.0), (7, 0.0), (5, 1.0)])
def test_threshold(d, w):
    assert threshold_weight(d, 5) == w


def test_threshold_vector_and_bad_delta():
    assert list(threshold_weight(np.array([2.0, 7.0, 5.0]), 5)) == [1.0, 0.0, 1.0]
    with pytest.raises(ValueError):
        threshold_weight(1.0, 0)


@pytest.mark.parametrize("d, alpha, w", [(2, 1, 0.5), (2, 2, 0.25)])
def test_inverse(d, alpha, w):
    assert inverse_distance_weight(d, alpha) == w


def test_inverse_domain_error():
    with pytest.raises(WeightingError):
        inverse_distance_weight(0, 1)
    with pytest.raises(ValueError):
        inverse_distance_weight(1.0, 0)


def test_kernel_validation():
    with pytest.raises(ValueError):
        Kernel("gaussian")
    with pytest.raises(ValueError):
        Kernel("threshold")
    with pytest.raises(ValueError):
        Kernel("inverse")
    assert Kernel("threshold", delta=3.0)(2.0) == 1.0


# -- normalization ------------------------------------------------------------------

@pytest.mark.parametrize("ds, expected", [([10, 20, 30], [0, 0.5, 1]), ([5, 5], [0, 0]), ([42], [0])])
def test_normalize(ds, expected):
    out = normalize_distances([(i, d) for i, d in enumerate(ds)])
    assert [x for _, x in out] == expected


def test_normalize_empty():
    with pytest.raises(ValueError):
        normalize_distances([])


# -- edge weights -------------------------------------------------------------

def _store(g, coords):
    store = GeometryStore(g.num_nodes)
    for name, c in coords.items():
        store.add_original(g.node_id(name), Point(*c))
    return store


def test_three_geographic_out_neighbors():
    # place b, c, d due north of a at 10, 20, 30 km
    deg_per_km = 180 / (math.pi * EARTH_RADIUS_KM)
    g = KnowledgeGraph.from_triples([("a", "p", "b"), ("a", "p", "c"), ("a", "p", "d")])
    store = _store(g, {"a": (8.0, 45.0), "b": (8.0, 45.0 + 10 * deg_per_km),
                       "c": (8.0, 45.0 + 20 * deg_per_km), "d": (8.0, 45.0 + 30 * deg_per_km)})
    edges = assign_edge_weights(g, store)
    assert [e.distance for e in edges] == pytest.approx([10, 20, 30], abs=1e-6)
    assert [e.weight for e in edges] == pytest.approx([1.0, 0.6065306597126334, 0.36787944117144233], abs=1e-6)


def test_shared_point_gives_weight_one():
    g = KnowledgeGraph.from_triples([("a", "p", "b")])
    edges = assign_edge_weights(g, _store(g, {"a": (1, 2), "b": (1, 2)}), normalize=False)
    assert edges[0].distance == 0.0 and edges[0].weight == 1.0


def test_edges_without_geometry_get_weight_one():
    g = KnowledgeGraph.from_triples([("a", "p", "b"), ("c", "p", "d"), ("b", "p", "c")])
    edges = assign_edge_weights(g, _store(g, {"a": (1, 2), "b": (3, 4)}))
    assert edges[1].distance is None and edges[1].weight == 1.0
    assert edges[2].distance is None and edges[2].weight == 1.0
    assert edges[0].distance is not None


def test_normalization_uses_incoming_edges_too():
    # a has one out-edge (10 km) and one in-edge (30 km): out-edge normalizes to 0
    deg_per_km = 180 / (math.pi * EARTH_RADIUS_KM)
    g = KnowledgeGraph.from_triples([("a", "p", "b"), ("c", "p", "a")])
    store = _store(g, {"a": (0.0, 0.0), "b": (0.0, 10 * deg_per_km), "c": (0.0, -30 * deg_per_km)})
    edges = assign_edge_weights(g, store)
    assert edges[0].weight == pytest.approx(1.0)
    # c's only incident edge: degenerate range
    assert edges[1].weight == 1.0


def test_raw_kilometres_without_normalization():
    g = KnowledgeGraph.from_triples([("m", "p", "z")])
    edges = assign_edge_weights(g, _store(g, {"m": MANNHEIM, "z": ZURICH}), normalize=False)
    assert edges[0].weight == pytest.approx(math.exp(-MANNHEIM_ZURICH_KM))


def test_inverse_kernel_error_names_triple():
    g = KnowledgeGraph.from_triples([("a", "p", "b"), ("a", "q", "c")])
    store = _store(g, {"a": (1, 1), "b": (1, 2), "c": (1, 3)})
    with pytest.raises(WeightingError, match=r"triple #0 \(a p b\)"):
        assign_edge_weights(g, store, Kernel("inverse", alpha=1))
    edges = assign_edge_weights(g, store, Kernel("inverse", alpha=1), normalize=False)
    assert edges[1].weight == pytest.approx(1 / edges[1].distance)


def test_empty_graph():
    assert assign_edge_weights(KnowledgeGraph(), GeometryStore(0)) == []


def test_tsv_round_trip(tmp_path):
    g = KnowledgeGraph.from_triples([("a", "p", "b"), ("b", "p", "c")])
    edges = assign_edge_weights(g, _store(g, {"a": (1, 2), "b": (3, 4)}))
    path = tmp_path / "w.tsv"
    write_weighted_edges(path, g, edges)
    assert path.read_text().splitlines()[1] == "b\tp\tc\t\t1.0"
    assert read_weighted_edges(path, g) == edges
    path.write_text("x\tp\tb\t\t1.0\nb\tp\tc\t\t1.0\n")
    with pytest.raises(DataError):
        read_weighted_edges(path, g)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_partition_and_length(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 40))
    g = erdos_renyi(rng, n, 2.0 / n)
    store = flood(g, seed_points(rng, g, int(rng.integers(1, min(4, n) + 1))))
    edges = assign_edge_weights(g, store)
    assert len(edges) == g.num_triples
    for e in edges:
        assert (e.distance is not None) or e.weight == 1.0
        has_both = e.triple.subject in store and e.triple.object in store
        assert (e.distance is not None) == has_both


def _translated(g, store, dlon, dlat):
    moved = GeometryStore(g.num_nodes)
    for v in store.assignments:
        for geom in store.geometry_set(v):
            moved.add_original(v, Point(geom.lon + dlon, geom.lat + dlat))
    return moved


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(-50, 50), st.floats(-1e-5, 1e-5))
def test_translation_changes_weights_little(seed, dlon, dlat):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(3, 30))
    g = erdos_renyi(rng, n, 3.0 / n)
    store = GeometryStore(n)
    for v in range(n):
        store.add_original(v, Point(float(rng.uniform(-20, 20)), float(rng.uniform(-40, 40))))
    before = assign_edge_weights(g, store)
    after = assign_edge_weights(g, _translated(g, store, dlon, dlat))
    for a, b in zip(before, after):
        assert abs(a.weight - b.weight) < 1e-6
