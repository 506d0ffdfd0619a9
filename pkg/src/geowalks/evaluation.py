"""Node classification on embeddings, flooding quality checks, graph statistics."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, NamedTuple, Sequence

import numpy as np

from .errors import DataError
from .flooding import GeometryStore, flood
from .geometry import MultiPolygon, Polygon, point_in_polygon
from .kg import KnowledgeGraph
from .weights import WeightedEdge, geodesic_distance

CLASSIFIERS = ("knn", "logistic")


@dataclass
class LabeledSplit:
    train: list[tuple[str, str]]
    test: list[tuple[str, str]]

    def __post_init__(self):
        overlap = {n for n, _ in self.train} & {n for n, _ in self.test}
        if overlap:
            raise ValueError(f"train and test share {len(overlap)} nodes, e.g. {sorted(overlap)[:3]}")

    @property
    def classes(self) -> list[str]:
        return sorted({c for _, c in self.train} | {c for _, c in self.test})


def split_labels(labels: Sequence[tuple[str, str]], test_fraction: float = 0.2, seed: int = 0) -> LabeledSplit:
    """Stratified random hold-out split; every class keeps at least one training node."""
    if not 0 < test_fraction < 1:
        raise ValueError("test_fraction must be in (0, 1)")
    rng = np.random.default_rng(seed)
    by_class: dict[str, list[str]] = {}
    for node, c in labels:
        by_class.setdefault(c, []).append(node)
    train, test = [], []
    for c in sorted(by_class):
        nodes = sorted(by_class[c])
        order = rng.permutation(len(nodes))
        n_test = min(len(nodes) - 1, int(round(test_fraction * len(nodes))))
        test += [(nodes[i], c) for i in order[:n_test]]
        train += [(nodes[i], c) for i in order[n_test:]]
    return LabeledSplit(train, test)


@dataclass
class ConfusionMatrix:
    """Rows are true classes, columns predicted classes, both ordered as ``labels``."""

    labels: list[str]
    counts: np.ndarray

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @classmethod
    def from_predictions(cls, labels: Sequence[str], y_true, y_pred) -> "ConfusionMatrix":
        k = len(labels)
        counts = np.zeros((k, k), dtype=np.int64)
        np.add.at(counts, (np.asarray(y_true), np.asarray(y_pred)), 1)
        return cls(list(labels), counts)


class Metrics(NamedTuple):
    accuracy: float
    macro_f1: float
    mcc: float


def metrics(cm: ConfusionMatrix | np.ndarray) -> Metrics:
    """Accuracy, macro-F1 and multiclass MCC.

    Zero denominators resolve to 0: a class that is never true and never
    predicted has F1 = 0, and MCC is 0 when either marginal is degenerate.
    """
    c = np.asarray(cm.counts if isinstance(cm, ConfusionMatrix) else cm, dtype=float)
    total = c.sum()
    if total <= 0:
        raise ValueError("confusion matrix is empty")
    tp = np.diag(c)
    pred = c.sum(axis=0)
    true = c.sum(axis=1)
    accuracy = tp.sum() / total

    denom = pred + true
    f1 = np.divide(2 * tp, denom, out=np.zeros_like(tp), where=denom > 0)
    macro_f1 = f1.mean()

    cov_ytyp = tp.sum() * total - (pred * true).sum()
    cov_ypyp = total**2 - (pred**2).sum()
    cov_ytyt = total**2 - (true**2).sum()
    den = math.sqrt(cov_ypyp * cov_ytyt)
    mcc = cov_ytyp / den if den > 0 else 0.0
    return Metrics(float(accuracy), float(macro_f1), float(mcc))


# ---------------------------------------------------------------------------
# classifiers

def _vectors(embeddings, nodes: Sequence[str]) -> np.ndarray:
    missing = [n for n in nodes if n not in embeddings]
    if missing:
        shown = ", ".join(missing[:10]) + (" ..." if len(missing) > 10 else "")
        raise DataError(f"{len(missing)} labeled nodes have no embedding: {shown}")
    return np.array([np.asarray(embeddings[n], dtype=float) for n in nodes])


def knn_predict(X_train: np.ndarray, y_train: np.ndarray, X_test: np.ndarray, n_classes: int, k: int = 5) -> np.ndarray:
    """Majority vote among the ``k`` most cosine-similar training vectors.

    Ties go to the smallest class index, both among equally similar
    neighbors competing for the last of the ``k`` slots and in the vote.
    """
    def unit(X):
        n = np.linalg.norm(X, axis=1, keepdims=True)
        return X / np.where(n > 0, n, 1.0)

    k = min(k, len(X_train))
    sims = unit(X_test) @ unit(X_train).T
    pred = np.empty(len(X_test), dtype=np.int64)
    for i, row in enumerate(sims):
        top = np.lexsort((y_train, -row))[:k]
        pred[i] = int(np.argmax(np.bincount(y_train[top], minlength=n_classes)))
    return pred


def _softmax(Z: np.ndarray) -> np.ndarray:
    Z = Z - Z.max(axis=1, keepdims=True)
    E = np.exp(Z)
    return E / E.sum(axis=1, keepdims=True)


def logistic_fit(X: np.ndarray, y: np.ndarray, n_classes: int, l2: float = 1e-4,
                 tol: float = 1e-6, max_iter: int = 10_000) -> np.ndarray:
    """Multinomial logistic regression by gradient descent with backtracking.

    Stops once the objective improves by less than ``tol``.  Returns a
    ``(d + 1, n_classes)`` weight matrix whose last row is the bias.
    """
    n, d = X.shape
    Xb = np.hstack([X, np.ones((n, 1))])
    Y = np.eye(n_classes)[y]
    W = np.zeros((d + 1, n_classes))

    def objective(W):
        Z = Xb @ W
        Z = Z - Z.max(axis=1, keepdims=True)
        logp = Z - np.log(np.exp(Z).sum(axis=1, keepdims=True))
        return -(Y * logp).sum() / n + 0.5 * l2 * (W[:-1] ** 2).sum()

    def gradient(W):
        G = Xb.T @ (_softmax(Xb @ W) - Y) / n
        G[:-1] += l2 * W[:-1]
        return G

    f = objective(W)
    step = 1.0
    for _ in range(max_iter):
        G = gradient(W)
        gg = (G**2).sum()
        while True:
            W_new = W - step * G
            f_new = objective(W_new)
            if f_new <= f - 0.5 * step * gg or step < 1e-12:
                break
            step /= 2
        W, improvement, f = W_new, f - f_new, f_new
        if improvement < tol:
            break
        step *= 2
    return W


def logistic_predict(W: np.ndarray, X: np.ndarray) -> np.ndarray:
    return np.argmax(np.hstack([X, np.ones((len(X), 1))]) @ W, axis=1)


def classify(embeddings: Mapping[str, np.ndarray], split: LabeledSplit, model: str = "knn",
             k: int = 5) -> ConfusionMatrix:
    """Fit ``model`` on the training vectors and tabulate predictions on the test vectors."""
    if model not in CLASSIFIERS:
        raise ValueError(f"model must be one of {CLASSIFIERS}")
    classes = split.classes
    cidx = {c: i for i, c in enumerate(classes)}
    X_train = _vectors(embeddings, [n for n, _ in split.train])
    X_test = _vectors(embeddings, [n for n, _ in split.test])
    y_train = np.array([cidx[c] for _, c in split.train], dtype=np.int64)
    y_test = np.array([cidx[c] for _, c in split.test], dtype=np.int64)
    if model == "knn":
        pred = knn_predict(X_train, y_train, X_test, len(classes), k)
    else:
        mu, sd = X_train.mean(axis=0), X_train.std(axis=0)
        sd = np.where(sd > 0, sd, 1.0)
        W = logistic_fit((X_train - mu) / sd, y_train, len(classes))
        pred = logistic_predict(W, (X_test - mu) / sd)
    return ConfusionMatrix.from_predictions(classes, y_test, pred)


# ---------------------------------------------------------------------------
# flooding quality

@dataclass
class FloodingAccuracy:
    accuracy: float
    total: int
    correct: int
    missing_geometry: int

    def as_dict(self) -> dict:
        return {"accuracy": self.accuracy, "total": self.total, "correct": self.correct,
                "missing_geometry": self.missing_geometry}


def flooding_accuracy(store: GeometryStore, ground_truth: Sequence[tuple[int, str]],
                      boundaries: Mapping[str, Polygon | MultiPolygon]) -> FloodingAccuracy:
    """Share of nodes whose geometry-set centroid lies inside their labeled region.

    Nodes that ended up without geometry count as wrong and are tallied in
    ``missing_geometry``.
    """
    if not ground_truth:
        raise ValueError("ground truth is empty")
    unknown = sorted({r for _, r in ground_truth if r not in boundaries})
    if unknown:
        raise DataError(f"no boundary for regions: {', '.join(unknown[:10])}")
    correct = missing = 0
    for node, region in ground_truth:
        c = store.centroid(node)
        if c is None:
            missing += 1
        elif point_in_polygon(c, boundaries[region]):
            correct += 1
    return FloodingAccuracy(correct / len(ground_truth), len(ground_truth), correct, missing)


def holdout_flooding_accuracy(
    g: KnowledgeGraph,
    initial: GeometryStore,
    test_fraction: float = 0.2,
    seed: int = 0,
    boundaries: Mapping[str, Polygon | MultiPolygon] | None = None,
    threshold_km: float = 10.0,
) -> FloodingAccuracy:
    """Hide the geometries of a random share of geographic nodes, flood, and score them.

    With ``boundaries`` a hidden node is correct when its flooded centroid
    falls in the region containing its true centroid (nodes whose true
    centroid is in no region are left out).  Without boundaries it is
    correct when the two centroids are at most ``threshold_km`` apart.
    """
    geo = sorted(n for n, o in initial.origin.items() if o[0] == 0)
    if not geo:
        raise ValueError("no geographic nodes to hold out")
    rng = np.random.default_rng(seed)
    n_hidden = max(1, int(round(test_fraction * len(geo))))
    hidden = sorted(rng.choice(geo, size=n_hidden, replace=False).tolist())
    hidden_set = set(hidden)

    reduced = GeometryStore(initial.num_nodes)
    for node in geo:
        if node not in hidden_set:
            for geom in initial.geometry_set(node):
                reduced.add_original(node, geom)
    flooded = flood(g, reduced)

    if boundaries is not None:
        truth = []
        for node in hidden:
            c = initial.centroid(node)
            region = next((r for r in sorted(boundaries) if point_in_polygon(c, boundaries[r])), None)
            if region is not None:
                truth.append((node, region))
        return flooding_accuracy(flooded, truth, boundaries)

    correct = missing = 0
    for node in hidden:
        c = flooded.centroid(node)
        if c is None:
            missing += 1
        elif geodesic_distance(c, initial.centroid(node)) <= threshold_km:
            correct += 1
    return FloodingAccuracy(correct / len(hidden), len(hidden), correct, missing)


# ---------------------------------------------------------------------------
# graph statistics

def graph_statistics(g: KnowledgeGraph, edges: Sequence[WeightedEdge]) -> dict:
    """Node/edge counts, average degree 2|E|/|V|, mean edge distance and mean weight.

    Mean weight is given over all edges and over geographic edges only,
    since weight-1 edges without distance may or may not belong in the average.
    """
    dists = [e.distance for e in edges if e.distance is not None]
    weights = [e.weight for e in edges]
    geo_weights = [e.weight for e in edges if e.distance is not None]
    return {
        "nodes": g.num_nodes,
        "triples": g.num_triples,
        "relations": len(g.relation_table),
        "average_degree": 2 * g.num_triples / g.num_nodes if g.num_nodes else 0.0,
        "geographic_edges": len(dists),
        "average_distance_km": math.fsum(dists) / len(dists) if dists else None,
        "average_weight": math.fsum(weights) / len(weights) if weights else None,
        "average_weight_geographic": math.fsum(geo_weights) / len(geo_weights) if geo_weights else None,
    }
