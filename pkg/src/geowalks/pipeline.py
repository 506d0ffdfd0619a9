"""File-based pipeline: configuration, stages, artifacts and the run manifest.

Stages only talk to each other through files in the output directory:

    ingest   -> graph.json       graph snapshot plus raw WKT literals
    flood    -> flooded.tsv      node IRI, iteration, WKT
    weight   -> weights.tsv      s, p, o, distance km, weight
    walk     -> walks.txt        one walk per line
    train    -> embeddings.txt   word2vec text format
    evaluate -> metrics.json     classification / flooding scores
    stats    -> stats.json       graph and flooding statistics

``manifest.json`` records, for every stage that ran, the artifact digest, a
config hash chained through the upstream stages, the digests of the files it
read, the seed and the stage version.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import os
import statistics
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import yaml

from .embedding import TrainConfig, export_embeddings, read_word2vec, train
from .errors import ConfigError, DataError, StageError
from .evaluation import (CLASSIFIERS, classify, flooding_accuracy, graph_statistics,
                         holdout_flooding_accuracy, metrics, split_labels)
from .flooding import GeometryStore, flood, flooding_report
from .geometry import read_boundaries
from .kg import LITERAL_POLICIES, KnowledgeGraph, parse_ntriples
from .walker import WalkConfig, WalkCorpus, generate_walks
from .weights import KERNELS, Kernel, assign_edge_weights, read_weighted_edges, write_weighted_edges

logger = logging.getLogger(__name__)

DEFAULT_GEOMETRY_PREDICATE = "http://www.opengis.net/ont/geosparql#asWKT"
MANIFEST = "manifest.json"


@dataclass(frozen=True)
class Stage:
    name: str
    artifact: str
    requires: tuple[str, ...]
    version: int = 1


STAGES: dict[str, Stage] = {s.name: s for s in (
    Stage("ingest", "graph.json", ()),
    Stage("flood", "flooded.tsv", ("ingest",)),
    Stage("weight", "weights.tsv", ("flood",)),
    Stage("walk", "walks.txt", ("weight",)),
    Stage("train", "embeddings.txt", ("walk",)),
    Stage("evaluate", "metrics.json", ("train",)),
    Stage("stats", "stats.json", ("weight",)),
)}
PIPELINE = ("ingest", "flood", "weight", "walk", "train", "evaluate")


# ---------------------------------------------------------------------------
# configuration

@dataclass
class IngestSection:
    geometry_predicates: list[str] = field(default_factory=lambda: [DEFAULT_GEOMETRY_PREDICATE])
    literal_policy: str = "drop"
    strict: bool = False


@dataclass
class FloodingSection:
    max_iterations: int | None = None
    strict_wkt: bool = True


@dataclass
class WeightingSection:
    kernel: str = "exponential"
    normalize: bool = True
    delta: float | None = None
    alpha: int | None = None


@dataclass
class WalkSection:
    depth: int = 4
    walks_per_vertex: int = 10
    weighted: bool = True
    predicates: bool = True


@dataclass
class TrainingSection:
    dimension: int = 100
    window: int = 5
    negatives: int = 5
    epochs: int = 5
    learning_rate: float = 0.025
    min_learning_rate: float = 0.0001
    mode: str = "skipgram"


@dataclass
class EvaluationSection:
    labels: str | None = None
    test_fraction: float = 0.2
    classifier: str = "knn"
    k: int = 5
    trials: int = 1
    regions: str | None = None
    boundaries: str | None = None
    holdout: bool = False
    holdout_fraction: float = 0.2
    threshold_km: float = 10.0


_SECTIONS = {
    "ingest": IngestSection,
    "flooding": FloodingSection,
    "weighting": WeightingSection,
    "walks": WalkSection,
    "training": TrainingSection,
    "evaluation": EvaluationSection,
}


@dataclass
class PipelineConfig:
    input: str | None = None
    output_dir: str = "run"
    seed: int = 0
    workers: int = 1
    ingest: IngestSection = field(default_factory=IngestSection)
    flooding: FloodingSection = field(default_factory=FloodingSection)
    weighting: WeightingSection = field(default_factory=WeightingSection)
    walks: WalkSection = field(default_factory=WalkSection)
    training: TrainingSection = field(default_factory=TrainingSection)
    evaluation: EvaluationSection = field(default_factory=EvaluationSection)

    @classmethod
    def from_dict(cls, data: dict | None, base_dir: str | Path = ".") -> "PipelineConfig":
        """Build a config from parsed YAML; relative paths resolve against ``base_dir``."""
        data = dict(data or {})
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        kwargs: dict[str, Any] = {}
        for key, value in data.items():
            if key in _SECTIONS:
                kwargs[key] = _section(_SECTIONS[key], key, value)
            else:
                kwargs[key] = value
        cfg = cls(**kwargs)
        base = Path(base_dir)
        cfg.input = _resolve(base, cfg.input)
        cfg.output_dir = _resolve(base, cfg.output_dir)
        ev = cfg.evaluation
        ev.labels, ev.regions, ev.boundaries = (_resolve(base, p) for p in (ev.labels, ev.regions, ev.boundaries))
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path: str | Path) -> "PipelineConfig":
        path = Path(path)
        try:
            data = yaml.safe_load(path.read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: invalid YAML: {exc}") from exc
        if data is not None and not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
        return cls.from_dict(data, path.parent)

    def validate(self) -> None:
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError("seed must be a non-negative integer")
        if not isinstance(self.workers, int) or self.workers < 1:
            raise ConfigError("workers must be a positive integer")
        if self.ingest.literal_policy not in LITERAL_POLICIES:
            raise ConfigError(f"ingest.literal_policy must be one of {LITERAL_POLICIES}")
        w = self.weighting
        if w.kernel not in KERNELS:
            raise ConfigError(f"weighting.kernel must be one of {KERNELS}")
        try:
            self.kernel()
            self.walk_config()
            self.train_config()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        ev = self.evaluation
        if ev.classifier not in CLASSIFIERS:
            raise ConfigError(f"evaluation.classifier must be one of {CLASSIFIERS}")
        if ev.k < 1 or ev.k % 2 == 0:
            raise ConfigError("evaluation.k must be a positive odd integer")
        if ev.trials < 1:
            raise ConfigError("evaluation.trials must be >= 1")
        if not 0 < ev.test_fraction < 1 or not 0 < ev.holdout_fraction < 1:
            raise ConfigError("evaluation fractions must lie in (0, 1)")
        if (ev.regions is None) != (ev.boundaries is None):
            raise ConfigError("evaluation.regions and evaluation.boundaries go together")

    def kernel(self) -> Kernel:
        w = self.weighting
        return Kernel(w.kernel, w.delta, w.alpha)

    def walk_config(self) -> WalkConfig:
        w = self.walks
        return WalkConfig(w.depth, w.walks_per_vertex, self.seed, w.weighted, w.predicates)

    def train_config(self) -> TrainConfig:
        return TrainConfig(**dataclasses.asdict(self.training), seed=self.seed, workers=self.workers)

    def stage_params(self, stage: str) -> dict:
        """The settings that determine a stage's output (workers excluded)."""
        asdict = dataclasses.asdict
        params = {
            "ingest": lambda: asdict(self.ingest),
            "flood": lambda: asdict(self.flooding),
            "weight": lambda: asdict(self.weighting),
            "walk": lambda: {**asdict(self.walks), "seed": self.seed},
            "train": lambda: {**asdict(self.training), "seed": self.seed},
            "evaluate": lambda: {**asdict(self.evaluation), "seed": self.seed},
            "stats": lambda: {k: getattr(self.evaluation, k) for k in
                              ("holdout", "holdout_fraction", "threshold_km", "boundaries")} | {"seed": self.seed},
        }
        return params[stage]()


def _section(cls, name: str, value):
    if value is None:
        return cls()
    if not isinstance(value, dict):
        raise ConfigError(f"config section {name!r} must be a mapping")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(value) - known)
    if unknown:
        raise ConfigError(f"unknown keys in {name!r}: {', '.join(unknown)}")
    return cls(**value)


def _resolve(base: Path, p: str | None) -> str | None:
    if p is None:
        return None
    p = Path(p).expanduser()
    return str(p if p.is_absolute() else base / p)


# ---------------------------------------------------------------------------
# files, hashes, manifest

def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def atomic_write(path: str | Path, writer: Callable[[Path], None]) -> Path:
    """Let ``writer`` fill a temporary file next to ``path``, then rename it into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    os.close(fd)
    try:
        writer(Path(tmp))
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise
    return path


def _write_text(path: Path, text: str) -> None:
    path.write_text(text, encoding="utf-8")


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def read_manifest(out_dir: str | Path) -> dict:
    path = Path(out_dir) / MANIFEST
    if not path.exists():
        return {"stages": {}}
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: corrupt manifest: {exc}") from exc


def config_hash(cfg: PipelineConfig, stage: str) -> str:
    """Hash of a stage's settings chained with the hashes of the stages it reads."""
    st = STAGES[stage]
    upstream = {u: config_hash(cfg, u) for u in st.requires}
    return hashlib.sha256(_canonical(
        {"stage": stage, "version": st.version, "params": cfg.stage_params(stage), "upstream": upstream}
    ).encode()).hexdigest()


def validate_manifest(out_dir: str | Path) -> list[str]:
    """Check that recorded digests match the files on disk and link up across stages.

    Returns a list of problems; an empty list means the chain is intact.
    """
    out_dir = Path(out_dir)
    stages = read_manifest(out_dir)["stages"]
    problems = []
    for name, entry in sorted(stages.items()):
        artifact = out_dir / entry["artifact"]
        if not artifact.exists():
            problems.append(f"{name}: artifact {artifact.name} is missing")
        elif sha256_file(artifact) != entry["sha256"]:
            problems.append(f"{name}: artifact {artifact.name} changed since it was written")
        for up in STAGES[name].requires:
            up_entry = stages.get(up)
            if up_entry is None:
                problems.append(f"{name}: upstream stage {up} not recorded")
                continue
            if entry["inputs"].get(up_entry["artifact"]) != up_entry["sha256"]:
                problems.append(f"{name}: was built from a different {up_entry['artifact']}")
            if entry["upstream"].get(up) != up_entry["config_hash"]:
                problems.append(f"{name}: upstream {up} config hash differs")
    return problems


# ---------------------------------------------------------------------------
# stages

class _Context:
    """Per-stage bookkeeping: resolves upstream artifacts and collects input digests."""

    def __init__(self, cfg: PipelineConfig, stage: str, force: bool):
        self.cfg = cfg
        self.stage = STAGES[stage]
        self.out = Path(cfg.output_dir)
        self.force = force
        self.manifest = read_manifest(self.out)
        self.inputs: dict[str, str] = {}

    def upstream(self, name: str) -> Path:
        st = STAGES[name]
        path = self.out / st.artifact
        if not path.exists():
            raise StageError(f"stage {self.stage.name} requires stage: {name} (missing {path})")
        digest = sha256_file(path)
        entry = self.manifest["stages"].get(name)
        if not self.force:
            if entry is None:
                logger.warning("%s has no manifest entry; pass --force to silence", st.artifact)
            elif entry["config_hash"] != config_hash(self.cfg, name):
                logger.warning("%s was produced with a different config; rerun stage %s or pass --force",
                               st.artifact, name)
            elif entry["sha256"] != digest:
                logger.warning("%s changed since stage %s wrote it; pass --force to silence", st.artifact, name)
        self.inputs[st.artifact] = digest
        return path

    def external(self, path: str | None, what: str) -> Path:
        if path is None:
            raise ConfigError(f"stage {self.stage.name} needs {what} in the config")
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"{what} not found: {p}")
        self.inputs[str(p)] = sha256_file(p)
        return p

    def graph(self) -> tuple[KnowledgeGraph, dict[int, list[str]]]:
        return KnowledgeGraph.load(self.upstream("ingest"))

    def commit(self, writer: Callable[[Path], None]) -> Path:
        path = atomic_write(self.out / self.stage.artifact, writer)
        entry = {
            "artifact": self.stage.artifact,
            "sha256": sha256_file(path),
            "config_hash": config_hash(self.cfg, self.stage.name),
            "upstream": {u: config_hash(self.cfg, u) for u in self.stage.requires},
            "inputs": dict(sorted(self.inputs.items())),
            "seed": self.cfg.seed,
            "version": self.stage.version,
        }
        manifest = read_manifest(self.out)
        manifest["stages"][self.stage.name] = entry
        atomic_write(self.out / MANIFEST, lambda p: _write_json(p, manifest))
        logger.info("stage %s wrote %s", self.stage.name, path)
        return path


def _ingest(ctx: _Context) -> Path:
    src = ctx.external(ctx.cfg.input, "an input graph ('input')")
    ic = ctx.cfg.ingest
    res = parse_ntriples(src, ic.geometry_predicates, ic.literal_policy, ic.strict)
    if res.graph.num_nodes == 0:
        raise DataError(f"{src}: no triples parsed")
    return ctx.commit(lambda p: res.graph.save(p, res.geometry_literals))


def _flood(ctx: _Context) -> Path:
    g, literals = ctx.graph()
    initial, rejected = GeometryStore.from_literals(literals, g.num_nodes, ctx.cfg.flooding.strict_wkt)
    for node, _, err in rejected:
        logger.warning("dropped geometry of %s: %s", g.iri(node), err)
    store = flood(g, initial, ctx.cfg.flooding.max_iterations)
    logger.info("flooding: %s", json.dumps(flooding_report(store).as_dict(), sort_keys=True))
    return ctx.commit(lambda p: store.write_tsv(p, g))


def _load_store(ctx: _Context, g: KnowledgeGraph) -> GeometryStore:
    return GeometryStore.read_tsv(ctx.upstream("flood"), g)


def _weight(ctx: _Context) -> Path:
    g, _ = ctx.graph()
    store = _load_store(ctx, g)
    edges = assign_edge_weights(g, store, ctx.cfg.kernel(), ctx.cfg.weighting.normalize)
    return ctx.commit(lambda p: write_weighted_edges(p, g, edges))


def _walk(ctx: _Context) -> Path:
    weights = ctx.upstream("weight")
    g, _ = ctx.graph()
    edges = read_weighted_edges(weights, g)
    corpus = generate_walks(g, edges, ctx.cfg.walk_config(), workers=ctx.cfg.workers)
    return ctx.commit(corpus.write)


def _train(ctx: _Context) -> Path:
    corpus = WalkCorpus.read(ctx.upstream("walk"))
    model = train(corpus, ctx.cfg.train_config())
    return ctx.commit(lambda p: _write_text(p, export_embeddings(model)))


def read_pairs(path: str | Path, what: str) -> list[tuple[str, str]]:
    """Read a two-column TSV of (node IRI, value); blank and ``#`` lines are skipped."""
    rows = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 2 or not all(parts):
                raise DataError(f"{path}:{line_no}: expected '<node IRI>\\t<{what}>'")
            rows.append((parts[0].strip("<>"), parts[1]))
    if not rows:
        raise DataError(f"{path}: no rows")
    return rows


def _summary(values: list[float]) -> dict:
    return {"mean": statistics.fmean(values), "stdev": statistics.stdev(values) if len(values) > 1 else 0.0}


def _evaluate(ctx: _Context) -> Path:
    cfg, ev = ctx.cfg, ctx.cfg.evaluation
    tokens, vectors = read_word2vec(ctx.upstream("train"))
    embeddings = dict(zip(tokens, vectors))
    report: dict[str, Any] = {"classification": None, "flooding": None}

    if ev.labels is not None:
        labels_path = ctx.external(ev.labels, "a labels file")
        labels = read_pairs(labels_path, "class")
        trials = []
        for t in range(ev.trials):
            split = split_labels(labels, ev.test_fraction, cfg.seed + t)
            if not split.test:
                raise DataError(f"{labels_path}: too few labeled nodes for a test split")
            m = metrics(classify(embeddings, split, ev.classifier, ev.k))
            trials.append({"split_seed": cfg.seed + t, **m._asdict()})
        report["classification"] = {
            "labels": labels_path.name,
            "labels_sha256": ctx.inputs[str(labels_path)],
            "classifier": ev.classifier,
            "k": ev.k if ev.classifier == "knn" else None,
            "trials": trials,
            "summary": {name: _summary([t[name] for t in trials]) for name in ("accuracy", "macro_f1", "mcc")},
        }

    if ev.regions is not None:
        g, _ = ctx.graph()
        store = _load_store(ctx, g)
        boundaries = read_boundaries(ctx.external(ev.boundaries, "a boundaries file"))
        truth = []
        for iri, region in read_pairs(ctx.external(ev.regions, "a regions file"), "region"):
            if not g.has_node(iri):
                raise DataError(f"ground-truth node not in graph: {iri}")
            truth.append((g.node_id(iri), region))
        report["flooding"] = flooding_accuracy(store, truth, boundaries).as_dict()

    if report["classification"] is None and report["flooding"] is None:
        logger.warning("evaluate: no labels or regions configured, nothing was scored")
    return ctx.commit(lambda p: _write_json(p, report))


def _stats(ctx: _Context) -> Path:
    g, literals = ctx.graph()
    store = _load_store(ctx, g)
    edges = read_weighted_edges(ctx.upstream("weight"), g)
    report = {"graph": graph_statistics(g, edges), "flooding": flooding_report(store).as_dict()}
    ev = ctx.cfg.evaluation
    if ev.holdout:
        initial, _ = GeometryStore.from_literals(literals, g.num_nodes, strict=False)
        boundaries = read_boundaries(ctx.external(ev.boundaries, "a boundaries file")) if ev.boundaries else None
        report["holdout_flooding"] = holdout_flooding_accuracy(
            g, initial, ev.holdout_fraction, ctx.cfg.seed, boundaries, ev.threshold_km).as_dict()
    return ctx.commit(lambda p: _write_json(p, report))


_RUNNERS = {"ingest": _ingest, "flood": _flood, "weight": _weight, "walk": _walk,
            "train": _train, "evaluate": _evaluate, "stats": _stats}


def run_stage(name: str, cfg: PipelineConfig, force: bool = False) -> Path:
    """Run one stage from its upstream artifacts and return the artifact path."""
    if name not in STAGES:
        raise ConfigError(f"unknown stage {name!r}; choose from {', '.join(STAGES)}")
    return _RUNNERS[name](_Context(cfg, name, force))


def run_all(cfg: PipelineConfig, force: bool = False) -> list[Path]:
    return [run_stage(name, cfg, force) for name in PIPELINE]


# ---------------------------------------------------------------------------
# comparing runs

def _run_dirs(path: str | Path) -> list[Path]:
    """A run directory, or a directory whose subdirectories are runs (one per trial)."""
    path = Path(path)
    if (path / "metrics.json").exists():
        return [path]
    runs = sorted((p for p in path.iterdir() if (p / "metrics.json").exists()), key=lambda p: p.name) \
        if path.is_dir() else []
    if not runs:
        raise DataError(f"no metrics.json under {path}")
    return runs


def _classification_trials(path: str | Path) -> tuple[str, list[dict]]:
    digests, trials = set(), []
    for run in _run_dirs(path):
        report = json.loads((run / "metrics.json").read_text(encoding="utf-8"))
        cls = report.get("classification")
        if not cls:
            raise DataError(f"{run / 'metrics.json'} holds no classification results")
        digests.add(cls["labels_sha256"])
        trials += cls["trials"]
    if len(digests) != 1:
        raise DataError(f"runs under {path} were evaluated on different label files")
    return digests.pop(), trials


def compare(run_a: str | Path, run_b: str | Path) -> dict:
    """Side-by-side metrics of two runs (or two sets of runs) on the same labels.

    Trials are paired in order; ``wins`` counts trials where A beats B.
    """
    labels_a, trials_a = _classification_trials(run_a)
    labels_b, trials_b = _classification_trials(run_b)
    if labels_a != labels_b:
        raise DataError("runs were evaluated on different label files")
    out: dict[str, Any] = {"a": str(run_a), "b": str(run_b), "trials": min(len(trials_a), len(trials_b)),
                           "metrics": {}}
    for name in ("accuracy", "macro_f1", "mcc"):
        va, vb = [t[name] for t in trials_a], [t[name] for t in trials_b]
        deltas = [x - y for x, y in zip(va, vb)]
        out["metrics"][name] = {
            "a": va, "b": vb,
            "a_summary": _summary(va), "b_summary": _summary(vb),
            "mean_delta": statistics.fmean(va) - statistics.fmean(vb),
            "paired_deltas": deltas,
            "wins": sum(d > 0 for d in deltas),
        }
    return out


def format_comparison(report: dict) -> str:
    lines = [f"A: {report['a']}", f"B: {report['b']}", f"paired trials: {report['trials']}", "",
             f"{'metric':<10} {'A mean':>9} {'A sd':>8} {'B mean':>9} {'B sd':>8} {'delta':>9} {'wins':>6}"]
    for name, m in report["metrics"].items():
        a, b = m["a_summary"], m["b_summary"]
        lines.append(f"{name:<10} {a['mean']:9.4f} {a['stdev']:8.4f} {b['mean']:9.4f} {b['stdev']:8.4f} "
                     f"{m['mean_delta']:+9.4f} {m['wins']:>3}/{report['trials']}")
    return "\n".join(lines)


def format_metrics(report: dict) -> str:
    lines = []
    cls = report.get("classification")
    if cls:
        lines.append(f"{'metric':<10} {'mean':>9} {'stdev':>9}   ({len(cls['trials'])} trials, {cls['classifier']})")
        for name, s in cls["summary"].items():
            lines.append(f"{name:<10} {s['mean']:9.4f} {s['stdev']:9.4f}")
    fl = report.get("flooding")
    if fl:
        lines.append(f"flooding accuracy {fl['accuracy']:.4f} ({fl['correct']}/{fl['total']}, "
                     f"{fl['missing_geometry']} without geometry)")
    return "\n".join(lines) or "nothing scored"
