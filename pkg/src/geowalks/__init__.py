"""Location-aware knowledge graph embeddings from spatially weighted random walks."""
from .embedding import EmbeddingMatrix, TrainConfig, train
from .errors import ConfigError, DataError, GeoWalksError, StageError, TrainingError
from .flooding import GeometryStore, flood
from .geometry import centroid, parse_wkt, point_in_polygon
from .kg import KnowledgeGraph, parse_ntriples
from .walker import WalkConfig, WalkCorpus, generate_walks
from .weights import Kernel, assign_edge_weights, geodesic_distance

__version__ = "0.1.0"
