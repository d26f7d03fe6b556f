"""Align a knowledge graph with a graph built from image-classifier activations."""
from .align import AlignedGraphPair, EmbeddingSpace, TrainConfig, train
from .cnn_graph import ActivationDataset, Strategy, build_cnn_graph, compute_correlations, load_activations
from .errors import ConfigError, EmptyGraphError, FormatError, KgAlignError, ParseError, TrainingError
from .evaluate import HitCurve, hit_at_1, hit_at_k_curve, label_feature, nearest_neighbors
from .graph import CnnGraph, Graph, KnowledgeGraph, read_graph, write_graph
from .kg_builder import Triple, build_kg, parse_triples
from .projection import Projection2D, pca_project, tsne_project

__version__ = "0.1.0"
