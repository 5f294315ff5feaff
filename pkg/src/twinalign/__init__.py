"""Guided manifold alignment with geometry-regularized twin autoencoders."""

from . import aligners, data, evaluation, graph, linalg, metrics, twinae
from .aligners import AlignedEmbedding, AlignerConfig, align, barycentric_project
from .data import AnchorSet, Dataset, DomainPair, load_builtin, load_dataset, make_split, sample_anchors, train_test_partition
from .metrics import cross_domain_mse, knn_predict, mantel_test
from .twinae import TrainConfig, TwinModel, cross_map, decode, encode, init_twin, train_twin

__version__ = "0.1.0"
