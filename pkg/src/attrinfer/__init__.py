"""Attribute inference on social graphs with a dual-encoder adversarial VAE."""

from .errors import (
    AttrInferError,
    ConfigurationError,
    DimensionError,
    DomainError,
    NumericalError,
    ParseError,
    SchemaError,
)
from .graph import (
    AttributedGraph,
    AttributeSchema,
    LabelMask,
    UserPartition,
    build_feature_matrix,
    generate_synthetic,
    load_graph,
    normalize_adjacency,
    partition_users,
    sparsify_train_labels,
    split_labels,
    write_graph,
)
from .experiments import emit_report, run_ablations, run_param_sweep, run_sparsity_sweep, synthetic_benchmark
from .metrics import evaluate, macro_f1, predict_labels
from .training import TrainConfig, infer, prepare, train

__version__ = "0.1.0"

__all__ = [
    "AttrInferError", "ConfigurationError", "DimensionError", "DomainError", "NumericalError", "ParseError",
    "SchemaError", "AttributedGraph", "AttributeSchema", "LabelMask", "UserPartition", "build_feature_matrix",
    "generate_synthetic", "load_graph", "normalize_adjacency", "partition_users", "sparsify_train_labels",
    "split_labels", "write_graph", "emit_report", "run_ablations", "run_param_sweep", "run_sparsity_sweep",
    "synthetic_benchmark", "evaluate", "macro_f1", "predict_labels", "TrainConfig", "infer", "prepare", "train",
]
