"""Cross-lingual knowledge-graph entity alignment via triple-aware attention."""

__version__ = "0.1.0"

from .autodiff import Tape, Tensor
from .evaluation import EvalReport, evaluate
from .kg import (
    AlignmentTask,
    KnowledgeGraph,
    RelationExpandedGraph,
    expand_relations,
    generate_synthetic_pair,
    load_dbp15k,
    save_dbp15k,
)
from .training import FitResult, TrainConfig, fit

__all__ = [
    "AlignmentTask",
    "EvalReport",
    "FitResult",
    "KnowledgeGraph",
    "RelationExpandedGraph",
    "Tape",
    "Tensor",
    "TrainConfig",
    "evaluate",
    "expand_relations",
    "fit",
    "generate_synthetic_pair",
    "load_dbp15k",
    "save_dbp15k",
]
