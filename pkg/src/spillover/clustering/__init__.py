from .louvain import (
    LevelTrace,
    LouvainConfig,
    LouvainResult,
    balanced_louvain,
    hard_split,
    internal_connectivity,
    louvain,
    modularity_gain,
    run_balanced_louvain,
    size_penalty,
)
from .lpa import label_propagation, lpa_constrained
from .metrics import QualityReport, composite_score, intra_edge_ratio, modularity, quality
from .partition import Partition, canonical_labels, read_partition, write_partition

__all__ = [
    "LevelTrace",
    "LouvainConfig",
    "LouvainResult",
    "Partition",
    "QualityReport",
    "balanced_louvain",
    "canonical_labels",
    "composite_score",
    "hard_split",
    "internal_connectivity",
    "intra_edge_ratio",
    "label_propagation",
    "louvain",
    "lpa_constrained",
    "modularity",
    "modularity_gain",
    "quality",
    "read_partition",
    "run_balanced_louvain",
    "size_penalty",
    "write_partition",
]
