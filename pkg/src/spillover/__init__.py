"""Spillover-contained network experiments: balanced clustering, cluster
assignment, spillover simulation and bucket-level inference."""

__version__ = "0.1.0"

from .clustering import (
    LouvainConfig,
    Partition,
    QualityReport,
    balanced_louvain,
    composite_score,
    hard_split,
    louvain,
    lpa_constrained,
    modularity,
    quality,
)
from .experiment import Assignment, ShareEventLog, assign, experiment_wgsr, graph_events, perturb_cids, wgsr
from .graph import (
    BehaviorWeights,
    WeightedGraph,
    build_multi_behavior,
    load_edge_list,
    planted_partition,
    watts_strogatz,
    write_edge_list,
)
from .inference import (
    AnalysisReport,
    BucketTable,
    cuped,
    cupac,
    delta_pseudo,
    dim_inference,
    linear_predictor,
    select_covariates,
    var_red,
)
from .simulate import OutcomeModelConfig, SweepResult, bias_reduction, outcomes, run_sweep, true_ate
