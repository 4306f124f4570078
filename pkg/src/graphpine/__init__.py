"""Importance-propagating graph attention network for drug response prediction.

The package predicts binary drug response for (drug, cell line) pairs over
a shared gene-gene interaction graph, while propagating per-gene importance
scores that explain each prediction. Initial importance comes from curated
drug-target interactions; stacked gated attention layers update it and a
mean-pool readout produces the response probability.
"""

from __future__ import annotations

from .analysis import (
    Explanation,
    PropagationStats,
    RankShiftStats,
    compare_importance,
    density_stats,
    export_explanation,
    propagation_stats,
    rank_shift_stats,
)
from .autodiff import (
    ParamStore,
    Tensor,
    adam_step,
    compute_gradients,
    finite_diff_check,
    no_grad,
)
from .dataset import Bundle, SampleTensor, assemble_sample, load_bundle, write_bundle
from .estimator import GraphPineClassifier
from .exceptions import GraphPineError
from .graph import (
    EDGE_TYPES,
    GeneGraph,
    build_graph,
    degree_centrality,
    induced_subgraph,
)
from .ip_layer import (
    IpLayerConfig,
    IpLayerParams,
    decay_normalize_threshold,
    edge_attention_conv,
    importance_gate,
    ip_layer_forward,
    propagate_importance,
)
from .metrics import MetricsReport, compute_report, confusion_metrics, pr_auc, roc_auc
from .model import GraphPineModel, Prediction, forward, graph_norm, loss, predict
from .preprocess import (
    DtiRecord,
    GeneStatsTable,
    OmicsMatrix,
    ResponseRecord,
    SplitPlan,
    assemble_node_features,
    binarize_ic50,
    compute_dti_score,
    compute_gene_stats,
    preprocess_expression,
    select_genes,
    tpm_normalize,
    zero_shot_split,
)
from .synth import SynthSpec, generate
from .train import (
    EarlyStopper,
    TrainConfig,
    TrainLog,
    evaluate,
    load_checkpoint,
    save_checkpoint,
    train,
)

__version__ = "0.1.0"

__all__ = [
    "Bundle",
    "DtiRecord",
    "EDGE_TYPES",
    "EarlyStopper",
    "Explanation",
    "GeneGraph",
    "GeneStatsTable",
    "GraphPineClassifier",
    "GraphPineError",
    "GraphPineModel",
    "IpLayerConfig",
    "IpLayerParams",
    "MetricsReport",
    "OmicsMatrix",
    "ParamStore",
    "Prediction",
    "PropagationStats",
    "RankShiftStats",
    "ResponseRecord",
    "SampleTensor",
    "SplitPlan",
    "SynthSpec",
    "Tensor",
    "TrainConfig",
    "TrainLog",
    "adam_step",
    "assemble_node_features",
    "assemble_sample",
    "binarize_ic50",
    "build_graph",
    "compare_importance",
    "compute_dti_score",
    "compute_gene_stats",
    "compute_gradients",
    "compute_report",
    "confusion_metrics",
    "decay_normalize_threshold",
    "degree_centrality",
    "density_stats",
    "edge_attention_conv",
    "evaluate",
    "export_explanation",
    "finite_diff_check",
    "forward",
    "generate",
    "graph_norm",
    "importance_gate",
    "induced_subgraph",
    "ip_layer_forward",
    "load_bundle",
    "load_checkpoint",
    "loss",
    "no_grad",
    "pr_auc",
    "predict",
    "preprocess_expression",
    "propagate_importance",
    "propagation_stats",
    "rank_shift_stats",
    "roc_auc",
    "save_checkpoint",
    "select_genes",
    "synth",
    "tpm_normalize",
    "train",
    "write_bundle",
    "zero_shot_split",
]
