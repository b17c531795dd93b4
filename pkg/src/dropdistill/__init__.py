"""Churn and influence analysis for graph neural networks, with
DropDistillation training."""

from .autodiff import NonFiniteError, Tape, Tensor, backward
from .graph import Graph, SplitMasks, gcn_normalize, random_split
from .datasets import (
    generate_multilabel_sbm,
    generate_prop1_graph,
    generate_sbm,
    load_planetoid,
)
from .perturb import EdgeDropMask, apply_drop, drop_edges, zero_mean_perturbation
from .models import FixedLinearModel, GNNModel, ModelConfig, init_model, predict
from .influence import (
    InfluenceDistribution,
    InfluenceReport,
    influence_difference,
    influence_distribution,
    influence_scores,
    sample_roots,
    smape,
)
from .metrics import (
    PairMetrics,
    StabilityVector,
    ZeroVarianceError,
    accuracy,
    churn,
    label_entropy,
    micro_f1,
    pearson_corr,
    stability_vector,
)
from .distill import TrainConfig, TrainResult, dd_loss, grid_search, kd_loss, train
from .optim import AdamState, adam_step
from .gradcheck import finite_diff_check

__all__ = [
    "NonFiniteError", "Tape", "Tensor", "backward",
    "Graph", "SplitMasks", "gcn_normalize", "random_split",
    "generate_multilabel_sbm", "generate_prop1_graph", "generate_sbm",
    "load_planetoid",
    "EdgeDropMask", "apply_drop", "drop_edges", "zero_mean_perturbation",
    "FixedLinearModel", "GNNModel", "ModelConfig", "init_model", "predict",
    "InfluenceDistribution", "InfluenceReport", "influence_difference",
    "influence_distribution", "influence_scores", "sample_roots", "smape",
    "PairMetrics", "StabilityVector", "ZeroVarianceError", "accuracy", "churn",
    "label_entropy", "micro_f1", "pearson_corr", "stability_vector",
    "TrainConfig", "TrainResult", "dd_loss", "grid_search", "kd_loss", "train",
    "AdamState", "adam_step", "finite_diff_check",
]

__version__ = "0.1.0"
