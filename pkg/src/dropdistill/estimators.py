"""Scikit-learn style estimators wrapping the training loops.

These compose with the wider ecosystem (``get_params``/``set_params``,
``clone``); X is a :class:`~dropdistill.graph.Graph` and the optional y is a
:class:`~dropdistill.graph.SplitMasks`.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .distill import TrainConfig, evaluate, train
from .graph import Graph, SplitMasks, random_split
from .models import ModelConfig


def check_graph(X) -> Graph:
    if not isinstance(X, Graph):
        raise TypeError(f"expected a Graph, got {type(X).__name__}")
    if X.n == 0:
        raise ValueError("empty graph")
    return X


def check_masks(graph: Graph, masks, split_seed=0) -> SplitMasks:
    """Validate masks against the graph; derive a default split when absent."""
    if masks is None:
        return random_split(graph, (0.1, 0.1, 0.8), seed=split_seed)
    if not isinstance(masks, SplitMasks):
        raise TypeError(f"expected SplitMasks, got {type(masks).__name__}")
    if masks.train.shape[0] != graph.n:
        raise ValueError("mask length does not match the graph")
    return masks


class GNNNodeClassifier(BaseEstimator):
    """Full-graph GCN/GAT node classifier trained with early stopping.

    ``fit(graph, masks)`` trains a plain student (with DropEdge when
    ``dropedge_rate`` is positive); predictions are argmax classes, or
    thresholded label sets on multi-label graphs.
    """

    def __init__(self, arch="gat", layers=3, hidden_base=16, q=1, heads=1,
                 residual=True, lr=0.005, patience=400, max_steps=10000,
                 dropedge_rate=0.0, seed=0):
        self.arch = arch
        self.layers = layers
        self.hidden_base = hidden_base
        self.q = q
        self.heads = heads
        self.residual = residual
        self.lr = lr
        self.patience = patience
        self.max_steps = max_steps
        self.dropedge_rate = dropedge_rate
        self.seed = seed

    def _model_config(self, graph: Graph) -> ModelConfig:
        return ModelConfig(arch=self.arch, in_dim=graph.d, out_dim=graph.num_classes,
                           layers=self.layers, hidden_base=self.hidden_base, q=self.q,
                           heads=self.heads, residual=self.residual, seed=self.seed)

    def _train_config(self) -> TrainConfig:
        method = "student+dropedge" if self.dropedge_rate > 0 else "student"
        return TrainConfig(method=method, lr=self.lr, patience=self.patience,
                           max_steps=self.max_steps, dropedge_rate=self.dropedge_rate,
                           seed=self.seed)

    def fit(self, X, y=None):
        graph = check_graph(X)
        masks = check_masks(graph, y, split_seed=self.seed)
        self.result_ = train(self._model_config(graph), graph, masks, self._train_config())
        self.model_ = self.result_.model
        return self

    def _fitted_model(self):
        if not hasattr(self, "model_"):
            raise NotFittedError("call fit before predict/score")
        return self.model_

    def predict(self, X) -> np.ndarray:
        return self._fitted_model().predict(check_graph(X))

    def predict_logits(self, X) -> np.ndarray:
        return self._fitted_model().logits(check_graph(X)).values

    def score(self, X, y=None) -> float:
        """Accuracy (or micro-F1) on the given mask, default: all nodes."""
        graph = check_graph(X)
        mask = y if y is not None else np.ones(graph.n, dtype=bool)
        return evaluate(self._fitted_model(), graph, mask)


class DistilledStudent(BaseEstimator):
    """Student trained against a frozen teacher (KD or DropDistillation).

    ``teacher`` is a fitted :class:`GNNNodeClassifier` or a raw model object;
    ``method`` selects plain distillation or the two-phase edge-drop schedule.
    """

    def __init__(self, teacher=None, method="dropdistillation", arch="gat", layers=3,
                 hidden_base=16, q=1, heads=1, residual=True, lr=0.005, patience=400,
                 max_steps=10000, alpha=0.5, temperature=1.0, dropedge_rate=0.0,
                 dd_iterations=800, dd_p_star=0.2, seed=0):
        self.teacher = teacher
        self.method = method
        self.arch = arch
        self.layers = layers
        self.hidden_base = hidden_base
        self.q = q
        self.heads = heads
        self.residual = residual
        self.lr = lr
        self.patience = patience
        self.max_steps = max_steps
        self.alpha = alpha
        self.temperature = temperature
        self.dropedge_rate = dropedge_rate
        self.dd_iterations = dd_iterations
        self.dd_p_star = dd_p_star
        self.seed = seed

    def _teacher_model(self):
        if self.teacher is None:
            raise ValueError("a fitted teacher is required")
        if isinstance(self.teacher, GNNNodeClassifier):
            return self.teacher._fitted_model()
        return self.teacher

    def fit(self, X, y=None):
        graph = check_graph(X)
        masks = check_masks(graph, y, split_seed=self.seed)
        config = ModelConfig(arch=self.arch, in_dim=graph.d, out_dim=graph.num_classes,
                             layers=self.layers, hidden_base=self.hidden_base, q=self.q,
                             heads=self.heads, residual=self.residual, seed=self.seed)
        train_config = TrainConfig(method=self.method, lr=self.lr, patience=self.patience,
                                   max_steps=self.max_steps, alpha=self.alpha,
                                   temperature=self.temperature,
                                   dropedge_rate=self.dropedge_rate,
                                   dd_iterations=self.dd_iterations,
                                   dd_p_star=self.dd_p_star, seed=self.seed)
        self.result_ = train(config, graph, masks, train_config,
                             teacher=self._teacher_model())
        self.model_ = self.result_.model
        return self

    def predict(self, X) -> np.ndarray:
        if not hasattr(self, "model_"):
            raise NotFittedError("call fit before predict")
        return self.model_.predict(check_graph(X))

    def score(self, X, y=None) -> float:
        if not hasattr(self, "model_"):
            raise NotFittedError("call fit before score")
        graph = check_graph(X)
        mask = y if y is not None else np.ones(graph.n, dtype=bool)
        return evaluate(self.model_, graph, mask)
