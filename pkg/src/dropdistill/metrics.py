"""Prediction churn, stability, correlation, label entropy, and accuracy."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import Graph


class ZeroVarianceError(ValueError):
    """Pearson correlation is undefined when either input is constant."""


def _matches(preds_f, preds_g):
    preds_f = np.asarray(preds_f)
    preds_g = np.asarray(preds_g)
    if preds_f.shape != preds_g.shape:
        raise ValueError("prediction arrays must share a shape")
    if preds_f.ndim == 2:
        # multi-label: stable means the full predicted label set matches
        return np.all(preds_f == preds_g, axis=1)
    return preds_f == preds_g


@dataclass
class StabilityVector:
    """Per-node stability; 1 means the pair predicted the same class."""

    s: np.ndarray
    eval_mask: np.ndarray


def stability_vector(preds_f, preds_g, eval_mask=None) -> StabilityVector:
    same = _matches(preds_f, preds_g)
    if eval_mask is None:
        eval_mask = np.ones(same.shape[0], dtype=bool)
    return StabilityVector(s=same.astype(np.float64), eval_mask=np.asarray(eval_mask, bool))


def churn(preds_f, preds_g, eval_mask=None) -> float:
    """Fraction of masked nodes on which the two models disagree."""
    same = _matches(preds_f, preds_g)
    if eval_mask is not None:
        same = same[np.asarray(eval_mask, bool)]
    if same.size == 0:
        raise ValueError("churn over an empty mask")
    return float(1.0 - same.mean())


def pearson_corr(x, y) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("pearson_corr expects two equal-length vectors")
    if x.size < 2:
        raise ValueError("pearson_corr needs at least two samples")
    dx = x - x.mean()
    dy = y - y.mean()
    sx = np.sqrt((dx * dx).sum())
    sy = np.sqrt((dy * dy).sum())
    if sx == 0.0 or sy == 0.0:
        raise ZeroVarianceError("correlation undefined for a zero-variance input")
    return float((dx * dy).sum() / (sx * sy))


def label_entropy(graph: Graph, root) -> float:
    """Entropy of the neighbor-label ratios of ``root`` (natural log)."""
    if graph.is_multilabel:
        raise ValueError("label entropy is defined for single-label graphs")
    ctx = graph.neighbors(int(root))
    if len(ctx) == 0:
        raise ValueError(f"node {root} has no context nodes")
    counts = np.bincount(graph.labels[ctx], minlength=graph.num_classes)
    ratios = counts[counts > 0] / len(ctx)
    return float(-(ratios * np.log(ratios)).sum())


def accuracy(preds, labels, mask=None) -> float:
    preds = np.asarray(preds)
    labels = np.asarray(labels)
    if mask is not None:
        m = np.asarray(mask, bool)
        preds, labels = preds[m], labels[m]
    if preds.size == 0:
        raise ValueError("accuracy over an empty mask")
    return float((preds == labels).mean())


def micro_f1(multihot_preds, multihot_labels, mask=None) -> float:
    """Micro-averaged F1 pooled over nodes and classes."""
    preds = np.asarray(multihot_preds)
    labels = np.asarray(multihot_labels)
    if mask is not None:
        m = np.asarray(mask, bool)
        preds, labels = preds[m], labels[m]
    if preds.size == 0:
        raise ValueError("micro_f1 over an empty mask")
    tp = int(np.sum((preds == 1) & (labels == 1)))
    fp = int(np.sum((preds == 1) & (labels == 0)))
    fn = int(np.sum((preds == 0) & (labels == 1)))
    if 2 * tp + fp + fn == 0:
        return 1.0 if fp == 0 and fn == 0 else 0.0
    return 2.0 * tp / (2.0 * tp + fp + fn)


@dataclass
class PairMetrics:
    """Metrics for one unordered pair of trained models."""

    seed_a: int
    seed_b: int
    churn: float
    id_scalar: float
    per_node_id: np.ndarray
    corr_id_s: float | None
    corr_h_s: float | None

    def to_json_dict(self):
        return {
            "seed_a": self.seed_a,
            "seed_b": self.seed_b,
            "churn": self.churn,
            "id_scalar": self.id_scalar,
            "per_node_id": [None if np.isnan(v) else float(v) for v in self.per_node_id],
            "corr_id_s": self.corr_id_s,
            "corr_h_s": self.corr_h_s,
        }
