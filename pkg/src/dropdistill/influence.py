"""Influence scores, influence distributions, and the influence-difference
metric between two models.

The influence of context node j on root i is the summed absolute sensitivity
of every logit of i to every input feature of j. Per-root distributions are
the normalized scores over the root's one-hop neighbors; the scalar metric is
the two-stage mean (roots first, then context) of the symmetric absolute
percentage error between two models' distributions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tape, Tensor
from .graph import Graph


def smape(a, b):
    """Symmetric absolute percentage error in [0, 2]; 0 when both are 0."""
    a = float(a)
    b = float(b)
    if a < 0 or b < 0:
        raise ValueError("smape is defined for nonnegative scores")
    if a == 0.0 and b == 0.0:
        return 0.0
    return abs(a - b) / (0.5 * (abs(a) + abs(b)))


def _smape_vec(a, b):
    denom = 0.5 * (np.abs(a) + np.abs(b))
    out = np.zeros_like(denom)
    nz = denom > 0
    out[nz] = np.abs(a - b)[nz] / denom[nz]
    return out


@dataclass
class InfluenceDistribution:
    """Normalized influence of a root over its context nodes.

    ``degenerate`` marks an all-zero raw score vector (mass is None there);
    such roots are skipped by the difference metric.
    """

    root: int
    context: np.ndarray
    mass: np.ndarray | None
    degenerate: bool = False


def influence_distribution(raw_scores, root=0, context=None) -> InfluenceDistribution:
    raw = np.asarray(raw_scores, dtype=np.float64)
    if raw.size == 0:
        raise ValueError("influence distribution needs at least one context node")
    if context is None:
        context = np.arange(raw.size)
    total = raw.sum()
    if total == 0.0:
        return InfluenceDistribution(root=root, context=context, mass=None, degenerate=True)
    return InfluenceDistribution(root=root, context=context, mass=raw / total)


def raw_influence_scores(model, graph: Graph, roots):
    """Raw influence of each root's context nodes, for many roots at once.

    One forward tape is built and swept once per (root, class); model
    parameters are detached so only the feature path is differentiated.
    Roots without context are returned with an empty score vector.
    """
    x = Tensor(graph.features, requires_grad=True)
    frozen = model.detached() if hasattr(model, "detached") else model
    logits = frozen.logits(graph, features=x)
    tape = Tape(logits)
    n, c = logits.values.shape
    seed = np.zeros((n, c))
    out = {}
    for root in roots:
        ctx = graph.neighbors(int(root))
        scores = np.zeros(len(ctx))
        for a in range(c):
            tape.zero_grads()
            seed[root, a] = 1.0
            tape.backward(seed)
            seed[root, a] = 0.0
            if x.grad is not None and len(ctx):
                scores += np.abs(x.grad[ctx]).sum(axis=1)
        out[int(root)] = (ctx, scores)
    return out


def influence_scores(model, graph: Graph, root) -> np.ndarray:
    """Raw scores I(root, j) aligned with ``graph.neighbors(root)``."""
    ctx, scores = raw_influence_scores(model, graph, [root])[int(root)]
    if len(ctx) == 0:
        raise ValueError(f"node {root} has no context nodes")
    return scores


def influence_distributions(model, graph: Graph, roots):
    """InfluenceDistribution per root (None for roots without context)."""
    out = {}
    for root, (ctx, scores) in raw_influence_scores(model, graph, roots).items():
        if len(ctx) == 0:
            out[root] = None
        else:
            out[root] = influence_distribution(scores, root=root, context=ctx)
    return out


@dataclass
class InfluenceReport:
    """Per-root mean SMAPE plus the scalar mean over evaluated roots.

    ``per_node`` has one entry per graph node; entries are NaN for nodes that
    were not evaluated (outside the root subset, or skipped). ``skipped``
    lists roots in the subset that had no context or a degenerate
    distribution under either model.
    """

    id_scalar: float
    per_node: np.ndarray
    skipped: list = field(default_factory=list)

    def evaluated(self):
        return np.flatnonzero(~np.isnan(self.per_node))

    def to_json_dict(self):
        per_node = [None if np.isnan(v) else float(v) for v in self.per_node]
        return {
            "id_scalar": float(self.id_scalar),
            "per_node": per_node,
            "skipped": [int(i) for i in self.skipped],
        }


def report_from_distributions(dists_f, dists_g, n, roots) -> InfluenceReport:
    """Assemble an InfluenceReport from per-model distribution caches."""
    per_node = np.full(n, np.nan)
    skipped = []
    for root in roots:
        df = dists_f[int(root)]
        dg = dists_g[int(root)]
        if df is None or dg is None or df.degenerate or dg.degenerate:
            skipped.append(int(root))
            continue
        per_node[root] = float(_smape_vec(df.mass, dg.mass).mean())
    evaluated = ~np.isnan(per_node)
    if not evaluated.any():
        raise ValueError("all roots were skipped; influence difference is undefined")
    return InfluenceReport(
        id_scalar=float(per_node[evaluated].mean()),
        per_node=per_node,
        skipped=sorted(skipped),
    )


def influence_difference(model_f, model_g, graph: Graph, node_subset=None) -> InfluenceReport:
    """Expected SMAPE between the two models' influence distributions.

    Exact enumeration: mean over roots of the mean over each root's context.
    ``node_subset`` restricts the roots (e.g. test nodes, or a seeded sample).
    """
    roots = np.arange(graph.n) if node_subset is None else np.sort(np.asarray(node_subset, int))
    dists_f = influence_distributions(model_f, graph, roots)
    dists_g = influence_distributions(model_g, graph, roots)
    return report_from_distributions(dists_f, dists_g, graph.n, roots)


def sample_roots(graph: Graph, k, seed):
    """Uniform subsample of nodes without replacement (cost control on
    larger graphs); deterministic per seed."""
    k = int(k)
    if not 1 <= k <= graph.n:
        raise ValueError("sample size must lie in [1, n]")
    rng = np.random.default_rng([0x5EED_0008, int(seed)])
    return np.sort(rng.choice(graph.n, size=k, replace=False))
