"""Random edge deletion and the zero-mean edge perturbation used by the
second proposition's verifier.

Undirected edges are always dropped as a unit (both directed entries), and
self-loops introduced by normalization are never dropped.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import Graph, gcn_normalize

_DROP_SALT = 0x5EED_0002
_ZMP_SALT = 0x5EED_0003

RENORM_MODES = ("gcn-renormalize", "none")


@dataclass(frozen=True)
class EdgeDropMask:
    """Set of undirected edges (canonical u<v pairs) removed in one step."""

    dropped: frozenset
    p_star: float
    seed: int

    def __len__(self):
        return len(self.dropped)


def drop_edges(graph: Graph, p_star, seed) -> EdgeDropMask:
    """Drop each undirected edge independently with probability ``p_star``."""
    if not 0.0 <= p_star <= 1.0:
        raise ValueError("p_star must lie in [0, 1]")
    und = graph.undirected_edges()
    draws = np.random.default_rng([_DROP_SALT, int(seed)]).random(len(und))
    dropped = frozenset((int(u), int(v)) for (u, v), r in zip(und, draws) if r < p_star)
    return EdgeDropMask(dropped=dropped, p_star=float(p_star), seed=int(seed))


def surviving_edges(graph: Graph, mask: EdgeDropMask | None):
    """Directed edge entries that remain after applying ``mask``."""
    if mask is None or not mask.dropped:
        return graph.edges
    und = set(map(tuple, graph.undirected_edges()))
    if not set(mask.dropped) <= und:
        raise ValueError("mask drops edges that are not in the graph")
    keep = np.array(
        [(min(u, v), max(u, v)) not in mask.dropped for u, v in graph.edges],
        dtype=bool,
    )
    return graph.edges[keep]


def apply_drop(graph: Graph, mask: EdgeDropMask | None, renorm_mode: str):
    """Weighted edge list after deletion.

    ``gcn-renormalize`` recomputes symmetric normalization (plus self-loops)
    on the surviving topology; ``none`` returns the surviving raw edges with
    unit weights (attention renormalizes on its own).
    """
    if renorm_mode not in RENORM_MODES:
        raise ValueError(f"unknown renorm mode: {renorm_mode!r}")
    kept = surviving_edges(graph, mask)
    if renorm_mode == "gcn-renormalize":
        return gcn_normalize(graph, kept)
    return kept[:, 0], kept[:, 1], np.ones(len(kept))


def zero_mean_perturbation(weights, p, seed, size=None):
    """Additive weight deltas ``w * (b/(1-p) - 1)`` with ``b ~ Bernoulli(1-p)``.

    Each entry is drawn independently, so ``E[delta] = 0`` exactly and
    ``Var[delta] = w^2 * p / (1-p)`` per entry. With ``size`` given, returns a
    (size, len(weights)) matrix of independent draws.
    """
    if not 0.0 < p < 1.0:
        raise ValueError("p must lie in (0, 1)")
    weights = np.asarray(weights, dtype=np.float64)
    rng = np.random.default_rng([_ZMP_SALT, int(seed)])
    shape = weights.shape if size is None else (int(size),) + weights.shape
    b = (rng.random(shape) < (1.0 - p)).astype(np.float64)
    return weights * (b / (1.0 - p) - 1.0)
