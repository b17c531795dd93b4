"""Graph container, split masks, adjacency normalization, and serialization.

Graphs are treated as immutable after construction and may be shared across
concurrent runs; undirected edges are stored as both directed entries.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

_SPLIT_SALT = 0x5EED_0001


@dataclass
class SplitMasks:
    """Disjoint train/val/test node masks."""

    train: np.ndarray
    val: np.ndarray
    test: np.ndarray

    def __post_init__(self):
        self.train = np.asarray(self.train, dtype=bool)
        self.val = np.asarray(self.val, dtype=bool)
        self.test = np.asarray(self.test, dtype=bool)
        n = self.train.shape[0]
        if self.val.shape[0] != n or self.test.shape[0] != n:
            raise ValueError("split masks must share one length")
        if np.any(self.train & self.val) or np.any(self.train & self.test) or np.any(self.val & self.test):
            raise ValueError("split masks must be pairwise disjoint")
        if not self.train.any():
            raise ValueError("train mask is empty")


@dataclass
class Graph:
    """Node features, labels, and undirected edges stored as directed pairs.

    ``labels`` is either a length-n class-index vector or an n-by-c multi-hot
    matrix. Edge entries are lexicographically sorted and deduplicated.
    """

    features: np.ndarray
    labels: np.ndarray
    edges: np.ndarray
    num_classes: int
    _neighbors: list = field(default=None, repr=False, compare=False)
    _und_edges: np.ndarray = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim != 2:
            raise ValueError("features must be an n-by-d matrix")
        if not np.all(np.isfinite(self.features)):
            raise ValueError("graph features must be finite")
        self.labels = np.asarray(self.labels)
        edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        if edges.size:
            order = np.lexsort((edges[:, 1], edges[:, 0]))
            edges = edges[order]
        self.edges = edges
        n = self.features.shape[0]
        if edges.size:
            if edges.min() < 0 or edges.max() >= n:
                raise ValueError("edge endpoint out of range")
            if np.any(edges[:, 0] == edges[:, 1]):
                raise ValueError("self-loop edges are not stored explicitly")
            if np.any(np.all(edges[:-1] == edges[1:], axis=1)):
                raise ValueError("duplicate edge entries")
            # undirected storage: (u,v) present iff (v,u) present
            keys = set(map(tuple, edges))
            if any((v, u) not in keys for u, v in edges):
                raise ValueError("undirected storage requires both directions of every edge")
        if self.is_multilabel:
            if self.labels.shape != (n, self.num_classes):
                raise ValueError("multi-hot labels must be n-by-num_classes")
            if not np.isin(self.labels, (0, 1)).all():
                raise ValueError("multi-hot labels must be 0/1")
        else:
            if self.labels.shape != (n,):
                raise ValueError("labels must have one entry per node")
            if n and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
                raise ValueError("label out of class range")
        self.labels = self.labels.astype(np.int64)

    @property
    def n(self):
        return self.features.shape[0]

    @property
    def d(self):
        return self.features.shape[1]

    @property
    def is_multilabel(self):
        return self.labels.ndim == 2

    def neighbors(self, i):
        """Sorted one-hop neighbors of node ``i`` (self excluded)."""
        if self._neighbors is None:
            nbr = [[] for _ in range(self.n)]
            for u, v in self.edges:
                nbr[v].append(u)
            self._neighbors = [np.array(sorted(a), dtype=np.int64) for a in nbr]
        return self._neighbors[i]

    def degrees(self):
        deg = np.zeros(self.n, dtype=np.int64)
        if self.edges.size:
            deg += np.bincount(self.edges[:, 1], minlength=self.n)
        return deg

    def undirected_edges(self):
        """Canonical (u < v) edge pairs, lexicographically sorted."""
        if self._und_edges is None:
            if self.edges.size:
                e = self.edges
                self._und_edges = e[e[:, 0] < e[:, 1]]
            else:
                self._und_edges = np.zeros((0, 2), dtype=np.int64)
        return self._und_edges

    def to_json_dict(self, masks: SplitMasks | None = None):
        doc = {
            "n": int(self.n),
            "num_classes": int(self.num_classes),
            "edges": [[int(u), int(v)] for u, v in self.edges],
            "features": self.features.tolist(),
            "labels": self.labels.tolist(),
        }
        if masks is not None:
            doc["masks"] = {
                "train": masks.train.astype(int).tolist(),
                "val": masks.val.astype(int).tolist(),
                "test": masks.test.astype(int).tolist(),
            }
        return doc

    def save(self, path, masks: SplitMasks | None = None):
        with open(path, "w") as fh:
            json.dump(self.to_json_dict(masks), fh)

    @classmethod
    def from_json_dict(cls, doc):
        graph = cls(
            features=np.array(doc["features"], dtype=np.float64),
            labels=np.array(doc["labels"]),
            edges=np.array(doc["edges"], dtype=np.int64).reshape(-1, 2),
            num_classes=int(doc["num_classes"]),
        )
        masks = None
        if "masks" in doc:
            masks = SplitMasks(
                train=np.array(doc["masks"]["train"], dtype=bool),
                val=np.array(doc["masks"]["val"], dtype=bool),
                test=np.array(doc["masks"]["test"], dtype=bool),
            )
        return graph, masks

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_json_dict(json.load(fh))


def gcn_normalize(graph: Graph, edges: np.ndarray | None = None):
    """Symmetrically normalized adjacency with self-loops.

    Weights are ``1/sqrt((deg_u+1)(deg_v+1))`` on the given (surviving) edges
    and ``1/(deg_v+1)`` on the appended self-loops. Returns (src, dst, w).
    """
    n = graph.n
    edges = graph.edges if edges is None else np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    deg = np.zeros(n, dtype=np.int64)
    if edges.size:
        deg += np.bincount(edges[:, 1], minlength=n)
    inv_sqrt = 1.0 / np.sqrt(deg + 1.0)
    if edges.size:
        src = np.concatenate([edges[:, 0], np.arange(n)])
        dst = np.concatenate([edges[:, 1], np.arange(n)])
        w = np.concatenate([inv_sqrt[edges[:, 0]] * inv_sqrt[edges[:, 1]], inv_sqrt * inv_sqrt])
    else:
        src = dst = np.arange(n)
        w = inv_sqrt * inv_sqrt
    return src, dst, w


def random_split(graph: Graph, fractions, seed) -> SplitMasks:
    """Uniform shuffled split into train/val/test by the given fractions."""
    if len(fractions) != 3:
        raise ValueError("expected (train, val, test) fractions")
    if sum(fractions) > 1.0 + 1e-12:
        raise ValueError("split fractions must sum to at most 1")
    n = graph.n
    perm = np.random.default_rng([_SPLIT_SALT, int(seed)]).permutation(n)
    sizes = [int(f * n) for f in fractions]
    if sizes[0] == 0:
        raise ValueError("train fraction yields zero nodes")
    masks = []
    start = 0
    for size in sizes:
        m = np.zeros(n, dtype=bool)
        m[perm[start:start + size]] = True
        masks.append(m)
        start += size
    return SplitMasks(train=masks[0], val=masks[1], test=masks[2])
