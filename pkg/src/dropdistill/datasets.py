"""Dataset ingestion and synthetic graph generation."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor
from .graph import Graph
from .models import FixedLinearModel

logger = logging.getLogger(__name__)

_SBM_SALT = 0x5EED_0005


@dataclass
class PlanetoidResult:
    graph: Graph
    skipped_citations: int


def load_planetoid(content_path, cites_path) -> PlanetoidResult:
    """Parse citation-network files in the Citeseer text format.

    ``.content`` rows are ``<id> <tab> f_1..f_d <tab> <label>``; ``.cites``
    rows are ``<id_a> <tab> <id_b>``. Node ids are remapped to [0, n) in file
    order; citations become undirected edges; citations referring to unknown
    ids are skipped and counted.
    """
    ids = {}
    feature_rows = []
    label_names = []
    d = None
    with open(content_path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) < 3:
                raise ValueError(f"{content_path}:{lineno}: expected id, features, label")
            node_id, feats, label = parts[0], parts[1:-1], parts[-1]
            if node_id in ids:
                raise ValueError(f"{content_path}:{lineno}: duplicate node id {node_id!r}")
            if d is None:
                d = len(feats)
            elif len(feats) != d:
                raise ValueError(f"{content_path}:{lineno}: inconsistent feature count")
            try:
                feature_rows.append([float(f) for f in feats])
            except ValueError as exc:
                raise ValueError(f"{content_path}:{lineno}: non-numeric feature") from exc
            ids[node_id] = len(ids)
            label_names.append(label)

    classes = sorted(set(label_names))
    class_index = {name: k for k, name in enumerate(classes)}
    labels = np.array([class_index[name] for name in label_names], dtype=np.int64)

    pairs = set()
    skipped = 0
    with open(cites_path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ValueError(f"{cites_path}:{lineno}: expected two ids")
            a, b = parts
            if a not in ids or b not in ids:
                skipped += 1
                continue
            u, v = ids[a], ids[b]
            if u == v:
                continue
            pairs.add((min(u, v), max(u, v)))
    if skipped:
        logger.warning("skipped %d citations with unknown node ids", skipped)

    edges = []
    for u, v in sorted(pairs):
        edges.append((u, v))
        edges.append((v, u))
    graph = Graph(
        features=np.array(feature_rows, dtype=np.float64),
        labels=labels,
        edges=np.array(edges, dtype=np.int64).reshape(-1, 2),
        num_classes=len(classes),
    )
    return PlanetoidResult(graph=graph, skipped_citations=skipped)


def generate_sbm(blocks, p_in, p_out, d, feature_noise, seed) -> Graph:
    """Stochastic block model with one-hot block features plus Gaussian noise.

    Labels are block ids; ``d`` must be at least the number of blocks (the
    leading block-indicator dimensions; remaining dimensions carry noise only).
    """
    blocks = [int(b) for b in blocks]
    if any(b <= 0 for b in blocks):
        raise ValueError("empty block")
    if not (0.0 <= p_in <= 1.0 and 0.0 <= p_out <= 1.0):
        raise ValueError("edge probabilities must lie in [0, 1]")
    c = len(blocks)
    if d < c:
        raise ValueError("feature dimension must cover the one-hot block signal")
    n = sum(blocks)
    labels = np.repeat(np.arange(c), blocks)
    rng = np.random.default_rng([_SBM_SALT, int(seed)])

    iu, ju = np.triu_indices(n, k=1)
    same = labels[iu] == labels[ju]
    probs = np.where(same, p_in, p_out)
    chosen = rng.random(len(iu)) < probs
    pairs = np.stack([iu[chosen], ju[chosen]], axis=1)
    edges = np.concatenate([pairs, pairs[:, ::-1]], axis=0) if len(pairs) else np.zeros((0, 2), int)

    features = np.zeros((n, d))
    features[np.arange(n), labels] = 1.0
    features += feature_noise * rng.standard_normal((n, d))
    return Graph(features=features, labels=labels, edges=edges, num_classes=c)


def generate_multilabel_sbm(blocks, p_in, p_out, d, feature_noise, overlap, seed) -> Graph:
    """Multi-label variant: block membership plus a second label drawn with
    probability ``overlap`` (toy stand-in for inductive multi-label tasks)."""
    base = generate_sbm(blocks, p_in, p_out, d, feature_noise, seed)
    c = base.num_classes
    if c < 2:
        raise ValueError("multi-label data needs at least two classes")
    rng = np.random.default_rng([_SBM_SALT, int(seed), 1])
    multihot = np.zeros((base.n, c), dtype=np.int64)
    multihot[np.arange(base.n), base.labels] = 1
    extra = rng.random(base.n) < overlap
    shift = rng.integers(1, c, base.n)
    second = (base.labels + shift) % c
    multihot[extra, second[extra]] = 1
    return Graph(features=base.features, labels=multihot, edges=base.edges,
                 num_classes=c)


@dataclass
class Prop1Construction:
    """Counterexample pair: identical outputs, maximally different influences.

    Every root aggregates two twin neighbors carrying identical features; the
    two fixed one-layer linear models swap the aggregation weights (p, eps),
    so their outputs coincide while their influence distributions differ.
    """

    graph: Graph
    model_f: FixedLinearModel
    model_g: FixedLinearModel
    roots: np.ndarray


def generate_prop1_graph(num_roots, p, eps) -> Prop1Construction:
    if not p > eps > 0:
        raise ValueError("requires p > eps > 0")
    num_roots = int(num_roots)
    if num_roots < 1:
        raise ValueError("need at least one root")
    n = 3 * num_roots
    roots = np.arange(num_roots)
    first = num_roots + 2 * roots
    second = first + 1

    features = np.zeros((n, 2))
    twin = np.stack([1.0 + roots / num_roots, 0.5 + roots / (2.0 * num_roots)], axis=1)
    features[first] = twin
    features[second] = twin
    features[roots] = twin

    edges = []
    for r in roots:
        for nb in (first[r], second[r]):
            edges.append((r, nb))
            edges.append((nb, r))
    proj = np.array([[1.0, -2.0], [0.5, 1.0]])
    graph = Graph(
        features=features,
        labels=np.zeros(n, dtype=np.int64),
        edges=np.array(edges, dtype=np.int64),
        num_classes=2,
    )

    def build(w_first, w_second):
        weight_of = {}
        for r in roots:
            weight_of[(int(r), int(first[r]))] = w_first
            weight_of[(int(r), int(second[r]))] = w_second
        src = graph.edges[:, 0]
        dst = graph.edges[:, 1]
        w = np.array([weight_of[(min(u, v), max(u, v))] for u, v in graph.edges])
        return FixedLinearModel(src=src, dst=dst, weights=Tensor(w), proj=Tensor(proj), n=n)

    return Prop1Construction(
        graph=graph, model_f=build(p, eps), model_g=build(eps, p), roots=roots
    )
