"""GCN and GAT node classifiers producing per-node logits.

Both architectures follow the shape: hidden layers with activation (+ residual
skip, projected when widths differ), final layer emitting raw logits. GAT
attention neighborhoods include a self-loop; hidden heads concatenate and the
output layer averages heads.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, replace

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .graph import Graph, gcn_normalize
from .perturb import EdgeDropMask, apply_drop, surviving_edges

_INIT_SALT = 0x5EED_0004

ARCHS = ("gcn", "gat")


@dataclass(frozen=True)
class ModelConfig:
    arch: str
    in_dim: int
    out_dim: int
    layers: int = 3
    hidden_base: int = 16
    q: int = 1
    heads: int = 1
    residual: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.arch not in ARCHS:
            raise ValueError(f"unknown architecture {self.arch!r}")
        if self.layers < 1 or self.hidden < 1 or self.heads < 1:
            raise ValueError("layers, hidden width, and heads must be positive")

    @property
    def hidden(self):
        return self.hidden_base * self.q


def _glorot(rng, fan_in, fan_out, shape):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def _layer_dims(config: ModelConfig):
    """(in_width, per_head_out, out_width) per layer."""
    dims = []
    width_in = config.in_dim
    for layer in range(config.layers):
        final = layer == config.layers - 1
        if config.arch == "gat":
            per_head = config.out_dim if final else config.hidden
            width_out = per_head if final else per_head * config.heads
        else:
            per_head = config.out_dim if final else config.hidden
            width_out = per_head
        dims.append((width_in, per_head, width_out))
        width_in = width_out
    return dims


def init_model(config: ModelConfig) -> "GNNModel":
    """Glorot-uniform weights, zero biases; deterministic per config seed."""
    rng = np.random.default_rng([_INIT_SALT, int(config.seed)])
    layers = []
    for width_in, per_head, width_out in _layer_dims(config):
        layer = {}
        if config.arch == "gat":
            layer["W"] = [
                Tensor(_glorot(rng, width_in, per_head, (width_in, per_head)), requires_grad=True)
                for _ in range(config.heads)
            ]
            layer["a_src"] = [
                Tensor(_glorot(rng, per_head, 1, (per_head, 1)), requires_grad=True)
                for _ in range(config.heads)
            ]
            layer["a_dst"] = [
                Tensor(_glorot(rng, per_head, 1, (per_head, 1)), requires_grad=True)
                for _ in range(config.heads)
            ]
        else:
            layer["W"] = Tensor(
                _glorot(rng, width_in, width_out, (width_in, width_out)), requires_grad=True
            )
        layer["b"] = Tensor(np.zeros(width_out), requires_grad=True)
        if config.residual and width_in != width_out:
            layer["R"] = Tensor(
                _glorot(rng, width_in, width_out, (width_in, width_out)), requires_grad=True
            )
        else:
            layer["R"] = None
        layers.append(layer)
    return GNNModel(config=config, layers=layers)


def _resolve_drop(drop, num_layers):
    """Per-layer drop masks from a single shared mask, a list, or None."""
    if drop is None:
        return [None] * num_layers
    if isinstance(drop, EdgeDropMask):
        return [drop] * num_layers
    drop = list(drop)
    if len(drop) != num_layers:
        raise ValueError("per-layer drop list must match the layer count")
    return drop


@dataclass
class GNNModel:
    config: ModelConfig
    layers: list

    def parameters(self):
        """Flat parameter list in declaration order."""
        params = []
        for layer in self.layers:
            if self.config.arch == "gat":
                for h in range(self.config.heads):
                    params.extend([layer["W"][h], layer["a_src"][h], layer["a_dst"][h]])
            else:
                params.append(layer["W"])
            params.append(layer["b"])
            if layer["R"] is not None:
                params.append(layer["R"])
        return params

    @property
    def param_count(self):
        return int(sum(p.size for p in self.parameters()))

    def _map_params(self, fn):
        layers = []
        for layer in self.layers:
            new = {}
            if self.config.arch == "gat":
                new["W"] = [fn(t) for t in layer["W"]]
                new["a_src"] = [fn(t) for t in layer["a_src"]]
                new["a_dst"] = [fn(t) for t in layer["a_dst"]]
            else:
                new["W"] = fn(layer["W"])
            new["b"] = fn(layer["b"])
            new["R"] = None if layer["R"] is None else fn(layer["R"])
            layers.append(new)
        return GNNModel(config=self.config, layers=layers)

    def detached(self):
        """Same parameter values with gradient tracking off (frozen teacher)."""
        return self._map_params(lambda t: t.detach())

    def copy(self):
        return self._map_params(lambda t: Tensor(t.values.copy(), requires_grad=t.requires_grad))

    # ------------------------------------------------------------------
    # forward

    def logits(self, graph: Graph, features=None, drop=None, attention_sink=None) -> Tensor:
        """Per-node raw logits; differentiable w.r.t. params and features.

        ``drop`` is an EdgeDropMask shared by all layers, or one mask per
        layer (DropEdge resamples per convolution), or None.
        """
        if graph.n == 0:
            raise ValueError("empty graph")
        if graph.d != self.config.in_dim:
            raise ValueError("feature dimension does not match the model config")
        if features is None:
            h = Tensor(graph.features)
        else:
            h = features if isinstance(features, Tensor) else Tensor(features)
        masks = _resolve_drop(drop, self.config.layers)
        for idx, (layer, mask) in enumerate(zip(self.layers, masks)):
            final = idx == self.config.layers - 1
            if self.config.arch == "gcn":
                out = self._gcn_layer(graph, h, layer, mask)
            else:
                out = self._gat_layer(graph, h, layer, mask, final, attention_sink)
            out = ad.add(out, layer["b"])
            if not final:
                out = ad.relu(out) if self.config.arch == "gcn" else ad.elu(out)
            if self.config.residual:
                skip = h if layer["R"] is None else ad.matmul(h, layer["R"])
                out = ad.add(out, skip)
            h = out
        return h

    def _gcn_layer(self, graph, h, layer, mask):
        src, dst, w = apply_drop(graph, mask, "gcn-renormalize")
        return ad.matmul(ad.spmm(src, dst, w, h, graph.n), layer["W"])

    def _gat_layer(self, graph, h, layer, mask, final, attention_sink):
        kept = surviving_edges(graph, mask)
        loops = np.arange(graph.n)
        src = np.concatenate([kept[:, 0], loops])
        dst = np.concatenate([kept[:, 1], loops])
        head_outs = []
        for hd in range(self.config.heads):
            hw = ad.matmul(h, layer["W"][hd])
            s_src = ad.index_rows(ad.matmul(hw, layer["a_src"][hd]), src)
            s_dst = ad.index_rows(ad.matmul(hw, layer["a_dst"][hd]), dst)
            scores = ad.leaky_relu(ad.add(s_src, s_dst), 0.2)
            alpha = ad.segment_softmax(ad.reshape(scores, (len(src),)), dst, graph.n)
            if attention_sink is not None:
                attention_sink.append((src.copy(), dst.copy(), alpha.values.copy()))
            head_outs.append(ad.spmm(src, dst, alpha, hw, graph.n))
        if len(head_outs) == 1:
            return head_outs[0]
        if final:
            acc = head_outs[0]
            for extra in head_outs[1:]:
                acc = ad.add(acc, extra)
            return ad.mul(acc, 1.0 / self.config.heads)
        return ad.concat_cols(head_outs)

    def predict(self, graph: Graph, drop=None) -> np.ndarray:
        # inference only: skip gradient bookkeeping
        logits = self.detached().logits(graph, drop=drop)
        return predict(logits.values, multilabel=graph.is_multilabel)

    def attention_coefficients(self, graph: Graph, drop=None):
        """(src, dst, alpha) per layer-head pair, in forward order."""
        if self.config.arch != "gat":
            raise ValueError("attention coefficients exist only for GAT models")
        sink = []
        self.logits(graph, drop=drop, attention_sink=sink)
        return sink

    # ------------------------------------------------------------------
    # checkpointing

    def to_checkpoint(self):
        return {
            "config": asdict(self.config),
            "params": [p.values.ravel().tolist() for p in self.parameters()],
        }

    @classmethod
    def from_checkpoint(cls, doc):
        model = init_model(ModelConfig(**doc["config"]))
        params = model.parameters()
        if len(params) != len(doc["params"]):
            raise ValueError("checkpoint parameter count mismatch")
        for p, flat in zip(params, doc["params"]):
            arr = np.array(flat, dtype=np.float64)
            if arr.size != p.size:
                raise ValueError("checkpoint parameter size mismatch")
            p.values[...] = arr.reshape(p.values.shape)
        return model

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_checkpoint(), fh)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_checkpoint(json.load(fh))

    def checkpoint_hash(self):
        blob = json.dumps(self.to_checkpoint(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def predict(logits: np.ndarray, multilabel=False) -> np.ndarray:
    """Argmax classes (ties to the lowest index) or thresholded multi-hot."""
    logits = np.asarray(logits)
    if multilabel:
        return (logits > 0).astype(np.int64)
    return np.argmax(logits, axis=1).astype(np.int64)


@dataclass
class FixedLinearModel:
    """One-layer linear aggregator: ``logits = spmm(weights, X) @ proj``.

    Used by the proposition verifiers, where the edge weights themselves are
    the object of interest (they may require gradients).
    """

    src: np.ndarray
    dst: np.ndarray
    weights: Tensor
    proj: Tensor
    n: int

    def logits(self, graph: Graph = None, features=None, drop=None, weights=None) -> Tensor:
        if drop is not None:
            raise ValueError("fixed linear models do not support drop masks")
        if features is None:
            features = Tensor(graph.features)
        elif not isinstance(features, Tensor):
            features = Tensor(features)
        w = self.weights if weights is None else weights
        return ad.matmul(ad.spmm(self.src, self.dst, w, features, self.n), self.proj)

    def predict(self, graph: Graph, drop=None) -> np.ndarray:
        return predict(self.logits(graph, drop=drop).values, multilabel=graph.is_multilabel)


def with_seed(config: ModelConfig, seed) -> ModelConfig:
    return replace(config, seed=int(seed))
