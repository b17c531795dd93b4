"""Training loops: plain students, DropEdge regularization, knowledge
distillation, and the two-phase DropDistillation schedule, plus grid search.

All training is full-graph with Adam and per-step validation early stopping.
DropDistillation phase 1 optimizes only the perturbed-logit matching loss for
a fixed iteration budget (one freshly drawn mask per step, shared by both
models and all layers) and never touches labels; phase 2 fine-tunes with the
regular distillation loss (a fresh optimizer) until early stopping.
Validation-based model selection covers the early-stopped portion only, so a
zero-iteration phase 1 reduces exactly to plain knowledge distillation.
"""

from __future__ import annotations

import itertools
import logging
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import autodiff as ad
from .autodiff import NonFiniteError, Tensor
from .graph import Graph, SplitMasks
from .metrics import accuracy, churn, micro_f1
from .models import GNNModel, ModelConfig, init_model, with_seed
from .optim import AdamState, adam_step
from .perturb import drop_edges

logger = logging.getLogger(__name__)

_TRAIN_SALT = 0x5EED_0006

METHODS = ("student", "student+dropedge", "kd", "kd+dropedge", "dropdistillation")
_TEACHER_METHODS = ("kd", "kd+dropedge", "dropdistillation")


@dataclass(frozen=True)
class TrainConfig:
    method: str = "student"
    lr: float = 0.005
    patience: int = 400
    max_steps: int = 10000
    alpha: float = 0.5
    temperature: float = 1.0
    dropedge_rate: float = 0.0
    dd_iterations: int = 800
    dd_p_star: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if not 0.0 <= self.dropedge_rate <= 1.0 or not 0.0 <= self.dd_p_star <= 1.0:
            raise ValueError("drop rates must lie in [0, 1]")
        if self.dd_iterations < 0:
            raise ValueError("dd_iterations must be nonnegative")
        if self.method.endswith("+dropedge") and self.dropedge_rate == 0.0:
            raise ValueError(f"{self.method} requires a positive dropedge_rate")


@dataclass
class TrainResult:
    model: GNNModel
    config: TrainConfig
    best_step: int
    best_val: float
    train_score: float
    val_score: float
    test_score: float
    loss_trace: list = field(default_factory=list)
    val_trace: list = field(default_factory=list)
    steps: int = 0
    phase1_steps: int = 0
    wall_clock: float = 0.0

    def to_json_dict(self):
        return {
            "config": asdict(self.config),
            "best_step": self.best_step,
            "best_val": self.best_val,
            "train_score": self.train_score,
            "val_score": self.val_score,
            "test_score": self.test_score,
            "steps": self.steps,
            "phase1_steps": self.phase1_steps,
            "wall_clock": self.wall_clock,
            "loss_trace": [float(v) for v in self.loss_trace],
            "val_trace": [None if v is None else float(v) for v in self.val_trace],
        }

    def write_trace_csv(self, path):
        with open(path, "w", newline="") as fh:
            fh.write("step,train_loss,val_score\n")
            for k, (loss, val) in enumerate(zip(self.loss_trace, self.val_trace), start=1):
                val_txt = "" if val is None else repr(float(val))
                fh.write(f"{k},{float(loss)!r},{val_txt}\n")


def evaluate(model, graph: Graph, mask) -> float:
    """Accuracy (single-label) or micro-F1 (multi-label) on the masked nodes."""
    preds = model.predict(graph)
    if graph.is_multilabel:
        return micro_f1(preds, graph.labels, mask)
    return accuracy(preds, graph.labels, mask)


def kd_loss(student_logits, teacher_logits, labels, mask, alpha, tau=1.0):
    """``alpha*CE + (1-alpha)*tau^2*KL(teacher || student)`` over masked nodes.

    The boundary values of alpha short-circuit to the pure objective, so
    alpha=1 is bit-exactly plain cross-entropy.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    if alpha == 1.0:
        return ad.cross_entropy(student_logits, labels, mask)
    teacher_logits = np.asarray(teacher_logits, dtype=np.float64)
    n = teacher_logits.shape[0]
    idx = np.flatnonzero(np.asarray(mask)) if mask is not None else np.arange(n)
    if idx.size == 0:
        raise ValueError("mask selects no nodes")
    t = teacher_logits[idx] / tau
    t = t - t.max(axis=1, keepdims=True)
    log_pt = t - np.log(np.exp(t).sum(axis=1, keepdims=True))
    pt = np.exp(log_pt)
    entropy_term = float((pt * log_pt).sum(axis=1).mean())
    student_rows = ad.mul(ad.index_rows(student_logits, idx), 1.0 / tau)
    weighted = ad.mul(ad.log_softmax_rows(student_rows), pt)
    kl = ad.add(ad.mul(ad.tsum(weighted), -1.0 / idx.size), entropy_term)
    kl = ad.mul(kl, tau * tau)
    if alpha == 0.0:
        return kl
    ce = ad.cross_entropy(student_logits, labels, mask)
    return ad.add(ad.mul(ce, alpha), ad.mul(kl, 1.0 - alpha))


def dd_loss(student: GNNModel, teacher: GNNModel, graph: Graph, mask):
    """Mean squared difference of the two models' logits under one shared
    edge-drop mask, over all nodes and classes. Teacher gradients are cut."""
    teacher_logits = teacher.detached().logits(graph, drop=mask)
    student_logits = student.logits(graph, drop=mask)
    return ad.mse(student_logits, Tensor(teacher_logits.values))


def _dropedge_masks(graph, rate, layers, rng):
    # DropEdge resamples before each convolution
    return [drop_edges(graph, rate, seed=int(rng.integers(2**63))) for _ in range(layers)]


def _step(model, loss, adam):
    ad.backward(loss)
    params = model.parameters()
    adam_step(params, [p.grad for p in params], adam)
    for p in params:
        p.zero_grad()


def train(student_config: ModelConfig, graph: Graph, splits: SplitMasks,
          config: TrainConfig, teacher: GNNModel = None) -> TrainResult:
    """Train one student with the configured method; returns best-val params.

    Identical invocations (same configs and seed) are bit-deterministic.
    """
    if config.method in _TEACHER_METHODS and teacher is None:
        raise ValueError(f"method {config.method!r} requires a teacher")
    start = time.perf_counter()
    model = init_model(with_seed(student_config, config.seed))
    rng = np.random.default_rng([_TRAIN_SALT, int(config.seed)])
    frozen = teacher.detached() if teacher is not None else None
    teacher_clean = frozen.logits(graph).values if frozen is not None else None
    dropedge_on = config.dropedge_rate > 0.0
    base_method = "kd" if config.method == "dropdistillation" else config.method
    if base_method.startswith("kd") and graph.is_multilabel:
        raise ValueError("the distillation loss is defined for single-label graphs")

    loss_trace: list = []
    val_trace: list = []

    def guarded(compute, step_no):
        try:
            return compute()
        except NonFiniteError as exc:
            raise RuntimeError(
                f"non-finite loss at step {step_no} (method {config.method!r}, seed {config.seed})"
            ) from exc

    # ---- phase 1: label-free influence transfer (DropDistillation only)
    phase1_steps = 0
    if config.method == "dropdistillation" and config.dd_iterations > 0:
        adam1 = AdamState.for_params(model.parameters(), config.lr)
        for k in range(min(config.dd_iterations, config.max_steps)):
            mask = drop_edges(graph, config.dd_p_star, seed=int(rng.integers(2**63)))
            loss = guarded(lambda: dd_loss(model, frozen, graph, mask), k + 1)
            _step(model, loss, adam1)
            loss_trace.append(loss.item())
            val_trace.append(None)
            phase1_steps += 1

    # ---- phase 2 / main loop with early stopping (fresh optimizer)
    def main_loss():
        drop = _dropedge_masks(graph, config.dropedge_rate, student_config.layers, rng) \
            if dropedge_on else None
        logits = model.logits(graph, drop=drop)
        if base_method.startswith("student"):
            if graph.is_multilabel:
                return ad.bce_with_logits(logits, graph.labels, splits.train)
            return ad.cross_entropy(logits, graph.labels, splits.train)
        return kd_loss(logits, teacher_clean, graph.labels, splits.train,
                       config.alpha, config.temperature)

    adam = AdamState.for_params(model.parameters(), config.lr)
    best_model = model.copy()
    best_val = evaluate(model, graph, splits.val)
    best_local = 0
    budget = max(0, config.max_steps - phase1_steps)
    local = 0
    while local < budget:
        local += 1
        loss = guarded(main_loss, phase1_steps + local)
        _step(model, loss, adam)
        val = evaluate(model, graph, splits.val)
        loss_trace.append(loss.item())
        val_trace.append(val)
        if val > best_val:
            best_val = val
            best_local = local
            best_model = model.copy()
        if local - best_local >= config.patience:
            break

    return TrainResult(
        model=best_model,
        config=config,
        best_step=phase1_steps + best_local,
        best_val=best_val,
        train_score=evaluate(best_model, graph, splits.train),
        val_score=evaluate(best_model, graph, splits.val),
        test_score=evaluate(best_model, graph, splits.test),
        loss_trace=loss_trace,
        val_trace=val_trace,
        steps=phase1_steps + local,
        phase1_steps=phase1_steps,
        wall_clock=time.perf_counter() - start,
    )


# ---------------------------------------------------------------------------
# grid search


@dataclass
class CellResult:
    overrides: dict
    results: list
    mean_val: float
    mean_churn: float | None


@dataclass
class GridResult:
    method: str
    cells: list
    best: CellResult


def expand_grid(grid: dict) -> list:
    """Cartesian product of a {param: [values]} grid, in declaration order."""
    if not grid:
        return [{}]
    keys = list(grid.keys())
    return [dict(zip(keys, combo)) for combo in itertools.product(*(grid[k] for k in keys))]


def grid_search(methods, grids, student_config: ModelConfig, graph: Graph,
                splits: SplitMasks, seeds, defaults: TrainConfig = None,
                teacher: GNNModel = None) -> dict:
    """Exhaustive grid evaluation; the best cell per method maximizes the mean
    validation score over seeds (ties: lower teacher churn, then first listed).
    """
    defaults = defaults if defaults is not None else TrainConfig()
    seeds = [int(s) for s in seeds]
    teacher_preds = teacher.predict(graph) if teacher is not None else None
    out = {}
    for method in methods:
        cell_results = []
        for overrides in expand_grid(grids.get(method, {})):
            cfg = replace(defaults, method=method, **overrides)
            results = [
                train(student_config, graph, splits, replace(cfg, seed=s), teacher=teacher)
                for s in seeds
            ]
            mean_val = float(np.mean([r.best_val for r in results]))
            mean_churn = None
            if teacher_preds is not None:
                mean_churn = float(np.mean([
                    churn(r.model.predict(graph), teacher_preds, splits.test)
                    for r in results
                ]))
            cell_results.append(CellResult(overrides, results, mean_val, mean_churn))
            logger.info("grid %s %s: val %.4f", method, overrides, mean_val)
        best = cell_results[0]
        for cell in cell_results[1:]:
            if cell.mean_val > best.mean_val:
                best = cell
            elif (cell.mean_val == best.mean_val and cell.mean_churn is not None
                  and best.mean_churn is not None and cell.mean_churn < best.mean_churn):
                best = cell
        out[method] = GridResult(method=method, cells=cell_results, best=best)
    return out
