"""Experiment harness: the pairwise axiom study, the distillation benchmark,
and the numerical verifiers for the two propositions.

Everything here is deterministic given a config: re-running an experiment
byte-reproduces the emitted tables.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Tensor
from .datasets import (
    generate_multilabel_sbm,
    generate_prop1_graph,
    generate_sbm,
    load_planetoid,
)
from .distill import TrainConfig, TrainResult, evaluate, grid_search, train
from .graph import Graph, SplitMasks, gcn_normalize, random_split
from .influence import influence_difference, influence_distributions, report_from_distributions
from .metrics import PairMetrics, ZeroVarianceError, churn, label_entropy, pearson_corr, stability_vector
from .models import FixedLinearModel, GNNModel, ModelConfig
from .perturb import zero_mean_perturbation
from .tables import emit_table, fmt_corr, fmt_pct

logger = logging.getLogger(__name__)

_PROP2_SALT = 0x5EED_0007

AXIOM_HEADER = ["Dataset", "Acc/F1 (%)", "C (%)", "ID (%)", "corr(id,s)", "corr(h,s)"]


# ---------------------------------------------------------------------------
# configuration


def default_config() -> dict:
    """Desk-scale fallback: a 300-node 3-block SBM, no external data needed."""
    return {
        "name": "sbm-desk",
        "dataset": {
            "kind": "sbm",
            "blocks": [100, 100, 100],
            "p_in": 0.055,
            "p_out": 0.005,
            "d": 12,
            "feature_noise": 1.1,
            "seed": 7,
        },
        "split": {"fractions": [0.1, 0.1, 0.8], "seed": 3},
        "seeds": [0, 1, 2, 3, 4],
        "axiom_model": {"arch": "gat", "layers": 3, "hidden_base": 8, "q": 1,
                        "heads": 2, "residual": True},
        "teacher": {"arch": "gat", "layers": 3, "hidden_base": 16, "q": 4,
                    "heads": 4, "residual": True, "seed": 100},
        "student": {"arch": "gat", "layers": 3, "hidden_base": 16, "q": 1,
                    "heads": 1, "residual": True},
        "train": {"lr": 0.005, "patience": 400, "max_steps": 10000},
        "min_teacher_val": 0.5,
        "methods": {
            "student": {},
            "kd": {"alpha": [0.25, 0.5]},
            "dropdistillation": {"dd_iterations": [50, 800, 1500], "alpha": [0.25, 0.5]},
        },
    }


@dataclass
class ExperimentConfig:
    name: str
    dataset: dict
    split: dict
    seeds: list
    axiom_model: dict
    teacher: dict
    student: dict
    train: dict
    methods: dict
    min_teacher_val: float = 0.5

    def __post_init__(self):
        self.seeds = [int(s) for s in self.seeds]
        if len(self.seeds) < 2:
            raise ValueError("pairwise metrics need at least 2 seeds")
        if self.dataset.get("kind") == "planetoid":
            for key in ("content", "cites"):
                if not Path(self.dataset[key]).exists():
                    raise FileNotFoundError(self.dataset[key])
        if "checkpoint" in self.teacher and not Path(self.teacher["checkpoint"]).exists():
            raise FileNotFoundError(self.teacher["checkpoint"])

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        merged = default_config()
        merged.update(doc)
        return cls(**merged)

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def build_dataset(config: ExperimentConfig):
    """(graph, splits, prop1_construction-or-None) from the dataset spec."""
    spec = dict(config.dataset)
    kind = spec.pop("kind")
    if kind == "sbm":
        graph = generate_sbm(**spec)
    elif kind == "sbm-multilabel":
        graph = generate_multilabel_sbm(**spec)
    elif kind == "planetoid":
        graph = load_planetoid(spec["content"], spec["cites"]).graph
    elif kind == "prop1":
        cons = generate_prop1_graph(**spec)
        n = cons.graph.n
        is_root = np.isin(np.arange(n), cons.roots)
        splits = SplitMasks(train=~is_root, val=np.zeros(n, bool), test=is_root)
        return cons.graph, splits, cons
    else:
        raise ValueError(f"unknown dataset kind {kind!r}")
    splits = random_split(graph, config.split["fractions"], config.split["seed"])
    return graph, splits, None


def _model_config(doc: dict, graph: Graph) -> ModelConfig:
    merged = {"in_dim": graph.d, "out_dim": graph.num_classes, **doc}
    return ModelConfig(**merged)


def _mean_std(values):
    arr = np.asarray(values, dtype=np.float64)
    return float(arr.mean()), float(arr.std())  # population std throughout


def _agg_corr(values):
    defined = [v for v in values if v is not None]
    if not defined:
        return None, None
    return _mean_std(defined)


# ---------------------------------------------------------------------------
# axiom study


@dataclass
class AxiomStudyResult:
    """Per-seed scores, per-pair metrics, and the aggregated table row."""

    name: str
    seeds: list
    scores: list
    pairs: list
    acc: tuple
    churn: tuple
    id: tuple
    corr_id_s: tuple
    corr_h_s: tuple
    train_results: list = field(default_factory=list)

    def table_row(self):
        return [
            self.name,
            fmt_pct(*self.acc),
            fmt_pct(*self.churn),
            fmt_pct(*self.id),
            fmt_corr(*self.corr_id_s),
            fmt_corr(*self.corr_h_s),
        ]


def pair_metrics(models, seeds, graph: Graph, splits: SplitMasks):
    """Churn, influence difference, and correlations for every model pair.

    Metrics are evaluated on test nodes; influence roots are the test nodes
    with at least one neighbor. Correlations are computed per pair and pairs
    with undefined (zero-variance) correlations are skipped with a warning.
    """
    test_idx = np.flatnonzero(splits.test)
    preds = [m.predict(graph) for m in models]
    dists = [influence_distributions(m, graph, test_idx) for m in models]

    single_label = not graph.is_multilabel
    if single_label:
        h_roots = np.array([i for i in test_idx if len(graph.neighbors(int(i)))], dtype=int)
        h_vec = np.array([label_entropy(graph, i) for i in h_roots])

    pairs = []
    for a in range(len(models)):
        for b in range(a + 1, len(models)):
            c_ab = churn(preds[a], preds[b], splits.test)
            s_full = stability_vector(preds[a], preds[b], splits.test).s
            report = report_from_distributions(dists[a], dists[b], graph.n, test_idx)
            corr_id = corr_h = None
            if single_label:
                roots = report.evaluated()
                try:
                    corr_id = pearson_corr(report.per_node[roots], s_full[roots])
                except ZeroVarianceError:
                    logger.warning("corr(id,s) undefined for pair (%s,%s); skipped",
                                   seeds[a], seeds[b])
                try:
                    corr_h = pearson_corr(h_vec, s_full[h_roots])
                except ZeroVarianceError:
                    logger.warning("corr(h,s) undefined for pair (%s,%s); skipped",
                                   seeds[a], seeds[b])
            pairs.append(PairMetrics(
                seed_a=int(seeds[a]), seed_b=int(seeds[b]), churn=c_ab,
                id_scalar=report.id_scalar, per_node_id=report.per_node,
                corr_id_s=corr_id, corr_h_s=corr_h,
            ))
    return pairs


def run_axiom_study(config: ExperimentConfig, out_dir, fmt="csv") -> AxiomStudyResult:
    """Train N same-config models on different seeds and tabulate the pairwise
    churn/influence metrics (one table row per dataset)."""
    out_dir = Path(out_dir)
    (out_dir / "runs" / "axioms").mkdir(parents=True, exist_ok=True)
    graph, splits, prop1 = build_dataset(config)

    train_results = []
    if prop1 is not None:
        # fixed analytic model pair; nothing to train
        models = [prop1.model_f, prop1.model_g]
        seeds = [0, 1]
    else:
        model_cfg = _model_config(config.axiom_model, graph)
        base = TrainConfig(method="student", **config.train)
        for s in config.seeds:
            result = train(model_cfg, graph, splits, replace(base, seed=s))
            train_results.append(result)
            with open(out_dir / "runs" / "axioms" / f"seed_{s}.json", "w") as fh:
                json.dump(result.to_json_dict(), fh, indent=1)
        models = [r.model for r in train_results]
        seeds = config.seeds

    scores = [evaluate(m, graph, splits.test) for m in models]
    pairs = pair_metrics(models, seeds, graph, splits)
    with open(out_dir / "runs" / "axioms" / "pairs.json", "w") as fh:
        json.dump([p.to_json_dict() for p in pairs], fh, indent=1)

    result = AxiomStudyResult(
        name=config.name,
        seeds=list(seeds),
        scores=scores,
        pairs=pairs,
        acc=_mean_std(scores),
        churn=_mean_std([p.churn for p in pairs]),
        id=_mean_std([p.id_scalar for p in pairs]),
        corr_id_s=_agg_corr([p.corr_id_s for p in pairs]),
        corr_h_s=_agg_corr([p.corr_h_s for p in pairs]),
        train_results=train_results,
    )
    emit_table(out_dir, "axioms", AXIOM_HEADER, [result.table_row()], fmt)
    return result


# ---------------------------------------------------------------------------
# distillation benchmark


@dataclass
class BenchmarkResult:
    name: str
    teacher: GNNModel
    teacher_result: TrainResult | None
    teacher_hash: str
    teacher_score: float
    grid: dict
    accuracy_rows: list
    churn_rows: list


def run_distill_benchmark(config: ExperimentConfig, out_dir, fmt="csv") -> BenchmarkResult:
    """Train one teacher, then five students per method/grid cell; emit the
    accuracy table and the teacher-student churn table for the best cells."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    graph, splits, prop1 = build_dataset(config)
    if prop1 is not None:
        raise ValueError("the distillation benchmark needs a trainable dataset")

    base = TrainConfig(method="student", **config.train)
    if "checkpoint" in config.teacher:
        teacher = GNNModel.from_checkpoint(
            json.loads(Path(config.teacher["checkpoint"]).read_text()))
        teacher_result = None
        teacher_val = evaluate(teacher, graph, splits.val)
    else:
        teacher_cfg = _model_config(config.teacher, graph)
        teacher_result = train(teacher_cfg, graph, splits,
                               replace(base, seed=teacher_cfg.seed))
        teacher = teacher_result.model
        teacher_val = teacher_result.best_val
    if teacher_val < config.min_teacher_val:
        raise RuntimeError(
            f"teacher validation score {teacher_val:.3f} is below the "
            f"required minimum {config.min_teacher_val:.3f}; distilling from a "
            "broken teacher is meaningless"
        )
    teacher.save(out_dir / "teacher.json")
    teacher_hash = teacher.checkpoint_hash()
    teacher_preds = teacher.predict(graph)
    teacher_score = evaluate(teacher, graph, splits.test)

    student_cfg = _model_config(config.student, graph)
    methods = list(config.methods.keys())
    grid = grid_search(methods, config.methods, student_cfg, graph, splits,
                       config.seeds, defaults=base, teacher=teacher)

    acc_rows = [["Teacher", fmt_pct(teacher_score, 0.0), "", teacher_hash]]
    churn_rows = []
    for method in methods:
        best = grid[method].best
        cell_txt = json.dumps(best.overrides, sort_keys=True)
        accs = [r.test_score for r in best.results]
        churns = [churn(r.model.predict(graph), teacher_preds, splits.test)
                  for r in best.results]
        acc_rows.append([method, fmt_pct(*_mean_std(accs)), cell_txt, teacher_hash])
        churn_rows.append([method, fmt_pct(*_mean_std(churns)), cell_txt, teacher_hash])
        run_dir = out_dir / "runs" / method
        run_dir.mkdir(parents=True, exist_ok=True)
        for s, r in zip(config.seeds, best.results):
            with open(run_dir / f"{s}.json", "w") as fh:
                json.dump(r.to_json_dict(), fh, indent=1)
            r.write_trace_csv(run_dir / f"{s}_trace.csv")

    emit_table(out_dir, "distill_accuracy",
               ["Method", "Acc/F1 (%)", "Config", "TeacherHash"], acc_rows, fmt)
    emit_table(out_dir, "distill_churn",
               ["Method", "C(S,T) (%)", "Config", "TeacherHash"], churn_rows, fmt)
    return BenchmarkResult(
        name=config.name,
        teacher=teacher,
        teacher_result=teacher_result,
        teacher_hash=teacher_hash,
        teacher_score=teacher_score,
        grid=grid,
        accuracy_rows=acc_rows,
        churn_rows=churn_rows,
    )


# ---------------------------------------------------------------------------
# proposition verifiers


def verify_prop1(p, eps, num_roots=16) -> dict:
    """Construct the counterexample: churn exactly zero with a large influence
    difference matching the closed form ``2(p-eps)/(p+eps)``."""
    if not p > 3 * eps:
        raise ValueError("the construction requires p > 3*eps")
    cons = generate_prop1_graph(num_roots, p, eps)
    graph = cons.graph
    mask = np.isin(np.arange(graph.n), cons.roots)
    c = churn(cons.model_f.predict(graph), cons.model_g.predict(graph), mask)
    report = influence_difference(cons.model_f, cons.model_g, graph, node_subset=cons.roots)
    closed = 2.0 * (p - eps) / (p + eps)
    ok = c == 0.0 and abs(report.id_scalar - closed) < 1e-9
    return {
        "p": float(p),
        "eps": float(eps),
        "num_roots": int(num_roots),
        "churn": c,
        "id": report.id_scalar,
        "closed_form": closed,
        "pass": bool(ok),
    }


def _random_linear_pair(n, seed):
    """A weighted 5-node-style graph plus two linear models sharing its
    aggregation weights (the weights tensor carries gradients)."""
    rng = np.random.default_rng([_PROP2_SALT, int(seed)])
    pairs = [(u, v) for u in range(n) for v in range(u + 1, n) if rng.random() < 0.6]
    if not pairs:
        pairs = [(0, 1)]
    edges = np.array([e for u, v in pairs for e in ((u, v), (v, u))], dtype=np.int64)
    d = 3
    graph = Graph(features=rng.standard_normal((n, d)),
                  labels=np.zeros(n, dtype=np.int64),
                  edges=edges, num_classes=2)
    src, dst, w = gcn_normalize(graph)
    weights = Tensor(w, requires_grad=True)
    num_edge_entries = len(graph.edges)  # self-loops sit at the tail, never perturbed
    proj_t = rng.standard_normal((d, 2))
    proj_s = rng.standard_normal((d, 2))
    model_t = FixedLinearModel(src=src, dst=dst, weights=weights, proj=Tensor(proj_t), n=n)
    model_s = FixedLinearModel(src=src, dst=dst, weights=weights, proj=Tensor(proj_s), n=n)
    return graph, model_t, model_s, num_edge_entries


def verify_prop2(graph: Graph = None, samples=100_000, p=0.2, seed=0,
                 models=None, n_nodes=5) -> dict:
    """Monte-Carlo check that the expected perturbed squared difference equals
    the base squared difference plus the gradient-contraction term.

    The gradient term is computed from exact adjacency gradients (autodiff)
    combined with the per-entry perturbation variance ``w^2 p/(1-p)``; the
    left side evaluates the actual models on perturbed weights.
    """
    if samples < 10_000:
        raise ValueError("need at least 1e4 samples for a meaningful check")
    if models is None:
        graph, model_t, model_s, num_edges = _random_linear_pair(n_nodes, seed)
    else:
        model_t, model_s = models
        for m in (model_t, model_s):
            if not isinstance(m, FixedLinearModel):
                raise ValueError("the expansion is exact only for one-layer linear models")
        if model_t.weights is not model_s.weights:
            raise ValueError("both models must share one adjacency weight tensor")
        if graph is None:
            raise ValueError("a graph is required when models are supplied")
        num_edges = len(graph.edges)

    weights = model_t.weights
    x = graph.features
    feats = Tensor(x)
    diff = ad.sub(model_t.logits(features=feats), model_s.logits(features=feats))
    base = float((diff.values ** 2).sum())

    # exact gradient of every output entry w.r.t. the adjacency weights
    tape = Tape(diff)
    n, c = diff.values.shape
    sumsq = np.zeros(weights.size)
    seed_mat = np.zeros((n, c))
    for v in range(n):
        for i in range(c):
            tape.zero_grads()
            seed_mat[v, i] = 1.0
            tape.backward(seed_mat)
            seed_mat[v, i] = 0.0
            if weights.grad is not None:
                sumsq += weights.grad ** 2
    var = np.zeros(weights.size)
    w_edges = weights.values[:num_edges]
    var[:num_edges] = w_edges ** 2 * p / (1.0 - p)
    rhs = base + float((var * sumsq).sum())

    # Monte Carlo left side: evaluate both models on actually perturbed weights
    deltas = zero_mean_perturbation(w_edges, p, seed=seed, size=samples)
    w_mat = np.tile(weights.values, (samples, 1))
    w_mat[:, :num_edges] += deltas
    agg = np.zeros((samples, n, x.shape[1]))
    for v in range(n):
        entries = np.flatnonzero(model_t.dst == v)
        agg[:, v, :] = w_mat[:, entries] @ x[model_t.src[entries]]
    out_t = agg @ model_t.proj.values
    out_s = agg @ model_s.proj.values
    vals = ((out_t - out_s) ** 2).sum(axis=(1, 2))
    lhs = float(vals.mean())
    stderr = float(vals.std(ddof=1) / np.sqrt(samples))
    gap = abs(lhs - rhs)
    sigma_units = 0.0 if gap == 0.0 else (np.inf if stderr == 0.0 else gap / stderr)
    return {
        "lhs": lhs,
        "rhs": rhs,
        "base": base,
        "stderr": stderr,
        "diff_in_stderr_units": float(sigma_units),
        "pass": bool(gap <= 4.0 * stderr),
        "samples": int(samples),
        "p": float(p),
    }
