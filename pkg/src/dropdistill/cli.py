"""Command-line entry point.

Subcommands: ``axioms`` (pairwise churn/influence study), ``distill``
(teacher-student benchmark), ``verify-prop1``, ``verify-prop2``, and
``gradcheck``. Without ``--config`` the desk-scale SBM fallback runs, so the
whole pipeline works with zero external data.
"""

from __future__ import annotations

import json
import logging
import sys
from pathlib import Path

import click
import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .datasets import generate_sbm
from .experiments import (
    ExperimentConfig,
    run_axiom_study,
    run_distill_benchmark,
    verify_prop1,
    verify_prop2,
)
from .gradcheck import leaf_grad_errors
from .models import ModelConfig, init_model


@click.group()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None,
              help="Experiment config JSON (defaults to the built-in SBM setup).")
@click.option("--out", "out_dir", type=click.Path(), default="results",
              help="Output directory for tables and run records.")
@click.option("--seeds", type=int, default=None,
              help="Override the number of seeds (uses seeds 0..k-1).")
@click.option("--format", "fmt", type=click.Choice(["csv", "markdown"]), default="csv")
@click.pass_context
def main(ctx, config_path, out_dir, seeds, fmt):
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    ctx.ensure_object(dict)
    ctx.obj.update(config_path=config_path, out_dir=Path(out_dir), seeds=seeds, fmt=fmt)


def _load_config(ctx) -> ExperimentConfig:
    path = ctx.obj["config_path"]
    config = ExperimentConfig.from_file(path) if path else ExperimentConfig.from_dict({})
    if ctx.obj["seeds"] is not None:
        if ctx.obj["seeds"] < 2:
            raise click.ClickException("pairwise metrics need at least 2 seeds")
        config.seeds = list(range(ctx.obj["seeds"]))
    return config


@main.command()
@click.pass_context
def axioms(ctx):
    """Run the pairwise axiom study and emit axioms.csv."""
    config = _load_config(ctx)
    out = ctx.obj["out_dir"]
    out.mkdir(parents=True, exist_ok=True)
    result = run_axiom_study(config, out, fmt=ctx.obj["fmt"])
    click.echo(" | ".join(result.table_row()))
    click.echo(f"tables written to {out}")


@main.command()
@click.pass_context
def distill(ctx):
    """Run the distillation benchmark and emit the accuracy/churn tables."""
    config = _load_config(ctx)
    out = ctx.obj["out_dir"]
    out.mkdir(parents=True, exist_ok=True)
    result = run_distill_benchmark(config, out, fmt=ctx.obj["fmt"])
    for row in result.accuracy_rows:
        click.echo(f"acc   {row[0]}: {row[1]}")
    for row in result.churn_rows:
        click.echo(f"churn {row[0]}: {row[1]}")
    click.echo(f"tables written to {out}")


@main.command("verify-prop1")
@click.option("--p", type=float, required=True)
@click.option("--eps", type=float, required=True)
@click.option("--roots", type=int, default=16)
def verify_prop1_cmd(p, eps, roots):
    """Churn-zero / large-influence-difference counterexample check."""
    try:
        report = verify_prop1(p, eps, num_roots=roots)
    except ValueError as exc:
        raise click.ClickException(str(exc))
    click.echo(json.dumps(report, indent=1))
    sys.exit(0 if report["pass"] else 1)


@main.command("verify-prop2")
@click.option("--samples", type=int, default=100_000)
@click.option("--p", type=float, default=0.2)
@click.option("--seed", type=int, default=0)
def verify_prop2_cmd(samples, p, seed):
    """Monte-Carlo check of the perturbed-difference expansion."""
    try:
        report = verify_prop2(samples=samples, p=p, seed=seed)
    except ValueError as exc:
        raise click.ClickException(str(exc))
    click.echo(json.dumps(report, indent=1))
    sys.exit(0 if report["pass"] else 1)


@main.command()
@click.option("--tolerance", type=float, default=1e-4)
def gradcheck(tolerance):
    """Finite-difference check of model gradients (params and features)."""
    rng = np.random.default_rng(0)
    graph = generate_sbm([5, 5, 5], 0.6, 0.15, d=5, feature_noise=0.5, seed=11)
    worst = 0.0
    for arch, heads in (("gcn", 1), ("gat", 2)):
        cfg = ModelConfig(arch=arch, in_dim=graph.d, out_dim=graph.num_classes,
                          layers=3, hidden_base=4, q=1, heads=heads, seed=5)
        model = init_model(cfg)
        feats = Tensor(graph.features, requires_grad=True)
        proj = rng.standard_normal((graph.n, graph.num_classes))

        def loss_fn():
            return ad.tsum(ad.mul(model.logits(graph, features=feats), proj))

        errs = leaf_grad_errors(loss_fn, [feats] + model.parameters())
        worst = max(worst, max(errs))
        click.echo(f"{arch}: max rel err {max(errs):.3e} over {len(errs)} leaves")
    ok = worst < tolerance
    click.echo(f"gradcheck {'PASS' if ok else 'FAIL'} (worst {worst:.3e}, tol {tolerance:g})")
    sys.exit(0 if ok else 1)


if __name__ == "__main__":
    main()
