"""Command-line interface: ``bench run``, ``bench generate``, ``bench report``."""

import json
import os

import click

from .._rng import spawn_seeds
from ..data import split_dataset
from ..synthgen import ScenarioSpec, generate
from .config import PROFILES, ExperimentConfig, expand_methods
from .report import CoverageReport, emit_report
from .runner import run_experiment


def _explicit(ctx, name):
    source = ctx.get_parameter_source(name)
    return source is not None and source.name == "COMMANDLINE"


@click.group()
def main():
    """Benchmark CLI for conformal dose-response prediction intervals."""


@main.command()
@click.option("--setup", type=int, default=None, help="Benchmark setup (1, 2, or 3).")
@click.option("--scenario", type=int, default=1, help="Scenario within the setup.")
@click.option("--alphas", default="0.1,0.05", help="Comma-separated miscoverage levels.")
@click.option("--seeds", "n_seeds", type=int, default=None, help="Number of random seeds.")
@click.option("--n", "n_samples", type=int, default=None, help="Samples per seed.")
@click.option("--grid", "grid_k", type=int, default=40, help="Dose-grid size.")
@click.option("--methods", default="all", help="'all' or comma-separated method names.")
@click.option("--propensity", type=click.Choice(["oracle", "estimated", "both"]),
              default="both", help="Which density variants 'all' expands to.")
@click.option("--evaluation", type=click.Choice(["grid", "observed"]), default="grid")
@click.option("--profile", type=click.Choice(sorted(PROFILES)), default="desk",
              help="Scale preset: desk = 10 seeds x 1000, full = 50 x 5000.")
@click.option("--seed", "master_seed", type=int, default=0, help="Master seed.")
@click.option("--workers", type=int, default=1,
              help="Concurrent seed workers (capped by DOSECONF_THREADS).")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None,
              help="JSON file with ExperimentConfig fields; CLI flags override.")
@click.option("--out", "out_dir", type=click.Path(), default="bench-out",
              help="Output directory for report files.")
@click.pass_context
def run(ctx, setup, scenario, alphas, n_seeds, n_samples, grid_k, methods, propensity,
        evaluation, profile, master_seed, workers, config_path, out_dir):
    """Run a multi-seed coverage sweep and write report CSV/JSON files."""
    fields = {}
    if config_path:
        with open(config_path) as fh:
            fields.update(json.load(fh))

    profile_seeds, profile_n = PROFILES[profile]
    fields.setdefault("n_seeds", profile_seeds)
    fields.setdefault("n_samples", profile_n)

    overrides = {
        "setup": setup, "scenario": scenario, "grid_k": grid_k,
        "master_seed": master_seed, "workers": workers, "evaluation": evaluation,
    }
    for name, value in overrides.items():
        if _explicit(ctx, name) or name not in fields:
            if value is not None:
                fields[name] = value
    if _explicit(ctx, "n_seeds") and n_seeds is not None:
        fields["n_seeds"] = n_seeds
    if _explicit(ctx, "n_samples") and n_samples is not None:
        fields["n_samples"] = n_samples
    if _explicit(ctx, "alphas") or "alphas" not in fields:
        fields["alphas"] = tuple(float(a) for a in alphas.split(","))
    if _explicit(ctx, "methods") or "methods" not in fields:
        requested = "all" if methods == "all" else tuple(m.strip() for m in methods.split(","))
        fields["methods"] = expand_methods(requested, propensity)
    if fields.get("setup") is None:
        raise click.UsageError("--setup is required (directly or via --config)")
    fields["output"] = out_dir

    cfg = ExperimentConfig.from_dict(fields)
    click.echo(f"running setup {cfg.setup} scenario {cfg.scenario}: "
               f"{cfg.n_seeds} seeds x {cfg.n_samples} samples, methods={list(cfg.methods)}")
    report = run_experiment(cfg)
    paths = emit_report(report, "csv", out_dir) + emit_report(report, "json", out_dir)
    click.echo(report.summary_table())
    for path in paths:
        click.echo(f"wrote {path}")


@main.command()
@click.option("--setup", type=int, required=True)
@click.option("--scenario", type=int, default=1)
@click.option("--n", "n_samples", type=int, default=5000)
@click.option("--seed", type=int, default=0)
@click.option("--split/--no-split", "with_split", default=True,
              help="Also write train/cal/test labels as a sidecar JSON.")
@click.option("--out", "out_dir", type=click.Path(), default="bench-data")
def generate_cmd(setup, scenario, n_samples, seed, with_split, out_dir):
    """Dump one synthetic dataset as CSV (plus optional split sidecar)."""
    spec = ScenarioSpec(setup, scenario, n_samples, seed=spawn_seeds(seed, 1)[0])
    data = generate(spec)
    os.makedirs(out_dir, exist_ok=True)
    stem = f"setup{setup}_scenario{scenario}_n{n_samples}_seed{seed}"
    csv_path = os.path.join(out_dir, f"{stem}.csv")
    if with_split:
        data = split_dataset(data, seed=spec.seed)
        data.save_split(os.path.join(out_dir, f"{stem}_split.json"))
    data.to_csv(csv_path)
    click.echo(f"wrote {csv_path}")


generate_cmd.name = "generate"
main.add_command(generate_cmd, "generate")


@main.command(name="report")
@click.option("--input", "input_path", type=click.Path(exists=True), required=True,
              help="report.csv (or a directory containing it).")
def report_cmd(input_path):
    """Re-aggregate a written report and print the summary table."""
    if os.path.isdir(input_path):
        csv_path = os.path.join(input_path, "report.csv")
        grid_path = os.path.join(input_path, "grid_coverage.csv")
    else:
        csv_path = input_path
        grid_path = os.path.join(os.path.dirname(input_path), "grid_coverage.csv")
    report = CoverageReport.from_csv(csv_path, grid_path)
    click.echo(report.summary_table())


if __name__ == "__main__":
    main()
