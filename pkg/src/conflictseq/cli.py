"""Command-line pipeline: composable stages driven by one YAML config."""

from __future__ import annotations

import sys

import click

from .config import ConfigError, PipelineConfig, load_config
from .pipeline import STAGES, MissingArtifactError, run_all, run_stage


def _load(config_path: str, workers, seed, out) -> PipelineConfig:
    cfg = load_config(config_path)
    if workers is not None:
        cfg.workers = workers
    if seed is not None:
        cfg.seed = seed
    if out is not None:
        cfg.output_dir = out
    return cfg


def _run(stage: str, cfg: PipelineConfig) -> None:
    try:
        produced = run_stage(stage, cfg)
    except ConfigError as exc:
        for err in exc.errors:
            click.echo(f"config error: {err}", err=True)
        sys.exit(2)
    except MissingArtifactError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(3)
    for path in produced:
        click.echo(f"wrote {path}")


_shared = [
    click.option("--config", "config_path", required=True, type=click.Path(exists=True),
                 help="YAML pipeline configuration."),
    click.option("--workers", type=int, default=None, help="Worker threads (0 = all)."),
    click.option("--seed", type=int, default=None, help="Master seed override."),
    click.option("--out", type=click.Path(), default=None, help="Output directory override."),
]


def shared_options(fn):
    for opt in reversed(_shared):
        fn = opt(fn)
    return fn


@click.group()
def main() -> None:
    """Conflict-state sequence analysis pipeline.

    Stages read their inputs from the previous stage's artifacts in the
    output directory and write a manifest beside every artifact, so a single
    config file and seed reproduce a full run.
    """


def _make_stage_command(stage: str, help_text: str):
    @main.command(name=stage, help=help_text)
    @shared_options
    def _cmd(config_path, workers, seed, out, _stage=stage):
        cfg = _load(config_path, workers, seed, out)
        _run(_stage, cfg)

    return _cmd


_HELP = {
    "synth": "Generate a synthetic event set (plus ground truth) from the scenario config.",
    "ingest": "Parse, filter, and grid-bin the input event CSV; write rejects report.",
    "classify": "Classify every cell-year into the five conflict states.",
    "sequences": "Extract per-cell sequences; estimate transition rates and substitution costs.",
    "distances": "Compute all pairwise optimal-matching distances (parallel).",
    "cluster": "Ward-cluster the distance matrix and cut into k trajectory types.",
    "stats": "Per-cluster transition matrices and the trajectory summary table.",
    "joins": "Multitype join-count z-scores (analytic + permutation reference).",
    "report": "Bundle summary tables, matrices, z-scores, and the trajectory map.",
}

for _stage in STAGES:
    _make_stage_command(_stage, _HELP[_stage])


@main.command(name="run", help="Run every stage in order (ingest or synth first).")
@shared_options
@click.option("--synthetic", is_flag=True, help="Start from the scenario instead of an input CSV.")
def run_command(config_path, workers, seed, out, synthetic):
    cfg = _load(config_path, workers, seed, out)
    try:
        produced = run_all(cfg, from_synthetic=synthetic)
    except ConfigError as exc:
        for err in exc.errors:
            click.echo(f"config error: {err}", err=True)
        sys.exit(2)
    except MissingArtifactError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(3)
    for path in produced:
        click.echo(f"wrote {path}")


if __name__ == "__main__":
    main()
