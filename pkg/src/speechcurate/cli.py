"""Command-line entry points.

Exit codes: 0 success, 1 config error, 2 stage failure, 3 partial
(rejected records present).
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from . import curation
from .config import STAGE_ORDER, PipelineConfig
from .manifest import SubsetSpec, read_manifest, write_manifest
from .pipeline import (
    EXIT_CONFIG_ERROR,
    EXIT_STAGE_FAILURE,
    ConfigError,
    StageError,
    run_pipeline,
)


@click.group()
def main():
    """Deterministic speech-corpus curation pipeline."""


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--stages", "stages_csv", default=None,
              help=f"Comma-separated subset of: {','.join(STAGE_ORDER)}")
@click.option("--seed", type=int, default=None, help="Override the global RNG seed.")
@click.option("--workers", type=int, default=None, help="Override the worker count.")
def run(config_path, stages_csv, seed, workers):
    """Run the pipeline stages described by a YAML config."""
    try:
        config = PipelineConfig.from_yaml(config_path)
    except (ValueError, TypeError) as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_CONFIG_ERROR)
    if stages_csv is not None:
        config.stages = [s.strip() for s in stages_csv.split(",") if s.strip()]
    if seed is not None:
        config.seed = seed
    if workers is not None:
        config.workers = workers
    try:
        result = run_pipeline(config)
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_CONFIG_ERROR)
    except StageError as exc:
        click.echo(f"stage failure: {exc}", err=True)
        sys.exit(EXIT_STAGE_FAILURE)
    if result.final_manifest is not None:
        click.echo(f"final manifest: {result.final_manifest}")
    sys.exit(result.exit_code)


@main.command()
@click.option("--manifest", "manifest_path", required=True, type=click.Path(exists=True))
@click.option("--json", "as_json", is_flag=True, help="Emit the report as JSON.")
@click.option("--csv", "csv_path", default=None, type=click.Path(),
              help="Also write histogram bins as CSV.")
def stats(manifest_path, as_json, csv_path):
    """Corpus statistics and histograms for a manifest."""
    records = read_manifest(manifest_path)
    report = curation.corpus_stats(records)
    if csv_path:
        report.write_csv(csv_path)
    if as_json:
        click.echo(json.dumps(report.to_json_dict(), indent=2, sort_keys=True))
    else:
        click.echo(report.render_table())


@main.command()
@click.option("--manifest", "manifest_path", required=True, type=click.Path(exists=True))
@click.option("--spec", "spec_path", required=True, type=click.Path(exists=True),
              help="JSON file with subset thresholds.")
@click.option("--out", "out_path", required=True, type=click.Path())
def subset(manifest_path, spec_path, out_path):
    """Filter a manifest through a SubsetSpec gate file."""
    records = read_manifest(manifest_path)
    spec = SubsetSpec.from_json_dict(json.loads(Path(spec_path).read_text()))
    try:
        kept = curation.build_subset(records, spec)
    except curation.CurationError as exc:
        click.echo(f"stage failure: {exc}", err=True)
        sys.exit(EXIT_STAGE_FAILURE)
    write_manifest(kept, out_path)
    click.echo(f"kept {len(kept)} of {len(records)} records")


@main.command()
@click.option("--manifest", "manifest_path", required=True, type=click.Path(exists=True))
@click.option("--seed", type=int, default=0)
@click.option("--out", "out_path", required=True, type=click.Path(),
              help="JSON file receiving the split plans.")
def splits(manifest_path, seed, out_path):
    """Sample seen-speaker dev/test split plans from a manifest."""
    records = read_manifest(manifest_path)
    try:
        plans = curation.sample_eval_splits(records, rng_seed=seed)
    except curation.CurationError as exc:
        click.echo(f"stage failure: {exc}", err=True)
        sys.exit(EXIT_STAGE_FAILURE)
    payload = {name: list(plan.utterance_ids) for name, plan in plans.items()}
    Path(out_path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    for name in sorted(payload):
        click.echo(f"{name}: {len(payload[name])} utterances")


if __name__ == "__main__":
    main()
