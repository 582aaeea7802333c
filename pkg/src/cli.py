"""
Command-line surface
---------
`python -m src <command>`; every command takes --help and --version.

- `synth`      : write a synthetic dataset container
- `train`      : train on a dataset, write checkpoint, history and a validation report
- `eval`       : evaluate a checkpoint on a dataset split
- `ablate`     : train/evaluate ablation variants, print the OA / Kappa table
- `complexity` : analytic params / MACs / FLOPs per module
- `map`        : classify a scene grid and write a PPM raster plus legend

Exit codes: 0 ok, 2 configuration, 3 I/O, 4 numerical failure.
"""
import functools
import json
import sys
from pathlib import Path
from typing import Dict, Optional, Tuple

import click
import yaml
from pydantic import BaseModel, ValidationError

from . import __version__
from .ablation import ablate, format_ablation_table
from .checkpoint import load_checkpoint, save_checkpoint
from .complexity import count_complexity
from .config import load_run_config
from .data_persistence.database import make_session_factory
from .dataset_io import Dataset, read_dataset, split, write_dataset
from .db_setup import setup_db
from .errors import ConfigurationError, GdsMambaError
from .log_config import LOG_LEVELS, LOGGER, set_level
from .metrics import format_report
from .raster import PALETTES, colourize, palette_for, write_legend, write_ppm
from .schemas import VARIANTS, DatasetManifest, RunConfig, canonical_variant
from .synth import generate_grid, generate_synthetic
from .training import evaluate, fit_dataset, predict

SPLITS = ("train", "val", "test", "all")


def handle_errors(func):
    """Print package errors on stderr and exit with their mapped code"""

    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except GdsMambaError as error:
            LOGGER.error("%s failed: %s", func.__name__, error)
            click.echo(f"Error: {error}", err=True)
            sys.exit(error.exit_code)
        except ValidationError as validation_error:
            LOGGER.error("%s failed: %s", func.__name__, validation_error)
            click.echo(f"Error: {validation_error}", err=True)
            sys.exit(ConfigurationError.exit_code)
        except FileNotFoundError as missing:
            LOGGER.error("%s failed: %s", func.__name__, missing)
            click.echo(f"Error: {missing}", err=True)
            sys.exit(3)

    return wrapper


def version_option(func):
    return click.version_option(__version__, "--version", prog_name="gds-mamba")(func)


def set_option(func):
    return click.option(
        "--set",
        "overrides",
        multiple=True,
        metavar="KEY=VALUE",
        help="Config override such as model.C=16; repeatable, last wins.",
    )(func)


def _run_config(ctx: click.Context, config_path: Optional[str], overrides: Tuple[str, ...]) -> RunConfig:
    run_config = load_run_config(config_path, overrides)
    threads = ctx.obj.get("threads") if ctx.obj else None
    if threads is not None:
        run_config = RunConfig(**{**run_config.dict(), "threads": threads})
    return run_config


def _first_dataset(run_config: RunConfig) -> str:
    paths = run_config.data.dataset_paths()
    if not paths:
        raise ConfigurationError("No dataset configured; set data.dataset.")
    return paths[0]


def _write_yaml(report: BaseModel, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(yaml.safe_dump(json.loads(report.json()), sort_keys=False), encoding="utf-8")


@click.group()
@version_option
@click.option("--threads", type=int, default=None, help="Evaluation worker threads (default 1).")
@click.option("--log-level", type=click.Choice(LOG_LEVELS, case_sensitive=False), default="INFO")
@click.pass_context
def cli(ctx: click.Context, threads: Optional[int], log_level: str):
    """GDS-Mamba: graph-regulated disentangled sparse Mamba for image time series."""
    ctx.ensure_object(dict)
    ctx.obj["threads"] = threads
    set_level(log_level)


@cli.command("synth")
@version_option
@click.option("--classes", type=int, default=4, show_default=True)
@click.option("--samples", type=int, default=4500, show_default=True)
@click.option("--subtlety", type=float, default=0.8, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--size", type=int, default=13, show_default=True, help="Odd patch side.")
@click.option("--steps", type=int, default=23, show_default=True)
@click.option("--noise", type=float, default=0.02, show_default=True)
@click.option("--train-n", type=int, default=None, help="Recommended train split size.")
@click.option("--val-n", type=int, default=None, help="Recommended validation split size.")
@click.option("--grid", "grid", type=(int, int), default=None, help="ROWS COLS: write a scene grid instead.")
@click.option("--out", type=click.Path(file_okay=False), required=True)
@handle_errors
def cmd_synth(classes, samples, subtlety, seed, size, steps, noise, train_n, val_n, grid, out):
    """Generate a synthetic MODIS-like dataset container."""
    if grid is None:
        dataset = generate_synthetic(classes, samples, subtlety, seed, size, steps, noise)
    else:
        dataset = generate_grid(classes, grid[0], grid[1], subtlety, seed, size, steps, noise)
    if train_n is not None or val_n is not None:
        manifest = DatasetManifest(**{**dataset.manifest.dict(), "train_n": train_n, "val_n": val_n})
        dataset = Dataset(dataset.cubes, dataset.labels, manifest, dataset.grid_labels)
    write_dataset(dataset, out)
    manifest = dataset.manifest
    click.echo(f"Wrote {manifest.n_samples} samples to {out}")
    click.echo(f"  cube     : {manifest.H}x{manifest.W}x{manifest.T}x{manifest.C0}")
    click.echo(f"  classes  : {manifest.K} ({', '.join(manifest.class_names)})")
    click.echo(f"  bands    : {', '.join(manifest.band_names)}")
    click.echo(f"  seed     : {manifest.seed}, subtlety {manifest.subtlety}")
    if manifest.grid is not None:
        click.echo(f"  grid     : {manifest.grid[0]}x{manifest.grid[1]}")


@cli.command("train")
@version_option
@click.argument("config_path", required=False, type=click.Path(dir_okay=False))
@set_option
@click.option("--out", type=click.Path(file_okay=False), default=None, help="Defaults to <output_dir>/train.")
@click.pass_context
@handle_errors
def cmd_train(ctx, config_path, overrides, out):
    """Train on data.dataset; write checkpoint/, history.jsonl and val_report.yaml."""
    run_config = _run_config(ctx, config_path, overrides)
    dataset_path = _first_dataset(run_config)
    dataset = read_dataset(dataset_path)
    out = Path(out or Path(run_config.output_dir) / "train")
    out.mkdir(parents=True, exist_ok=True)

    model, result, indices = fit_dataset(run_config, dataset, "full", out / "history.jsonl")
    data = run_config.data
    save_checkpoint(
        model,
        out / "checkpoint",
        dataset.class_names,
        seed=run_config.model.seed,
        dataset=str(dataset_path),
        split={"train_n": data.train_n, "val_n": data.val_n, "seed": data.seed},
        best_epoch=result.best_epoch,
    )
    report = evaluate(
        model, dataset.cubes, dataset.labels, indices.val,
        run_config.train.batch_size, run_config.threads, dataset.class_names,
    )
    _write_yaml(report, out / "val_report.yaml")
    click.echo(f"Best epoch {result.best_epoch} of {len(result.history)}; validation report:")
    click.echo(format_report(report))


def _split_indices(dataset: Dataset, recipe: Optional[Dict[str, int]], name: str):
    if name == "all":
        return list(range(len(dataset)))
    if recipe is None:
        raise ConfigurationError("Checkpoint carries no split recipe; use --split all.")
    indices = split(dataset.labels, recipe["train_n"], recipe["val_n"], recipe.get("seed", 0))
    return indices.as_dict()[name]


@cli.command("eval")
@version_option
@click.argument("checkpoint", type=click.Path())
@click.argument("dataset_path", type=click.Path())
@click.option("--split", "split_name", type=click.Choice(SPLITS), default="test", show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), default=None, help="Write the report as YAML.")
@click.option("--batch-size", type=int, default=64, show_default=True)
@click.pass_context
@handle_errors
def cmd_eval(ctx, checkpoint, dataset_path, split_name, out, batch_size):
    """Evaluate a checkpoint: per-class accuracy, OA, AA, Kappa and confusion matrix."""
    model, manifest = load_checkpoint(checkpoint)
    dataset = read_dataset(dataset_path)
    if dataset.manifest.K != model.config.K:
        raise ConfigurationError(f"Dataset has K={dataset.manifest.K} classes, checkpoint expects {model.config.K}.")
    indices = _split_indices(dataset, manifest.split, split_name)
    report = evaluate(
        model, dataset.cubes, dataset.labels, indices, batch_size,
        (ctx.obj or {}).get("threads") or 1, manifest.class_names,
    )
    click.echo(format_report(report))
    if out is not None:
        _write_yaml(report, Path(out))


@cli.command("ablate")
@version_option
@click.argument("config_path", required=False, type=click.Path(dir_okay=False))
@set_option
@click.option("--variants", default=",".join(VARIANTS), show_default=True, help="Comma-separated variant names.")
@click.option("--db", "db_url", default=None, help="Registry URL; defaults to sqlite:///<output_dir>/runs.db.")
@click.pass_context
@handle_errors
def cmd_ablate(ctx, config_path, overrides, variants, db_url):
    """Train and evaluate ablation variants on every configured dataset."""
    run_config = _run_config(ctx, config_path, overrides)
    names = [canonical_variant(name) for name in variants.split(",") if name.strip()]
    if not names:
        raise ConfigurationError("No variants given.")
    paths = run_config.data.dataset_paths()
    if not paths:
        raise ConfigurationError("No dataset configured; set data.dataset.")
    datasets = {}
    for path in paths:
        label = Path(path).name or path
        datasets[label if label not in datasets else path] = read_dataset(path)

    if db_url is None:
        Path(run_config.output_dir).mkdir(parents=True, exist_ok=True)
        db_url = f"sqlite:///{Path(run_config.output_dir) / 'runs.db'}"
    session = make_session_factory(setup_db(db_url))()
    try:
        rows = ablate(run_config, names, datasets, session)
    finally:
        session.close()
    click.echo(format_ablation_table(rows))


@cli.command("complexity")
@version_option
@click.argument("config_path", required=False, type=click.Path(dir_okay=False))
@set_option
@click.option("--batch-size", type=int, default=None, help="Defaults to train.batch_size.")
@click.pass_context
@handle_errors
def cmd_complexity(ctx, config_path, overrides, batch_size):
    """Per-module and total params / MACs / FLOPs for one batch element."""
    run_config = _run_config(ctx, config_path, overrides)
    report = count_complexity(run_config.model, batch_size or run_config.train.batch_size)
    click.echo(f"{'Module':<10}  {'Params':>12}  {'MACs':>14}  {'FLOPs':>14}")
    for row in report.rows + [report.total]:
        click.echo(f"{row.module:<10}  {row.params:>12d}  {row.macs:>14d}  {row.flops:>14d}")
    click.echo(
        f"Total: {report.total.params / 1e6:.2f}M params, "
        f"{report.total.macs / 1e6:.2f}M MACs, {report.total.flops / 1e6:.2f}M FLOPs"
    )


@cli.command("map")
@version_option
@click.argument("checkpoint", type=click.Path())
@click.argument("dataset_path", type=click.Path())
@click.option("--out", type=click.Path(dir_okay=False), required=True, help="PPM raster path.")
@click.option("--palette", type=click.Choice(sorted(PALETTES)), default="table1", show_default=True)
@click.option("--batch-size", type=int, default=64, show_default=True)
@click.pass_context
@handle_errors
def cmd_map(ctx, checkpoint, dataset_path, out, palette, batch_size):
    """Classify every cell of a scene grid; write the raster and <out>.legend.txt."""
    model, manifest = load_checkpoint(checkpoint)
    dataset = read_dataset(dataset_path)
    if not dataset.is_grid:
        raise ConfigurationError(f"{dataset_path} is not a scene grid dataset.")
    rows, cols = dataset.grid_labels.shape
    predicted = predict(model, dataset.cubes, None, batch_size, (ctx.obj or {}).get("threads") or 1)
    class_map = predicted.reshape(rows, cols)
    colours = palette_for(manifest.class_names, palette)
    out = Path(out)
    write_ppm(colourize(class_map, colours), out)
    legend = write_legend(manifest.class_names, colours, out.with_suffix(".legend.txt"))
    agreement = float((class_map == dataset.grid_labels).mean()) * 100.0
    LOGGER.info("Map agreement with the grid labels: %.2f%%", agreement)
    click.echo(f"Wrote {rows}x{cols} map to {out} and legend to {legend} (agreement {agreement:.2f}%)")


def main():
    cli(obj={})
