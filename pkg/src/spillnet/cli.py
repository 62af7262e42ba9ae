"""Command line entry point: ``spillnet <command> --config run.yaml [overrides]``.

Exit codes: 0 success, 1 data or configuration error, 2 numerical failure.
"""

from __future__ import annotations

import logging
import sys
from pathlib import Path

import click
import yaml

from . import pipeline
from .calendar import CalendarGapError, DataValidationError
from .causality import InsufficientSampleError
from .filtering import FitFailedError, SelectionError
from .garch import NumericalOverflowError
from .probit import RankDeficiencyError, SamplerError
from .synthetic import WorldConfigError, default_world, gen_world, write_world

EXIT_OK, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2

DATA_ERRORS = (pipeline.ConfigError, DataValidationError, CalendarGapError, WorldConfigError,
               RankDeficiencyError, InsufficientSampleError, FileNotFoundError, yaml.YAMLError)
NUMERIC_ERRORS = (FitFailedError, SelectionError, SamplerError, NumericalOverflowError, ArithmeticError)


def _fail(exc: Exception) -> None:
    if isinstance(exc, DATA_ERRORS):
        code = EXIT_DATA
    elif isinstance(exc, NUMERIC_ERRORS):
        code = EXIT_NUMERIC
    else:
        raise exc
    click.echo(f"error: {type(exc).__name__}: {exc}", err=True)
    sys.exit(code)


def _load(config, **overrides) -> pipeline.RunConfig:
    if overrides.get("output") is not None:
        overrides["output"] = str(Path(overrides["output"]).resolve())
    return pipeline.RunConfig.from_file(config, overrides={k: v for k, v in overrides.items() if v is not None})


def common_options(fn):
    opts = [
        click.option("--config", "config", required=True, type=click.Path(dir_okay=False),
                     help="Run configuration (YAML)."),
        click.option("--output", type=click.Path(file_okay=False), help="Output directory."),
        click.option("--seed", type=int, help="Root random seed."),
        click.option("--workers", type=int, help="Worker processes."),
        click.option("--bandwidth", type=int, help="Hong kernel bandwidth M."),
        click.option("--base-level", "base_level", type=float, help="Level before the Bonferroni split."),
        click.option("--window-months", "window_months", type=int, help="Rolling window length."),
        click.option("--drift-months", "drift_months", type=int, help="Rolling window step."),
        click.option("--incoming/--outgoing", "incoming", default=None,
                     help="Harmonic centrality orientation."),
        click.option("--draws", type=int, help="Gibbs draws per window."),
        click.option("--burn-in", "burn_in", type=int, help="Discarded Gibbs draws."),
        click.option("--per-window/--global-fit", "per_window", default=None,
                     help="Refit filters per window or once on the full sample."),
    ]
    for opt in reversed(opts):
        fn = opt(fn)
    return fn


@click.group()
@click.option("-v", "--verbose", count=True, help="More logging.")
def main(verbose: int) -> None:
    """Spillover-network pipeline for non-synchronously traded markets."""
    level = logging.WARNING - 10 * min(verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def _stage_command(name: str):
    @common_options
    def cmd(config, **kw):
        try:
            cfg = _load(config, **kw)
            pipeline.run(cfg, [name])
        except Exception as exc:  # noqa: BLE001 - mapped to exit codes
            _fail(exc)
        click.echo(f"{name}: done ({cfg.output})")

    cmd.__doc__ = f"Run the {name} stage only."
    return main.command(name)(cmd)


for _name in pipeline.STAGES:
    _stage_command(_name)


@main.command("run")
@common_options
@click.option("--stages", help="Comma-separated subset of stages (default: from config).")
def run_cmd(config, stages, **kw):
    """Run the configured stages in dependency order and write a manifest."""
    try:
        cfg = _load(config, **kw)
        chosen = stages.split(",") if stages else None
        man = pipeline.run(cfg, chosen)
    except Exception as exc:  # noqa: BLE001
        _fail(exc)
    for s in man.stages:
        click.echo(f"{s['stage']:8s} {s['seconds']:8.2f}s  {s['outputs']} files")
    click.echo(f"config_hash {man.config_hash}")


@main.command("validate")
@common_options
def validate_cmd(config, **kw):
    """Check configuration, registry, prices and covariates for consistency."""
    try:
        cfg = _load(config, **kw)
        notes = pipeline.validate(cfg)
    except Exception as exc:  # noqa: BLE001
        _fail(exc)
    for n in notes:
        click.echo(n)
    click.echo("ok")


DEMO_CONFIG = {
    "paths": {"registry": "registry.yaml", "prices": "prices.csv", "covariates": "covariates.csv",
              "output": "out"},
    "windows": {"window_months": 12, "drift_months": 1},
    "hong": {"bandwidth": 5, "base_level": 0.01},
    "filter": {"per_window": False},
    # six markets span only six out-vertex values, so the out-vertex columns are kept few
    "probit": {"probit_covariates": ["const", "eq_vol", "log_mcap", "temporal_distance",
                                     "temporal_distance_us"]},
    "seed": 0,
}


@main.command("synth")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False), help="Target directory.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--coupling", type=float, default=0.32, show_default=True, help="Planted coupling b.")
@click.option("--first-year", type=int, default=2006, show_default=True)
@click.option("--last-year", type=int, default=2008, show_default=True)
def synth_cmd(out_dir, seed, coupling, first_year, last_year):
    """Write the bundled six-market synthetic world and a matching run config."""
    try:
        world = gen_world(default_world(seed, coupling, first_year, last_year))
        paths = write_world(world, out_dir)
        cfg_path = Path(out_dir) / "config.yaml"
        with open(cfg_path, "w") as fh:
            yaml.safe_dump(DEMO_CONFIG, fh, sort_keys=False)
    except Exception as exc:  # noqa: BLE001
        _fail(exc)
    for k, p in paths.items():
        click.echo(f"{k:10s} {p}")
    click.echo(f"{'config':10s} {cfg_path}")


if __name__ == "__main__":
    main()
