"""Command-line interface.

Five subcommands: ``simulate`` synthesizes a dataset, ``reconstruct``
runs the solver on one, ``sweep`` fans a config over an axis and a
seed block, ``compare`` pits the two position correctors against each
other on identical data, ``report`` merges finished run directories.

Exit codes: 0 success, 2 invalid input (bad config, unreadable file),
3 numeric failure (a checkpoint of the failing state is written).
Parallelism (``--workers``, default from ``PTYCHO_THREADS``) only ever
spans whole runs; a single reconstruction stays sequential so results
are reproducible run by run.
"""

from __future__ import annotations

import hashlib
import os
import sys
from dataclasses import replace
from pathlib import Path

import click
import numpy as np

import ptychopos.reports as reports
from ptychopos.config import (ConfigError, config_from_mapping,
                              dataset_from_config, dump_toml, load_config)
from ptychopos.containers import (FormatError, read_dataset, write_checkpoint,
                                  write_dataset)
from ptychopos.engine import (NumericFailure, Schedule, init_state,
                              run_reconstruction)
from ptychopos.metrics import mean_diffraction_error, position_error
from ptychopos.sweeps import (aggregate, beta_settings, compare_settings,
                              noise_settings, overlap_for_step,
                              overlap_settings, run_sweep)

_WORKERS_DEFAULT = int(os.environ.get("PTYCHO_THREADS", "1") or 1)


def _fail(message, code):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _load(config_path, seed=None):
    try:
        cfg = load_config(config_path)
    except (OSError, ConfigError) as exc:
        _fail(exc, 2)
    if seed is not None:
        cfg = replace(cfg, seed=int(seed),
                      mapping={**cfg.mapping, "seed": int(seed)})
    return cfg


@click.group()
def main():
    """Ptychographic simulation and position-corrected reconstruction."""


@main.command()
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--seed", type=int, default=None,
              help="Override the config seed.")
@click.option("--out", "out_path", default="dataset.ptyd",
              show_default=True, help="Output dataset file.")
def simulate(config_path, seed, out_path):
    """Synthesize a dataset from a config."""
    cfg = _load(config_path, seed)
    try:
        ds = dataset_from_config(cfg)
    except ValueError as exc:
        _fail(exc, 2)
    write_dataset(out_path, ds)
    overlap = overlap_for_step(cfg.step, cfg.probe_diameter)
    photons = "none" if ds.photons == 0 else f"{ds.photons:g}"
    click.echo(f"wrote {out_path}: J={ds.plan.nominal.shape[0]} positions, "
               f"overlap {overlap:.0f}%, photon budget {photons}")


@main.command()
@click.argument("dataset_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--config", "config_path", default=None,
              type=click.Path(exists=True, dir_okay=False),
              help="Config supplying the schedule block.")
@click.option("--corrector", type=click.Choice(["none", "lsq", "cc"]),
              default=None)
@click.option("--beta", type=float, default=None)
@click.option("--iterations", type=int, default=None)
@click.option("--position-start", type=int, default=None)
@click.option("--probe-start", type=int, default=None)
@click.option("--out", "out_dir", default="run", show_default=True,
              help="Run directory for reports and images.")
def reconstruct(dataset_path, config_path, corrector, beta, iterations,
                position_start, probe_start, out_dir):
    """Reconstruct a dataset; write reports, images, final state."""
    try:
        ds = read_dataset(dataset_path)
    except (OSError, FormatError) as exc:
        _fail(exc, 2)
    if config_path is not None:
        cfg = _load(config_path)
        schedule, mapping = cfg.schedule, cfg.mapping
    else:
        schedule = Schedule(corrector="lsq")
        mapping = {}
    overrides = {k: v for k, v in (("corrector", corrector), ("beta", beta),
                                   ("iterations", iterations),
                                   ("position_start", position_start),
                                   ("probe_start", probe_start))
                 if v is not None}
    try:
        schedule = replace(schedule, **overrides)
    except ValueError as exc:
        _fail(exc, 2)
    if overrides:
        mapping = {**mapping,
                   "schedule": {**mapping.get("schedule", {}), **overrides}}

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    state = init_state(ds)
    initial_positions = state.positions.copy()
    try:
        state, report = run_reconstruction(ds, schedule, state=state)
    except NumericFailure as exc:
        write_checkpoint(out / "checkpoint.ptyc",
                         object_est=exc.state.object_est,
                         probe_est=exc.state.probe_est,
                         positions=exc.state.positions,
                         iteration=exc.iteration)
        _fail(f"{exc}; state checkpointed to {out / 'checkpoint.ptyc'}", 3)

    if schedule.iterations == 0:
        # initial-state report: evaluate the untouched starting state
        diff0 = mean_diffraction_error(state.object_est, state.probe_est,
                                       state.positions, ds.intensities)
        pos0 = position_error(ds.plan.true, state.positions)
        report.diffraction_trace = np.array([diff0])
        report.position_error_trace = np.array([pos0])
        report.start_iteration = 0
    reports.write_run_report(out, report=report, state=state, dataset=ds,
                             config_mapping=mapping or None,
                             initial_positions=initial_positions)
    write_checkpoint(out / "final.ptyc", object_est=state.object_est,
                     probe_est=state.probe_est, positions=state.positions,
                     iteration=state.iteration)
    final_pos = report.position_error_trace[-1]
    final_diff = report.diffraction_trace[-1]
    click.echo(f"wrote {out}: {state.iteration} iterations, "
               f"position error {final_pos:.4g} px, "
               f"mean diffraction error {final_diff:.4g}")


def _write_sweep_outputs(out_dir, results, header_axis):
    rows, traces, failed = aggregate(results)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    reports.write_aggregate_csv(
        out / "aggregate.csv",
        (header_axis, "n_runs", "n_failed", "mean_final_error",
         "std_final_error"),
        rows)
    for label, (mean_tr, std_tr) in traces.items():
        slug = "".join(c if c.isalnum() else "_" for c in label)
        reports.write_aggregate_csv(
            out / f"trace_{slug}.csv",
            ("iteration", "mean_error", "std_error"),
            [(i + 1, float(m), float(s))
             for i, (m, s) in enumerate(zip(mean_tr, std_tr))])
    for res in failed:
        click.echo(f"failed: {res.label} seed={res.seed}: {res.message}",
                   err=True)
    click.echo(f"wrote {out / 'aggregate.csv'} "
               f"({len(results) - len(failed)}/{len(results)} runs ok)")
    if failed and len(failed) > 0.2 * len(results):
        _fail(f"{len(failed)}/{len(results)} runs failed", 1)


_AXES = {"noise": noise_settings, "overlap": overlap_settings,
         "beta": beta_settings}


@main.command()
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--axis", type=click.Choice(sorted(_AXES)), required=True)
@click.option("--seeds", type=int, default=10, show_default=True,
              help="Number of seeds (config seed, config seed + 1, ...).")
@click.option("--workers", type=int, default=_WORKERS_DEFAULT,
              help="Parallel runs (default from PTYCHO_THREADS).")
@click.option("--out", "out_dir", default="sweep", show_default=True)
def sweep(config_path, axis, seeds, workers, out_dir):
    """Fan a config over a sweep axis and a block of seeds."""
    cfg = _load(config_path)
    try:
        settings = _AXES[axis](cfg.mapping)
    except ConfigError as exc:
        _fail(exc, 2)
    seed_block = range(cfg.seed, cfg.seed + seeds)
    results = run_sweep(settings, seed_block, workers=workers,
                        progress=lambda r: click.echo(
                            f"  {r.label} seed={r.seed}: "
                            + ("failed" if r.failed
                               else f"{r.final_error:.4g} px")))
    _write_sweep_outputs(out_dir, results, "setting")


@main.command()
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--seeds", type=int, default=10, show_default=True)
@click.option("--workers", type=int, default=_WORKERS_DEFAULT)
@click.option("--out", "out_dir", default="compare", show_default=True)
def compare(config_path, seeds, workers, out_dir):
    """Linearized solve (beta=1) vs adaptive cross-correlation."""
    cfg = _load(config_path)
    settings = compare_settings(cfg.mapping)
    seed_block = range(cfg.seed, cfg.seed + seeds)
    results = run_sweep(settings, seed_block, workers=workers,
                        progress=lambda r: click.echo(
                            f"  {r.label} seed={r.seed}: "
                            + ("failed" if r.failed
                               else f"{r.final_error:.4g} px")))
    _write_sweep_outputs(out_dir, results, "corrector")


@main.command()
@click.argument("run_dirs", nargs=-1, required=True,
                type=click.Path(exists=True, file_okay=False))
@click.option("--out", "out_path", default="summary.csv", show_default=True)
def report(run_dirs, out_path):
    """Merge finished run directories into one summary table."""
    rows = []
    for run_dir in run_dirs:
        run = Path(run_dir)
        cfg_file = run / "config.toml"
        cfg_hash = (hashlib.sha256(cfg_file.read_bytes()).hexdigest()[:12]
                    if cfg_file.exists() else "-")
        metrics = run / "metrics.csv"
        if not metrics.exists():
            click.echo(f"warning: {run}: no metrics.csv, skipped", err=True)
            rows.append((cfg_hash, str(run), "missing", "", ""))
            continue
        try:
            iters, diff, pos = reports.read_metrics_csv(metrics)
        except ValueError as exc:
            click.echo(f"warning: {run}: {exc}", err=True)
            rows.append((cfg_hash, str(run), "corrupt", "", ""))
            continue
        rows.append((cfg_hash, str(run), str(int(iters[-1])),
                     repr(float(pos[-1])), repr(float(diff[-1]))))
    rows.sort(key=lambda r: (r[0], r[1]))
    header = ("config_hash", "run_dir", "iterations",
              "final_position_error", "final_diffraction_error")
    reports.write_aggregate_csv(out_path, header, rows)
    widths = [max(len(str(v)) for v in col)
              for col in zip(header, *rows)]
    click.echo("  ".join(h.ljust(w) for h, w in zip(header, widths)))
    for row in rows:
        click.echo("  ".join(str(v).ljust(w) for v, w in zip(row, widths)))


if __name__ == "__main__":
    main()
