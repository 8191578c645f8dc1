"""Seeded parameter sweeps and the two-corrector comparison.

A sweep fans one base config out over an axis (photon budget, overlap
x initial-error, beta) and a block of seeds, runs each combination as
an independent experiment, and aggregates final position errors into
mean/std tables.  Parallelism is across runs only; each run itself is
single-threaded so a sweep executed with any worker count produces
identical numbers.

Failures of individual runs are recorded and skipped, not fatal: a
sweep that loses a run to a numeric blow-up still reports the rest.
Callers decide how many losses are tolerable (the CLI refuses to exit
cleanly above 20%).
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from ptychopos.config import config_from_mapping, dataset_from_config
from ptychopos.engine import NumericFailure, run_reconstruction
from ptychopos.metrics import sweep_statistics

__all__ = [
    "RunResult",
    "step_for_overlap",
    "overlap_for_step",
    "noise_settings",
    "overlap_settings",
    "beta_settings",
    "compare_settings",
    "run_sweep",
    "aggregate",
]


@dataclass
class RunResult:
    """Outcome of one seeded run inside a sweep."""

    label: str
    seed: int
    final_error: float
    error_trace: np.ndarray
    wall_clock: float
    failed: bool = False
    message: str = ""


def step_for_overlap(overlap_pct, probe_diameter):
    """Scan step giving a requested linear overlap between neighbors."""
    if not 0 <= overlap_pct < 100:
        raise ValueError("overlap must lie in [0, 100)")
    return (1.0 - overlap_pct / 100.0) * probe_diameter


def overlap_for_step(step, probe_diameter):
    """Inverse of :func:`step_for_overlap`, as a percentage."""
    return (1.0 - step / probe_diameter) * 100.0


def _override(mapping, block, key, value):
    out = {k: (dict(v) if isinstance(v, dict) else v)
           for k, v in mapping.items()}
    out.setdefault(block, {})[key] = value
    return out


def noise_settings(mapping, budgets=(1e4, 1e5, 1e6, 1e7, 1e8)):
    """One setting per photon budget."""
    return [(f"photons={b:g}", _override(mapping, "noise", "photons",
                                         float(b)))
            for b in budgets]


def overlap_settings(mapping, overlaps=(55, 65, 75, 85),
                     max_offsets=(0, 5, 10, 15, 20, 25, 30)):
    """Grid of overlap percentage x maximum initial position error."""
    cfg = config_from_mapping(mapping)
    settings = []
    for ov in overlaps:
        step = step_for_overlap(ov, cfg.probe_diameter)
        for off in max_offsets:
            m = _override(mapping, "scan", "step", step)
            m = _override(m, "scan", "max_offset", float(off))
            settings.append((f"overlap={ov} max_offset={off}", m))
    return settings


def beta_settings(mapping, betas=(0.25, 0.5, 1.0, 2.0)):
    """One setting per position-update step scale."""
    return [(f"beta={b:g}", _override(mapping, "schedule", "beta", float(b)))
            for b in betas]


def compare_settings(mapping):
    """The two-corrector comparison: linearized solve at full step
    against adaptive cross-correlation, on identical datasets."""
    lsq = _override(mapping, "schedule", "corrector", "lsq")
    lsq = _override(lsq, "schedule", "beta", 1.0)
    cc = _override(mapping, "schedule", "corrector", "cc")
    return [("lsq", lsq), ("cc", cc)]


def _run_one(task):
    """Worker body: one (label, mapping, seed) experiment."""
    label, mapping, seed = task
    try:
        cfg = config_from_mapping(mapping)
        ds = dataset_from_config(cfg, seed=seed)
        sched = replace(cfg.schedule, track_trace=False)
        _, rep = run_reconstruction(ds, sched)
        return RunResult(label, seed, float(rep.position_error_trace[-1]),
                         rep.position_error_trace, rep.wall_clock)
    except (NumericFailure, FloatingPointError, ValueError) as exc:
        return RunResult(label, seed, math.nan, np.empty(0), 0.0,
                         failed=True, message=f"{type(exc).__name__}: {exc}")


def run_sweep(settings, seeds, *, workers=1, progress=None):
    """Run every (setting, seed) combination; returns RunResults.

    ``settings`` is a list of (label, config mapping) pairs, ``seeds``
    an iterable of dataset seeds.  Results come back sorted by setting
    order then seed, independent of scheduling.
    """
    tasks = [(label, mapping, int(seed))
             for label, mapping in settings for seed in seeds]
    results = {}
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for res in pool.map(_run_one, tasks):
                results[(res.label, res.seed)] = res
                if progress:
                    progress(res)
    else:
        for task in tasks:
            res = _run_one(task)
            results[(res.label, res.seed)] = res
            if progress:
                progress(res)
    order = {label: i for i, (label, _) in enumerate(settings)}
    return sorted(results.values(),
                  key=lambda r: (order[r.label], r.seed))


def aggregate(results):
    """Collapse RunResults into per-setting statistics.

    Returns ``(rows, traces, failed)``: summary rows
    ``(label, n, n_failed, mean, std)`` over final errors, a
    ``label -> (mean trace, std trace)`` dict where at least two runs
    finished, and the list of failed results.
    """
    by_label = {}
    for res in results:
        by_label.setdefault(res.label, []).append(res)
    rows, traces, failed = [], {}, []
    for label, group in by_label.items():
        good = [r for r in group if not r.failed]
        failed += [r for r in group if r.failed]
        finals = np.array([r.final_error for r in good])
        if finals.size:
            rows.append((label, len(group), len(group) - len(good),
                         float(finals.mean()), float(finals.std())))
        else:
            rows.append((label, len(group), len(group), math.nan, math.nan))
        if len(good) >= 2:
            traces[label] = sweep_statistics([r.error_trace for r in good])
    return rows, traces, failed
