"""Run artifacts: CSV reports, image snapshots, config echoes.

Every reconstruction run gets its own directory with a fixed set of
files so downstream plotting never has to guess:

* ``config.toml``    the exact parameter set, replayable as-is
* ``metrics.csv``    iteration-indexed error traces
* ``trace.csv``      per-visit position updates (written when tracked)
* ``positions.csv``  per-position initial / final / true coordinates
* ``amplitude.pfm``  object amplitude, float image
* ``phase.pgm``      object phase, [-pi, pi] mapped to [0, 65535]

CSV is RFC 4180 via the stdlib writer.  The image formats are netpbm
(PFM for floats, 16-bit PGM for phase) because they are trivially
parseable without an imaging stack.
"""

from __future__ import annotations

import csv
import struct
from pathlib import Path

import numpy as np

from ptychopos.config import dump_toml

__all__ = [
    "phase_to_gray16",
    "write_pfm",
    "read_pfm",
    "write_pgm16",
    "write_metrics_csv",
    "write_trace_csv",
    "write_positions_csv",
    "write_aggregate_csv",
    "write_run_report",
    "read_metrics_csv",
]

TRACE_HEADER = ("iteration", "j", "X_est", "Y_est", "dX", "dY",
                "residual_norm", "condition_ok")


def phase_to_gray16(phase):
    """Map phase values in [-pi, pi] onto the full uint16 range."""
    p = np.asarray(phase, dtype=float)
    scaled = (p + np.pi) / (2 * np.pi) * 65535.0
    return np.clip(np.rint(scaled), 0, 65535).astype(np.uint16)


def write_pfm(path, image):
    """Write a 2-D float array as a grayscale PFM (little-endian)."""
    img = np.asarray(image, dtype=np.float32)
    if img.ndim != 2:
        raise ValueError("PFM writer takes a 2-D array")
    with open(path, "wb") as f:
        f.write(b"Pf\n")
        f.write(f"{img.shape[1]} {img.shape[0]}\n".encode())
        f.write(b"-1.0\n")  # negative scale marks little-endian
        # PFM stores rows bottom to top
        f.write(np.ascontiguousarray(img[::-1]).tobytes())


def read_pfm(path):
    """Read back a grayscale PFM written by :func:`write_pfm`."""
    with open(path, "rb") as f:
        if f.readline().strip() != b"Pf":
            raise ValueError(f"{path}: not a grayscale PFM")
        width, height = map(int, f.readline().split())
        scale = float(f.readline())
        data = f.read(width * height * 4)
    endian = "<" if scale < 0 else ">"
    img = np.frombuffer(data, dtype=f"{endian}f4").reshape(height, width)
    return np.asarray(img[::-1], dtype=np.float32)


def write_pgm16(path, image):
    """Write a uint16 array as a binary PGM with maxval 65535."""
    img = np.asarray(image)
    if img.dtype != np.uint16 or img.ndim != 2:
        raise ValueError("16-bit PGM writer takes a 2-D uint16 array")
    with open(path, "wb") as f:
        f.write(f"P5\n{img.shape[1]} {img.shape[0]}\n65535\n".encode())
        # netpbm 2-byte samples are big-endian
        f.write(img.astype(">u2").tobytes())


def _csv_writer(f):
    return csv.writer(f, lineterminator="\r\n")


def write_metrics_csv(path, diffraction_trace, position_error_trace,
                      start_iteration=1):
    """Iteration-indexed error traces, one row per completed iteration."""
    if len(diffraction_trace) != len(position_error_trace):
        raise ValueError("trace lengths differ")
    with open(path, "w", newline="") as f:
        w = _csv_writer(f)
        w.writerow(("iteration", "mean_diffraction_error", "position_error"))
        for i, (de, pe) in enumerate(zip(diffraction_trace,
                                         position_error_trace)):
            w.writerow((start_iteration + i, repr(float(de)),
                        repr(float(pe))))


def write_trace_csv(path, trace_rows, *, with_feedback=False):
    """Per-visit position updates.

    Rows come straight from ``RunReport.trace_rows``.  The feedback
    column only exists for cross-correlation runs; the base columns are
    fixed so plotting scripts can rely on them.
    """
    header = TRACE_HEADER + (("feedback",) if with_feedback else ())
    with open(path, "w", newline="") as f:
        w = _csv_writer(f)
        w.writerow(header)
        for row in trace_rows:
            k, j, x, y, dx, dy, res, ok = row[:8]
            out = [k, j, repr(float(x)), repr(float(y)), repr(float(dx)),
                   repr(float(dy)), repr(float(res)), int(bool(ok))]
            if with_feedback:
                out.append(repr(float(row[8])))
            w.writerow(out)


def write_positions_csv(path, initial, final, true=None):
    """Per-position coordinates: where each scan point started and ended."""
    initial = np.asarray(initial, dtype=float)
    final = np.asarray(final, dtype=float)
    header = ["j", "X_initial", "Y_initial", "X_final", "Y_final"]
    if true is not None:
        true = np.asarray(true, dtype=float)
        header += ["X_true", "Y_true"]
    with open(path, "w", newline="") as f:
        w = _csv_writer(f)
        w.writerow(header)
        for j in range(initial.shape[0]):
            row = [j, repr(initial[j, 0]), repr(initial[j, 1]),
                   repr(final[j, 0]), repr(final[j, 1])]
            if true is not None:
                row += [repr(true[j, 0]), repr(true[j, 1])]
            w.writerow(row)


def write_aggregate_csv(path, header, rows):
    """Generic aggregate table (sweep results, comparisons)."""
    with open(path, "w", newline="") as f:
        w = _csv_writer(f)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, float) else v
                        for v in row])


def write_run_report(out_dir, *, report, state, dataset=None,
                     config_mapping=None, initial_positions=None):
    """Write the full artifact set for one run into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if config_mapping is not None:
        (out / "config.toml").write_text(dump_toml(config_mapping))
    write_metrics_csv(out / "metrics.csv",
                      report.diffraction_trace,
                      report.position_error_trace,
                      start_iteration=report.start_iteration)
    if report.trace_rows:
        write_trace_csv(out / "trace.csv", report.trace_rows,
                        with_feedback=report.schedule.corrector == "cc")
    initial = (initial_positions if initial_positions is not None
               else (dataset.plan.nominal if dataset is not None else None))
    if initial is not None:
        true = dataset.plan.true if dataset is not None else None
        write_positions_csv(out / "positions.csv", initial,
                            state.positions, true)
    write_pfm(out / "amplitude.pfm", np.abs(state.object_est))
    write_pgm16(out / "phase.pgm", phase_to_gray16(np.angle(state.object_est)))
    return out


def read_metrics_csv(path):
    """Read a metrics.csv back into float arrays.

    Returns ``(iterations, diffraction, position_error)``.  Raises
    ``ValueError`` on malformed content; callers that merge many runs
    turn that into a flagged row rather than dying.
    """
    iters, diff, pos = [], [], []
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or header[:3] != list(
                ("iteration", "mean_diffraction_error", "position_error")):
            raise ValueError(f"{path}: unexpected metrics header {header}")
        for row in reader:
            if len(row) < 3:
                raise ValueError(f"{path}: short row {row}")
            iters.append(int(row[0]))
            diff.append(float(row[1]))
            pos.append(float(row[2]))
    return (np.asarray(iters), np.asarray(diff), np.asarray(pos))
