"""Reconstruction quality metrics.

Two figures of merit are tracked per iteration:

* the mean diffraction error, a data-space residual comparing far-field
  moduli against the square root of the measured intensities,
* the position error, the joint dispersion of the per-position
  differences between true and estimated positions.  Using the
  dispersion (population standard deviation) instead of mean distance
  makes the figure blind to a rigid translation of the whole scan,
  which the data cannot determine anyway.
"""

from __future__ import annotations

import numpy as np

from ptychopos.simulate import exit_wave

__all__ = [
    "position_error",
    "per_position_distance",
    "diffraction_error",
    "mean_diffraction_error",
    "sweep_statistics",
]


def position_error(true_positions, est_positions):
    """Translation-blind position error.

    ``sqrt(var_x + var_y)`` of the per-position differences, with the
    population (ddof=0) variance taken over positions.
    """
    true_positions = np.asarray(true_positions, dtype=float)
    est_positions = np.asarray(est_positions, dtype=float)
    if true_positions.shape != est_positions.shape:
        raise ValueError("position sets differ in shape")
    if true_positions.shape[0] < 2:
        raise ValueError("dispersion over fewer than two positions is undefined")
    d = true_positions - est_positions
    return float(np.sqrt(np.var(d[:, 0]) + np.var(d[:, 1])))


def per_position_distance(true_positions, est_positions):
    """Euclidean distance per position, after removing the mean offset."""
    d = np.asarray(true_positions, dtype=float) - np.asarray(est_positions, dtype=float)
    d = d - d.mean(axis=0)
    return np.hypot(d[:, 0], d[:, 1])


def diffraction_error(psi_magnitude, measured_intensity):
    """Sum of squared modulus residuals for one position."""
    r = psi_magnitude - np.sqrt(measured_intensity)
    return float(np.sum(r * r))


def mean_diffraction_error(obj, probe, positions, intensities):
    """Mean over positions of :func:`diffraction_error` for a frozen state."""
    total = 0.0
    for j in range(intensities.shape[0]):
        psi = exit_wave(obj, probe, positions[j])
        total += diffraction_error(np.abs(psi), intensities[j])
    return total / intensities.shape[0]


def sweep_statistics(traces):
    """Pointwise mean and spread across repeated runs of one condition.

    ``traces`` is a sequence of equal-length 1-D arrays (one per run,
    e.g. the per-iteration error of each seed).  Returns ``(mean, std)``
    arrays of that length, with the population (ddof=0) standard
    deviation, matching the dispersion convention of
    :func:`position_error`.  Requires at least two runs; ragged input
    is a hard error because it signals runs from different schedules.
    """
    if len(traces) < 2:
        raise ValueError("need at least two runs to form sweep statistics")
    lengths = {len(t) for t in traces}
    if len(lengths) != 1:
        raise ValueError(f"traces have mixed lengths {sorted(lengths)}")
    stack = np.asarray(traces, dtype=float)
    return stack.mean(axis=0), stack.std(axis=0)
