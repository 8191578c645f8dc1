"""Iterative ptychographic reconstruction with optional position refinement.

The solver is a standard alternating-projection loop: for each scan
position the exit wave is propagated to the detector, its modulus is
replaced by the measurement, and the back-propagated difference updates
the object patch and the probe.  Two position correctors can ride along:

* ``"lsq"`` solves a small linear system per visit built from intensity
  differences (see :mod:`ptychopos.position_lsq`),
* ``"cc"`` registers the object patch before and after the update and
  drags the position against the measured shift with an adaptive gain
  (see :mod:`ptychopos.position_cc`).

Either corrector only ever sees the estimated quantities; the true
positions are used solely for the error traces in the report.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import containers
from .fields import fft2, ifft2, fft_call_count, fourier_shift, make_pinhole
from .metrics import position_error
from .position_cc import adaptive_feedback, register_shift
from .position_lsq import correct_position as lsq_correct
from .simulate import split_position


class NumericFailure(RuntimeError):
    """Raised when the iteration produces non-finite values.

    Carries the in-progress state at failure time so a caller can
    checkpoint it for post-mortem before giving up.
    """

    def __init__(self, message, state, iteration):
        super().__init__(message)
        self.state = state
        self.iteration = iteration


@dataclass
class Schedule:
    """Knobs for one reconstruction run."""

    iterations: int = 300
    position_start: int = 15     # first iteration (1-based) that moves positions
    probe_start: int = 45        # first iteration that updates the probe
    alpha_object: float = 1.0
    alpha_probe: float = 1.0
    beta: float = 0.5            # step scale for the lsq corrector
    corrector: str = "none"      # "none" | "lsq" | "cc"
    visit_order: str = "raster"  # "raster" | "shuffle"
    step_clamp: float = 5.0      # per-visit position step limit, px
    cc_upsample: int = 100
    cc_feedback_init: float = 50.0
    cc_gain_up: float = 1.1
    cc_gain_down: float = 0.9
    cc_corr_high: float = 0.45
    cc_corr_low: float = -0.2
    cc_feedback_bounds: tuple = (0.1, 200.0)
    cc_window: int = 0           # registration window size, 0 = probe-sized
    track_trace: bool = True     # collect per-visit trace rows

    def __post_init__(self):
        if self.corrector not in ("none", "lsq", "cc"):
            raise ValueError(f"unknown corrector {self.corrector!r}")
        if self.visit_order not in ("raster", "shuffle"):
            raise ValueError(f"unknown visit order {self.visit_order!r}")
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")


@dataclass
class ReconState:
    """Mutable solver state; everything a resume needs."""

    object_est: np.ndarray
    probe_est: np.ndarray
    positions: np.ndarray
    iteration: int = 0
    cc_feedback: np.ndarray | None = None
    cc_last_shift: np.ndarray | None = None


@dataclass
class RunReport:
    """Per-run diagnostics.  Traces cover the iterations of this call."""

    schedule: Schedule
    start_iteration: int
    diffraction_trace: np.ndarray
    position_error_trace: np.ndarray
    wall_clock: float
    trace_rows: list = field(default_factory=list)
    correction_fft_counts: set = field(default_factory=set)
    step_clamp_events: int = 0
    frame_clamp_events: int = 0


def init_state(dataset, *, object_init="flat", probe_init="truth",
               positions_init="nominal", probe_guess_diameter=None):
    """Build a starting state for ``run_reconstruction``.

    ``probe_init="truth"`` copies the simulated probe (the usual setting
    here: the experiments probe position recovery, not blind probe
    retrieval from scratch).  ``"disk"`` starts from a hard-edged disk
    of ``probe_guess_diameter`` pixels instead.
    """
    canvas = dataset.canvas
    if object_init == "flat":
        obj = np.ones((canvas, canvas), dtype=complex)
    elif object_init == "truth":
        obj = dataset.object_truth.astype(complex).copy()
    else:
        raise ValueError(f"unknown object init {object_init!r}")

    n_det = dataset.geometry.n_side
    if probe_init == "truth":
        probe = dataset.probe.astype(complex).copy()
    elif probe_init == "disk":
        diameter = dataset.probe_diameter if probe_guess_diameter is None \
            else probe_guess_diameter
        probe = make_pinhole(n_det, diameter, supersample=4).astype(complex)
    else:
        raise ValueError(f"unknown probe init {probe_init!r}")
    if not np.any(np.abs(probe) > 0):
        raise ValueError("probe initialization has zero energy")

    if positions_init == "nominal":
        positions = dataset.plan.nominal.astype(float).copy()
    elif positions_init == "true":
        positions = dataset.plan.true.astype(float).copy()
    else:
        raise ValueError(f"unknown positions init {positions_init!r}")

    return ReconState(object_est=obj, probe_est=probe, positions=positions)


def save_state(path, state, *, extra=None):
    """Checkpoint a state to disk (PTYC container)."""
    extra_arrays = {}
    if state.cc_feedback is not None:
        extra_arrays["cc_feedback"] = state.cc_feedback
        extra_arrays["cc_last_shift"] = state.cc_last_shift
    containers.write_checkpoint(
        path,
        object_est=state.object_est,
        probe_est=state.probe_est,
        positions=state.positions,
        iteration=state.iteration,
        extra=extra,
        extra_arrays=extra_arrays or None,
    )


def load_state(path):
    """Restore a checkpointed state."""
    blob = containers.read_checkpoint(path)
    return ReconState(
        object_est=blob["object_est"],
        probe_est=blob["probe_est"],
        positions=blob["positions"],
        iteration=blob["iteration"],
        cc_feedback=blob.get("cc_feedback"),
        cc_last_shift=blob.get("cc_last_shift"),
    )


def _visit_order(schedule, seed, iteration, n_positions):
    if schedule.visit_order == "raster":
        return np.arange(n_positions)
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(2, iteration))
    return np.random.default_rng(ss).permutation(n_positions)


def run_reconstruction(dataset, schedule, *, state=None, seed=None):
    """Run (or continue) a reconstruction; returns ``(state, report)``.

    ``state.iteration`` counts completed iterations, so a resumed run
    with the same schedule and seed reproduces the uninterrupted run
    bit for bit: the visit shuffle is keyed on the absolute iteration
    number, not on how many iterations this call has done.
    """
    if state is None:
        state = init_state(dataset)
    if seed is None:
        seed = dataset.seed

    obj = state.object_est
    probe = state.probe_est
    positions = state.positions
    n_det = dataset.geometry.n_side
    h = n_det // 2
    canvas = dataset.canvas
    n_pos = dataset.n_positions
    lo = float(h + 1)
    hi = float(canvas - h - 2)

    if schedule.corrector == "cc":
        if state.cc_feedback is None:
            state.cc_feedback = np.full(n_pos, schedule.cc_feedback_init, dtype=float)
            state.cc_last_shift = np.full((n_pos, 2), np.nan, dtype=float)
        # Registering the full frame dilutes the drag signal with rim
        # pixels the update barely touches, so the window defaults to
        # the probe footprint.
        if schedule.cc_window > 0:
            w = schedule.cc_window
        else:
            w = int(np.ceil(dataset.probe_diameter))
            w += w % 2
        w = min(w, n_det)
        s0 = h - w // 2
        cc_win = slice(s0, s0 + w)

    sqrt_i = np.sqrt(dataset.intensities)
    true_pos = dataset.plan.true

    report = RunReport(
        schedule=schedule,
        start_iteration=state.iteration + 1,
        diffraction_trace=np.zeros(0),
        position_error_trace=np.zeros(0),
        wall_clock=0.0,
    )
    diff_trace = []
    pos_trace = []
    t0 = time.perf_counter()

    for k in range(state.iteration + 1, schedule.iterations + 1):
        err_acc = 0.0
        move = schedule.corrector != "none" and k >= schedule.position_start
        update_probe = k >= schedule.probe_start

        for j in _visit_order(schedule, seed, k, n_pos):
            x, y = positions[j]
            base_col, base_row, frac_x, frac_y = split_position((x, y))
            rows = slice(base_row - h, base_row + h)
            cols = slice(base_col - h, base_col + h)
            patch = obj[rows, cols]

            if frac_x == 0.0 and frac_y == 0.0:
                probe_sh = probe
            else:
                probe_sh = fourier_shift(probe, frac_x, frac_y)

            psi = patch * probe_sh
            psi_far = fft2(psi)
            mag = np.abs(psi_far)
            err_acc += float(np.sum((mag - sqrt_i[j]) ** 2))

            factor = np.zeros_like(mag)
            np.divide(sqrt_i[j], mag, out=factor, where=mag > 0)
            psi_new = ifft2(psi_far * factor)
            diff = psi_new - psi

            if move and schedule.corrector == "lsq":
                before = fft_call_count()
                new_x, new_y, diag = lsq_correct(
                    obj, probe_sh, base_col, base_row, (x, y),
                    psi_far, dataset.intensities[j],
                    beta=schedule.beta, clamp=schedule.step_clamp,
                )
                report.correction_fft_counts.add(fft_call_count() - before)
                if diag["clamped"]:
                    report.step_clamp_events += 1
            elif move and schedule.corrector == "cc":
                cc_before = patch[cc_win, cc_win].copy()

            # ePIE pair of updates; the probe sees the pre-update patch.
            patch_abs2 = (patch * patch.conj()).real
            probe_abs2 = (probe_sh * probe_sh.conj()).real
            if update_probe:
                d_probe = (schedule.alpha_probe / patch_abs2.max()) \
                    * patch.conj() * diff
            obj[rows, cols] += (schedule.alpha_object / probe_abs2.max()) \
                * probe_sh.conj() * diff
            if update_probe:
                if frac_x == 0.0 and frac_y == 0.0:
                    probe += d_probe
                else:
                    probe += fourier_shift(d_probe, -frac_x, -frac_y)

            if move and schedule.corrector == "cc":
                before = fft_call_count()
                dx, dy, peak = register_shift(
                    cc_before, obj[rows, cols][cc_win, cc_win],
                    upsample=schedule.cc_upsample,
                )
                report.correction_fft_counts.add(fft_call_count() - before)
                f = state.cc_feedback[j]
                prev = state.cc_last_shift[j]
                if np.all(np.isfinite(prev)):
                    f = adaptive_feedback(
                        f, tuple(prev), (dx, dy),
                        gain_up=schedule.cc_gain_up,
                        gain_down=schedule.cc_gain_down,
                        corr_high=schedule.cc_corr_high,
                        corr_low=schedule.cc_corr_low,
                        bounds=schedule.cc_feedback_bounds,
                    )
                step_x = f * dx
                step_y = f * dy
                over = max(abs(step_x), abs(step_y))
                if over > schedule.step_clamp:
                    scale = schedule.step_clamp / over
                    step_x *= scale
                    step_y *= scale
                    report.step_clamp_events += 1
                new_x = x - step_x
                new_y = y - step_y
                state.cc_feedback[j] = f
                state.cc_last_shift[j] = (dx, dy)
                diag = {"dx": dx, "dy": dy, "residual": 1.0 - peak,
                        "ok": True}

            if move:
                clamped_x = min(max(new_x, lo), hi)
                clamped_y = min(max(new_y, lo), hi)
                if clamped_x != new_x or clamped_y != new_y:
                    report.frame_clamp_events += 1
                positions[j] = (clamped_x, clamped_y)
                if schedule.track_trace:
                    fdbk = state.cc_feedback[j] if schedule.corrector == "cc" \
                        else np.nan
                    report.trace_rows.append((
                        k, int(j), clamped_x, clamped_y,
                        diag["dx"], diag["dy"], diag["residual"],
                        bool(diag["ok"]), fdbk,
                    ))

        if not np.isfinite(err_acc) or not np.all(np.isfinite(positions)):
            state.iteration = k - 1
            raise NumericFailure(
                f"non-finite values during iteration {k}", state, k)

        diff_trace.append(err_acc / n_pos)
        pos_trace.append(position_error(true_pos, positions))
        state.iteration = k

    report.diffraction_trace = np.asarray(diff_trace)
    report.position_error_trace = np.asarray(pos_trace)
    report.wall_clock = time.perf_counter() - t0
    return state, report
