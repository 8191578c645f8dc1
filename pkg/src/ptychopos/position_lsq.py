"""Scan-position refinement by a linearized least-squares intensity fit.

For one position ``R`` with far-field estimate ``psi`` and measured
intensity ``I_meas``, the measured-minus-estimated intensity difference
is modeled to first order in the position error:

    dI(u) ~= dI_dx(u) * DX + dI_dy(u) * DY

where the intensity derivatives come from one-sided one-pixel
differences of the exit wave,

    dpsi_dx = psi(R) - psi(R + 1_x),      dI_dx = 2 Re(dpsi_dx psi*),

and likewise for y.  The 2-unknown least-squares problem over all
detector pixels is solved through its normal equations (an explicit
2x2 inverse), and the position moves by ``-beta * (DX, DY)``.

Sign convention: the difference above is the negative of the forward
difference quotient, so for an estimate displaced by ``+e`` from the
truth the solve returns ``+e`` and the minus-sign update walks the
estimate back toward the truth.  Displacing a ground-truth state by
one pixel must recover ``DX = +1``; a test pins this.

Each call costs exactly two far-field transforms: the two shifted-patch
exit waves.  The sub-pixel probe for ``R + 1`` equals the one already
cached for ``R`` (the fractional remainder is unchanged by an integer
offset), so only the integer patch window moves.
"""

from __future__ import annotations

import numpy as np

from ptychopos.fields import fft2

__all__ = ["intensity_derivatives", "solve_normal_2x2", "correct_position"]


def intensity_derivatives(obj, probe_sh, base_col, base_row, psi_far):
    """Intensity derivatives ``(dI_dx, dI_dy)`` at one scan position.

    ``probe_sh`` must be the sub-pixel-shifted probe already used to
    form ``psi_far``; the two one-pixel-offset patches reuse it.
    """
    n = probe_sh.shape[0]
    h = n // 2
    rows = slice(base_row - h, base_row + h)
    cols = slice(base_col - h, base_col + h)
    rows1 = slice(base_row + 1 - h, base_row + 1 + h)
    cols1 = slice(base_col + 1 - h, base_col + 1 + h)

    psi_dx = psi_far - fft2(obj[rows, cols1] * probe_sh)
    psi_dy = psi_far - fft2(obj[rows1, cols] * probe_sh)
    conj_psi = psi_far.conj()
    di_dx = 2.0 * (psi_dx * conj_psi).real
    di_dy = 2.0 * (psi_dy * conj_psi).real
    return di_dx, di_dy


def solve_normal_2x2(a_x, a_y, rhs, det_rtol=1e-12):
    """Least squares for ``[a_x a_y] @ (dx, dy) = rhs`` via normal equations.

    Returns ``(dx, dy, ok)``.  ``ok`` is False when the 2x2 normal
    matrix is singular at the given relative tolerance (flat or
    feature-free data); the solution is then (0, 0).
    """
    sxx = float(np.dot(a_x, a_x))
    syy = float(np.dot(a_y, a_y))
    sxy = float(np.dot(a_x, a_y))
    bx = float(np.dot(a_x, rhs))
    by = float(np.dot(a_y, rhs))
    det = sxx * syy - sxy * sxy
    trace_half = 0.5 * (sxx + syy)
    if not det > det_rtol * trace_half * trace_half:
        return 0.0, 0.0, False
    return (syy * bx - sxy * by) / det, (sxx * by - sxy * bx) / det, True


def correct_position(obj, probe_sh, base_col, base_row, pos, psi_far, intensity, *,
                     beta, clamp, det_rtol=1e-12):
    """One linearized position update for position ``pos``.

    Parameters use pre-update object and probe, matching the update
    order of the solver loop.  Returns ``(new_x, new_y, diag)`` where
    ``diag`` carries the solved step, the post-fit residual norm, the
    conditioning flag, and whether the step hit the per-axis clamp.
    """
    di_dx, di_dy = intensity_derivatives(obj, probe_sh, base_col, base_row, psi_far)
    i_est = (psi_far * psi_far.conj()).real
    d_i = (intensity - i_est).ravel()
    a_x = di_dx.ravel()
    a_y = di_dy.ravel()
    dx, dy, ok = solve_normal_2x2(a_x, a_y, d_i, det_rtol)
    residual = float(np.linalg.norm(d_i - a_x * dx - a_y * dy))
    step_x = beta * dx
    step_y = beta * dy
    clamped = abs(step_x) > clamp or abs(step_y) > clamp
    if clamped:
        step_x = float(np.clip(step_x, -clamp, clamp))
        step_y = float(np.clip(step_y, -clamp, clamp))
    diag = {"dx": dx, "dy": dy, "residual": residual, "ok": ok, "clamped": clamped}
    return pos[0] - step_x, pos[1] - step_y, diag
