"""Cross-correlation position baseline.

After the object update at a scan position, the update has dragged the
local object content toward where the data says it belongs.  The drag
direction is measured by registering the object patch before the
update against the patch after it, to sub-pixel precision, and the
position estimate moves against the drag, scaled by an adaptive
feedback factor.

Registration uses the standard two-stage scheme: a full cross
correlation locates the integer peak, then a matrix-multiply discrete
Fourier transform evaluates the correlation on a fine grid (spacing
``1/upsample``) in a small neighborhood of that peak.  One call costs
exactly three far-field transforms (two forward, one inverse); the
refinement stage is plain matrix multiplication, not an FFT.
"""

from __future__ import annotations

import numpy as np

from ptychopos.fields import fft2, ifft2

__all__ = ["register_shift", "adaptive_feedback", "correct_position"]


def _upsampled_peak(cross, d0x, d0y, upsample):
    """Refine the correlation peak near ``(d0x, d0y)`` on a 1/upsample grid."""
    ny, nx = cross.shape
    w = int(np.ceil(1.5 * upsample))
    win = (np.arange(w) - w // 2) / upsample
    fy = (np.arange(ny) - ny // 2) / ny
    fx = (np.arange(nx) - nx // 2) / nx
    wy = np.exp(2j * np.pi * np.outer(d0y + win, fy))
    wx = np.exp(2j * np.pi * np.outer(d0x + win, fx))
    grid = wy @ cross @ wx.T
    iy, ix = np.unravel_index(np.argmax(np.abs(grid)), grid.shape)
    return d0x + win[ix], d0y + win[iy], np.abs(grid[iy, ix])


def register_shift(before, after, upsample=100):
    """Sub-pixel translation taking ``before`` to ``after``.

    Returns ``(dx, dy, peak)`` where ``peak`` is the normalized
    correlation magnitude at the located optimum (1.0 for patches that
    are exact cyclic translations of each other).
    """
    fb = fft2(before)
    fa = fft2(after)
    cross = fa * fb.conj()
    cc = ifft2(cross)
    ny, nx = cc.shape
    iy, ix = np.unravel_index(np.argmax(np.abs(cc)), cc.shape)
    dx, dy, peak = _upsampled_peak(cross, ix - nx // 2, iy - ny // 2, upsample)
    denom = np.linalg.norm(before) * np.linalg.norm(after)
    return float(dx), float(dy), float(peak / denom) if denom else 0.0


def adaptive_feedback(feedback, prev_shift, new_shift, *, gain_up=1.1, gain_down=0.9,
                      corr_high=0.45, corr_low=-0.2, bounds=(0.1, 2.0)):
    """Update the feedback factor from two consecutive shift estimates.

    Consecutive drags pointing the same way mean the step is too timid,
    so the factor grows; opposing drags mean overshoot, so it shrinks.
    The comparison is the cosine similarity of the two shift vectors.
    """
    na = float(np.hypot(*prev_shift))
    nb = float(np.hypot(*new_shift))
    if na > 0 and nb > 0:
        c = (prev_shift[0] * new_shift[0] + prev_shift[1] * new_shift[1]) / (na * nb)
        if c > corr_high:
            feedback *= gain_up
        elif c < corr_low:
            feedback *= gain_down
    return float(np.clip(feedback, bounds[0], bounds[1]))


def correct_position(patch_before, patch_after, pos, feedback, *, upsample=100):
    """One cross-correlation position update.

    Returns ``(new_x, new_y, shift, peak)``; the caller owns the
    feedback bookkeeping and passes the factor to apply.  The estimate
    moves against the measured drag of the object content.
    """
    dx, dy, peak = register_shift(patch_before, patch_after, upsample)
    return pos[0] - feedback * dx, pos[1] - feedback * dy, (dx, dy), peak
