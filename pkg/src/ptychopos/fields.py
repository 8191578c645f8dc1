"""Core field operations: centered FFTs, sub-pixel shifts, propagation.

Conventions used by every module in this package:

* arrays are indexed ``[row, col]`` and interpreted as ``[y, x]``;
  positions and shifts are passed as ``(x, y)`` pairs,
* the optical axis (zero frequency, grid origin) sits at index
  ``n // 2`` on each axis,
* :func:`fft2` and :func:`ifft2` are centered and unitary, so Parseval
  holds with no extra factor and a field and its far-field transform
  carry the same energy.

Every call to :func:`fft2` / :func:`ifft2` increments a module-level
counter.  Solver cost is accounted in far-field transforms per update
and tests assert on this counter, so any new grid-sized transform must
go through these two functions (or deliberately stay off the budget,
as :func:`fourier_shift` does).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

__all__ = [
    "Geometry",
    "fft2",
    "ifft2",
    "fft_call_count",
    "reset_fft_calls",
    "fourier_shift",
    "propagate",
    "make_pinhole",
]

_fft_calls = 0


def fft_call_count():
    """Number of fft2/ifft2 invocations since the last reset."""
    return _fft_calls


def reset_fft_calls():
    global _fft_calls
    _fft_calls = 0


def fft2(g):
    """Centered unitary 2-D FFT. The origin stays at ``n // 2``."""
    global _fft_calls
    _fft_calls += 1
    return np.fft.fftshift(np.fft.fft2(np.fft.ifftshift(g), norm="ortho"))


def ifft2(G):
    """Inverse of :func:`fft2`."""
    global _fft_calls
    _fft_calls += 1
    return np.fft.fftshift(np.fft.ifft2(np.fft.ifftshift(G), norm="ortho"))


@lru_cache(maxsize=16)
def _freq_axis(n):
    f = np.fft.fftfreq(n)
    f.flags.writeable = False
    return f


def fourier_shift(g, dx, dy):
    """Cyclically translate ``g`` by ``(dx, dy)`` pixels via a phase ramp.

    Positive ``dx`` moves content toward higher column index, positive
    ``dy`` toward higher row index; integer shifts reproduce ``np.roll``.
    The two internal transforms are an implementation detail of the
    translation and are kept off the far-field transform counter.
    """
    ny, nx = g.shape
    ramp = np.exp(-2j * np.pi * dy * _freq_axis(ny))[:, None] \
        * np.exp(-2j * np.pi * dx * _freq_axis(nx))[None, :]
    return np.fft.ifft2(np.fft.fft2(g) * ramp)


def propagate(field, lambda_z, pitch):
    """Fresnel transfer-function propagation over a hop with ``lambda * z = lambda_z``.

    Parameters
    ----------
    field : (n, n) complex array
        Input field sampled at ``pitch``.
    lambda_z : float
        Product of wavelength and propagation distance, mm^2.  Only the
        product enters the kernel; a negative value propagates backward.
    pitch : float
        Sample spacing in mm.  The output grid keeps the same pitch,
        which is why this propagator is used instead of a single-FFT
        Fresnel transform.
    """
    ny, nx = field.shape
    fy = np.fft.fftshift(np.fft.fftfreq(ny, d=pitch))
    fx = np.fft.fftshift(np.fft.fftfreq(nx, d=pitch))
    kernel = np.exp(-1j * np.pi * lambda_z * (fy[:, None] ** 2 + fx[None, :] ** 2))
    return ifft2(fft2(field) * kernel)


def make_pinhole(n_side, diameter, supersample=16):
    """Anti-aliased circular aperture of unit amplitude, centered at ``n // 2``.

    Each pixel value is the covered-area fraction estimated on a
    ``supersample x supersample`` sub-grid, so sub-pixel diameters such
    as 89.6 produce a graded rim instead of a jagged binary disk.
    """
    s = int(supersample)
    c = n_side // 2
    sub = (np.arange(s) + 0.5) / s - 0.5
    coord = (np.arange(n_side)[:, None] + sub[None, :] - c).ravel()
    r2 = coord[:, None] ** 2 + coord[None, :] ** 2
    inside = r2 <= (diameter / 2.0) ** 2
    return inside.reshape(n_side, s, n_side, s).mean(axis=(1, 3))


@dataclass(frozen=True)
class Geometry:
    """Far-field sampling geometry linking the detector and object grids.

    Attributes
    ----------
    wavelength : float
        Illumination wavelength, mm.
    distance : float
        Object-to-detector distance, mm.
    detector_pitch : float
        Detector pixel pitch, mm.
    n_side : int
        Detector (and probe frame) side length in pixels.
    """

    wavelength: float
    distance: float
    detector_pitch: float
    n_side: int

    def __post_init__(self):
        if min(self.wavelength, self.distance, self.detector_pitch) <= 0:
            raise ValueError("geometry lengths must be positive")
        if self.n_side <= 0 or self.n_side % 2:
            raise ValueError("n_side must be a positive even integer")

    @property
    def object_pitch(self):
        """Object-plane sample spacing, mm."""
        return self.wavelength * self.distance / (self.n_side * self.detector_pitch)
