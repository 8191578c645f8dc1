"""Ptychography simulation and reconstruction with scan-position refinement.

The package simulates far-field ptychographic data with hidden scan
position errors and reconstructs object, probe, and positions with an
extended-PIE engine.  Two position correctors are provided: a
linearized least-squares solve on the measured intensity difference,
and a cross-correlation baseline that registers consecutive object
estimates.
"""

from ptychopos.fields import (
    Geometry,
    fft2,
    ifft2,
    fft_call_count,
    reset_fft_calls,
    fourier_shift,
    propagate,
    make_pinhole,
)

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

__version__ = "0.1.0"
