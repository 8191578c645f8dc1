"""Forward simulation: test scenes, scan plans, far-field diffraction data.

A dataset is a set of ``J`` far-field intensities recorded while a
probe visits a rectangular grid of scan positions.  The true positions
carry hidden random offsets from the nominal lattice; reconstruction
starts from the nominal lattice and has to recover the offsets.

Positions are continuous ``(x, y)`` pairs in object-plane pixels.
Placing a probe at position ``R`` means: extract the object patch at
``round(R)`` and translate the probe by the sub-pixel remainder with
:func:`ptychopos.fields.fourier_shift`.  The solver uses the identical
composition, which keeps estimated and measured intensities comparable
at the 1e-12 level for matching state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ptychopos import images
from ptychopos.fields import Geometry, fft2, fourier_shift, make_pinhole, propagate

__all__ = [
    "GeometryError",
    "ScanPlan",
    "PtychoDataset",
    "synth_texture",
    "load_image_source",
    "bilinear_resize",
    "make_test_object",
    "overlap_fraction",
    "step_for_overlap",
    "build_scan_grid",
    "split_position",
    "exit_wave",
    "forward_intensity",
    "auto_canvas",
    "simulate_dataset",
]


class GeometryError(ValueError):
    """Scan geometry and frame sizes are inconsistent."""


def _stretch(img):
    lo, hi = img.min(), img.max()
    return (img - lo) / (hi - lo)


def synth_texture(kind, n_side):
    """Deterministic procedural source image with values spanning [0, 1].

    ``"scene"`` mixes gradients, smooth speckle, and hard-edged shapes
    (including an exactly zero block, so a zero-amplitude region exists
    in the default test object).  ``"waves"`` is a smooth interference
    pattern.  Both are reproducible constants for a given size.
    """
    n = int(n_side)
    u = (np.arange(n) + 0.5) / n
    X, Y = np.meshgrid(u, u)
    if kind == "scene":
        rng = np.random.default_rng(94317)
        img = 0.45 + 0.30 * X - 0.20 * Y
        noise = rng.standard_normal((n, n))
        fy = np.fft.fftfreq(n)[:, None]
        fx = np.fft.fftfreq(n)[None, :]
        envelope = np.exp(-(fx ** 2 + fy ** 2) / (2 * 0.04 ** 2))
        speckle = np.fft.ifft2(np.fft.fft2(noise) * envelope).real
        img = img + 0.55 * _stretch(speckle)
        for cx, cy, r, level in ((0.3, 0.32, 0.16, 0.95), (0.68, 0.6, 0.11, 0.15),
                                 (0.55, 0.25, 0.07, 0.7)):
            img[(X - cx) ** 2 + (Y - cy) ** 2 < r ** 2] = level
        img[(X > 0.62) & (X < 0.9) & (Y > 0.78) & (Y < 0.92)] = 1.8
        # forced global minimum block, becomes an exact-zero region
        img[(X > 0.15) & (X < 0.45) & (Y > 0.62) & (Y < 0.78)] = -1.0
        return _stretch(img)
    if kind == "waves":
        r2 = (X - 0.5) ** 2 + (Y - 0.5) ** 2
        img = (np.sin(2 * np.pi * (3 * X + 5 * Y))
               + np.cos(2 * np.pi * (7 * X - 2 * Y))
               + np.sin(40.0 * r2 + 1.0))
        return _stretch(img)
    raise ValueError(f"unknown texture kind {kind!r}")


def bilinear_resize(img, n_out):
    """Resample a 2-D array to ``n_out x n_out`` with bilinear weights."""
    img = np.asarray(img, dtype=float)
    out_shape = (int(n_out), int(n_out))
    if img.shape == out_shape:
        return img.copy()
    coords = []
    for axis, n_dst in enumerate(out_shape):
        n_src = img.shape[axis]
        c = (np.arange(n_dst) + 0.5) * n_src / n_dst - 0.5
        coords.append(np.clip(c, 0.0, n_src - 1.0))
    y, x = coords
    y0 = np.floor(y).astype(int)
    x0 = np.floor(x).astype(int)
    y1 = np.minimum(y0 + 1, img.shape[0] - 1)
    x1 = np.minimum(x0 + 1, img.shape[1] - 1)
    wy = (y - y0)[:, None]
    wx = (x - x0)[None, :]
    return ((1 - wy) * (1 - wx) * img[np.ix_(y0, x0)]
            + (1 - wy) * wx * img[np.ix_(y0, x1)]
            + wy * (1 - wx) * img[np.ix_(y1, x0)]
            + wy * wx * img[np.ix_(y1, x1)])


def load_image_source(source, n_side):
    """Resolve an image source name to a float array in [0, 1].

    ``"builtin:<kind>"`` dispatches to :func:`synth_texture`; anything
    else is read as a binary PGM path and scaled by its maxval.
    """
    if source.startswith("builtin:"):
        return synth_texture(source.split(":", 1)[1], n_side)
    arr, maxval = images.read_pgm(source)
    return bilinear_resize(arr.astype(float) / maxval, n_side)


def make_test_object(n_side, amp_source="builtin:scene", phase_source="builtin:waves",
                     amp_range=(0.0, 1.0), phase_range=(-0.7 * np.pi, 0.7 * np.pi)):
    """Complex test object ``amp * exp(i * phase)`` from two source images.

    Source values are taken as already normalized to [0, 1] and mapped
    affinely onto the requested ranges; a constant-white amplitude
    source therefore produces amplitude ``amp_range[1]`` everywhere
    rather than being contrast-stretched.
    """
    va = load_image_source(amp_source, n_side)
    vp = load_image_source(phase_source, n_side)
    amp = amp_range[0] + va * (amp_range[1] - amp_range[0])
    phase = phase_range[0] + vp * (phase_range[1] - phase_range[0])
    return amp * np.exp(1j * phase)


def overlap_fraction(step, diameter):
    """Area overlap fraction of two equal disks spaced ``step`` apart."""
    if step <= 0:
        return 1.0
    t = step / diameter
    if t >= 1.0:
        return 0.0
    return (2.0 / np.pi) * (math.acos(t) - t * math.sqrt(1.0 - t * t))


def step_for_overlap(overlap, diameter):
    """Invert :func:`overlap_fraction` for a target fraction in (0, 1)."""
    if not 0.0 < overlap < 1.0:
        raise ValueError("overlap must be strictly between 0 and 1")
    lo, hi = 0.0, float(diameter)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if overlap_fraction(mid, diameter) > overlap:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass
class ScanPlan:
    """Nominal scan lattice plus the true (offset) positions.

    ``nominal`` is what a reconstruction starts from, ``true`` is what
    generated the data.  Both are ``(J, 2)`` arrays of ``(x, y)`` pairs.
    """

    nominal: np.ndarray
    true: np.ndarray
    grid_shape: tuple
    step: float
    max_offset: float
    seed: int

    @property
    def n_positions(self):
        return self.nominal.shape[0]


def build_scan_grid(grid_shape, step, center, max_offset, seed):
    """Rectangular raster grid with uniform hidden offsets per position.

    The lattice is centered on ``center``; true positions add offsets
    drawn uniformly from ``[-max_offset, +max_offset]`` on each axis,
    from a dedicated RNG substream of ``seed``.
    """
    nx, ny = int(grid_shape[0]), int(grid_shape[1])
    if nx < 1 or ny < 1 or step < 0:
        raise GeometryError("grid shape must be positive and step non-negative")
    off_x = (np.arange(nx) - (nx - 1) / 2.0) * step
    off_y = (np.arange(ny) - (ny - 1) / 2.0) * step
    xs = center[0] + np.tile(off_x, ny)
    ys = center[1] + np.repeat(off_y, nx)
    nominal = np.column_stack([xs, ys])
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(0,)))
    offsets = rng.uniform(-max_offset, max_offset, size=nominal.shape)
    return ScanPlan(nominal=nominal, true=nominal + offsets,
                    grid_shape=(nx, ny), step=float(step),
                    max_offset=float(max_offset), seed=int(seed))


def split_position(pos):
    """Split a continuous position into integer base and sub-pixel remainder.

    Returns ``(base_col, base_row, frac_x, frac_y)`` with half-integers
    rounding up, so the remainder always lies in [-0.5, 0.5).
    """
    x, y = float(pos[0]), float(pos[1])
    bc = int(math.floor(x + 0.5))
    br = int(math.floor(y + 0.5))
    return bc, br, x - bc, y - br


def _patch(obj, bc, br, n_det):
    h = n_det // 2
    patch = obj[br - h:br + h, bc - h:bc + h]
    if patch.shape != (n_det, n_det):
        raise GeometryError(
            f"probe frame at base ({bc}, {br}) leaves the {obj.shape[0]} px object frame")
    return patch


def exit_wave(obj, probe, pos):
    """Far-field exit wave for a probe centered at continuous ``pos``."""
    bc, br, fx, fy = split_position(pos)
    patch = _patch(obj, bc, br, probe.shape[0])
    p = probe if fx == 0.0 and fy == 0.0 else fourier_shift(probe, fx, fy)
    return fft2(patch * p)


def forward_intensity(obj, probe, pos):
    """Far-field intensity ``|exit_wave|^2`` at ``pos``."""
    psi = exit_wave(obj, probe, pos)
    return (psi * psi.conj()).real


def auto_canvas(grid_shape, step, n_det, max_offset, image_px):
    """Smallest even canvas holding every probe frame plus a drift guard.

    The guard is 8 px (4 per side) beyond the worst-case frame at
    maximum offset, leaving room for the +1 px frames used by the
    intensity-derivative solve and for moderate estimate drift.
    """
    span = step * (max(grid_shape) - 1)
    need = math.ceil(span + n_det + 2.0 * max_offset + 8.0)
    need += need % 2
    return max(int(image_px) + int(image_px) % 2, need)


def _check_plan(plan, canvas, n_det):
    h = n_det // 2
    lo, hi = h + 1, canvas - h - 2
    bad = []
    for name, pts in (("nominal", plan.nominal), ("true", plan.true)):
        base = np.floor(pts + 0.5)
        outside = np.nonzero((base < lo) | (base > hi))[0]
        bad += [f"{name} position {j} at ({pts[j, 0]:.2f}, {pts[j, 1]:.2f})"
                for j in np.unique(outside)]
    if bad:
        shown = "; ".join(bad[:6]) + ("; ..." if len(bad) > 6 else "")
        raise GeometryError(
            f"{len(bad)} probe frames ({n_det} px) do not fit the {canvas} px "
            f"object frame: {shown}")


@dataclass
class PtychoDataset:
    """Simulated measurement set plus the ground truth that produced it.

    ``intensities`` has shape ``(J, n, n)``; ``photons == 0`` marks
    noiseless data, otherwise entries are Poisson counts at that budget.
    """

    intensities: np.ndarray
    plan: ScanPlan
    geometry: Geometry
    probe: np.ndarray
    object_truth: np.ndarray
    probe_diameter: float
    lambda_z: float
    photons: float
    seed: int
    image_px: int

    @property
    def n_positions(self):
        return self.intensities.shape[0]

    @property
    def canvas(self):
        return self.object_truth.shape[0]


def simulate_dataset(geometry, *, image_px=224, amp_source="builtin:scene",
                     phase_source="builtin:waves", amp_range=(0.0, 1.0),
                     phase_range=(-0.7 * np.pi, 0.7 * np.pi), probe_diameter=89.6,
                     lambda_z=5e-4, grid_shape=(8, 8), step=19.2, max_offset=10.0,
                     photons=0.0, seed=0, canvas_px=None, supersample=16):
    """Generate a dataset: scene, probe, scan plan, diffraction intensities.

    Parameters
    ----------
    geometry : Geometry
        Far-field sampling geometry; its ``n_side`` fixes the probe and
        detector frame.
    image_px : int
        Side length of the test image, embedded centered in the canvas.
        The canvas itself is sized by :func:`auto_canvas` unless
        ``canvas_px`` forces it, and is padded with ``1 + 0j``.
    probe_diameter, lambda_z : float
        Pinhole diameter in object pixels and the wavelength-distance
        product (mm^2) of the pinhole-to-object hop forming the probe.
    photons : float
        Poisson budget: expected photon count of the average pattern;
        0 keeps the data noiseless.  A single global scale is applied,
        so the energy ratios between patterns are preserved.
    seed : int
        Master seed; position offsets and each pattern's noise use
        dedicated substreams, so patterns can be regenerated per
        position independently.
    """
    n_det = geometry.n_side
    canvas = int(canvas_px) if canvas_px else auto_canvas(
        grid_shape, step, n_det, max_offset, image_px)
    if image_px > canvas:
        raise GeometryError(f"image ({image_px} px) exceeds the canvas ({canvas} px)")

    obj = np.ones((canvas, canvas), dtype=complex)
    img = make_test_object(image_px, amp_source, phase_source, amp_range, phase_range)
    o0 = (canvas - image_px) // 2
    obj[o0:o0 + image_px, o0:o0 + image_px] = img

    hole = make_pinhole(n_det, probe_diameter, supersample).astype(complex)
    probe = propagate(hole, lambda_z, geometry.object_pitch)

    c = canvas / 2.0
    plan = build_scan_grid(grid_shape, step, (c, c), max_offset, seed)
    _check_plan(plan, canvas, n_det)

    intensities = np.empty((plan.n_positions, n_det, n_det))
    for j in range(plan.n_positions):
        intensities[j] = forward_intensity(obj, probe, plan.true[j])
    if photons > 0:
        # one global scale (average pattern carries the budget): the
        # energy ratio between patterns is data, not a free knob
        scale = photons * plan.n_positions / intensities.sum()
        for j in range(plan.n_positions):
            rng = np.random.default_rng(
                np.random.SeedSequence(entropy=seed, spawn_key=(1, j)))
            intensities[j] = rng.poisson(intensities[j] * scale).astype(float)

    return PtychoDataset(intensities=intensities, plan=plan, geometry=geometry,
                         probe=probe, object_truth=obj,
                         probe_diameter=float(probe_diameter), lambda_z=float(lambda_z),
                         photons=float(photons), seed=int(seed), image_px=int(image_px))
