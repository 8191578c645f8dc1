"""Binary containers for datasets (PTYD) and solver checkpoints (PTYC).

Layout, all little-endian:

===========  ==========================================================
bytes        content
===========  ==========================================================
0:4          magic, ``PTYD`` for datasets / ``PTYC`` for checkpoints
4:8          format version, u32 (currently 1)
8:16         metadata length in bytes, u64
16:16+m      UTF-8 JSON metadata
rest         raw array payload, C order, little-endian
===========  ==========================================================

The metadata's ``sections`` list declares name, dtype (``f8`` or
``c16``), and shape of each payload array in file order, so the payload
needs no per-array framing.  Readers ignore metadata keys they do not
know, which is the forward-compatibility contract; bumping the major
version is reserved for layout changes that break old readers.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from ptychopos.fields import Geometry
from ptychopos.simulate import PtychoDataset, ScanPlan

__all__ = [
    "FormatError",
    "write_dataset",
    "read_dataset",
    "write_checkpoint",
    "read_checkpoint",
]

VERSION = 1
MAGIC_DATASET = b"PTYD"
MAGIC_CHECKPOINT = b"PTYC"

_DTYPES = {"f8": np.dtype("<f8"), "c16": np.dtype("<c16")}


class FormatError(ValueError):
    pass


def _write_container(path, magic, meta, arrays):
    sections = []
    for name, arr in arrays.items():
        code = "c16" if np.iscomplexobj(arr) else "f8"
        sections.append({"name": name, "dtype": code, "shape": list(arr.shape)})
    meta = dict(meta, sections=sections)
    blob = json.dumps(meta).encode()
    with open(path, "wb") as f:
        f.write(magic)
        f.write(struct.pack("<I", VERSION))
        f.write(struct.pack("<Q", len(blob)))
        f.write(blob)
        for name, arr in arrays.items():
            code = "c16" if np.iscomplexobj(arr) else "f8"
            f.write(np.ascontiguousarray(arr, dtype=_DTYPES[code]).tobytes())


def _read_container(path, magic):
    raw = open(path, "rb").read()
    if len(raw) < 16:
        raise FormatError(f"{path}: too short for a container header")
    if raw[:4] != magic:
        raise FormatError(
            f"{path}: bad magic {raw[:4]!r}, expected {magic.decode()}")
    version = struct.unpack("<I", raw[4:8])[0]
    if version > VERSION:
        raise FormatError(
            f"{path}: written as format version {version}, this reader "
            f"supports up to {VERSION}")
    meta_len = struct.unpack("<Q", raw[8:16])[0]
    if len(raw) < 16 + meta_len:
        raise FormatError(f"{path}: metadata block truncated")
    meta = json.loads(raw[16:16 + meta_len].decode())
    offset = 16 + meta_len
    payload = raw[offset:]
    need = sum(int(np.prod(s["shape"])) * _DTYPES[s["dtype"]].itemsize
               for s in meta["sections"])
    if len(payload) < need:
        raise FormatError(
            f"{path}: expected {need} payload bytes, found {len(payload)}")
    arrays = {}
    pos = 0
    for s in meta["sections"]:
        dt = _DTYPES[s["dtype"]]
        count = int(np.prod(s["shape"]))
        arrays[s["name"]] = np.frombuffer(
            payload, dtype=dt, count=count, offset=pos).reshape(s["shape"]).copy()
        pos += count * dt.itemsize
    return meta, arrays


def write_dataset(path, ds):
    """Serialize a :class:`~ptychopos.simulate.PtychoDataset` to PTYD."""
    meta = {
        "geometry": {"wavelength": ds.geometry.wavelength,
                     "distance": ds.geometry.distance,
                     "detector_pitch": ds.geometry.detector_pitch,
                     "n_side": ds.geometry.n_side},
        "plan": {"grid_shape": list(ds.plan.grid_shape), "step": ds.plan.step,
                 "max_offset": ds.plan.max_offset, "seed": ds.plan.seed},
        "probe_diameter": ds.probe_diameter,
        "lambda_z": ds.lambda_z,
        "photons": ds.photons,
        "seed": ds.seed,
        "image_px": ds.image_px,
    }
    arrays = {
        "intensities": ds.intensities,
        "nominal_positions": ds.plan.nominal,
        "true_positions": ds.plan.true,
        "probe": ds.probe,
        "object_truth": ds.object_truth,
    }
    _write_container(path, MAGIC_DATASET, meta, arrays)


def read_dataset(path):
    """Read a PTYD file back into a :class:`PtychoDataset`."""
    meta, arrays = _read_container(path, MAGIC_DATASET)
    g = meta["geometry"]
    p = meta["plan"]
    plan = ScanPlan(nominal=arrays["nominal_positions"],
                    true=arrays["true_positions"],
                    grid_shape=tuple(p["grid_shape"]), step=p["step"],
                    max_offset=p["max_offset"], seed=p["seed"])
    return PtychoDataset(
        intensities=arrays["intensities"], plan=plan,
        geometry=Geometry(wavelength=g["wavelength"], distance=g["distance"],
                          detector_pitch=g["detector_pitch"], n_side=g["n_side"]),
        probe=arrays["probe"], object_truth=arrays["object_truth"],
        probe_diameter=meta["probe_diameter"], lambda_z=meta["lambda_z"],
        photons=meta["photons"], seed=meta["seed"], image_px=meta["image_px"])


def write_checkpoint(path, *, object_est, probe_est, positions, iteration, extra=None,
                     extra_arrays=None):
    """Persist a reconstruction state snapshot to PTYC.

    ``extra_arrays`` lets the solver stash additional per-position
    state (for example corrector bookkeeping) without a format change.
    """
    meta = {"iteration": int(iteration), "extra": extra or {}}
    arrays = {
        "object_est": np.asarray(object_est, dtype=complex),
        "probe_est": np.asarray(probe_est, dtype=complex),
        "positions": np.asarray(positions, dtype=float),
    }
    for name, arr in (extra_arrays or {}).items():
        arrays[name] = np.asarray(arr)
    _write_container(path, MAGIC_CHECKPOINT, meta, arrays)


def read_checkpoint(path):
    """Read a PTYC checkpoint; returns a dict of all arrays plus metadata."""
    meta, arrays = _read_container(path, MAGIC_CHECKPOINT)
    out = dict(arrays)
    out["iteration"] = meta["iteration"]
    out["extra"] = meta.get("extra", {})
    return out
