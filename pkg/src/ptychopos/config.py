"""Experiment configuration: TOML files, presets, validation.

A config is a TOML document with blocks ``[geometry]``, ``[object]``,
``[probe]``, ``[scan]``, ``[noise]``, ``[schedule]``, ``[cc]``,
``[output]`` and the top-level keys ``seed`` and ``preset``.  A preset
expands to a complete parameter set first and explicit keys are merged
on top, so a file can select ``preset = "reference"`` and override
single values.  Unknown keys anywhere are rejected by path; silent
typos in experiment definitions are worse than a hard error.

The merged mapping is kept on the parsed config (``mapping``) so every
run can echo the exact parameter set it executed with.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

import numpy as np

from ptychopos.engine import Schedule
from ptychopos.fields import Geometry
from ptychopos.simulate import simulate_dataset

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "PRESETS",
    "load_config",
    "config_from_mapping",
    "dataset_from_config",
    "dump_toml",
]


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending key path."""


# Reference run: 224 px frames so the scan span plus the probe footprint
# covers the full test image (8x8 grid, 19.2 px step: 134.4 + 89.6 = 224)
# and the far field is oversampled 2.5x relative to the probe diameter.
# The detector pitch is chosen to put the object-plane pixel at 1 um.
_REFERENCE = {
    "seed": 0,
    "geometry": {"wavelength": 6.33e-4, "distance": 100.0,
                 "detector_pitch": 6.33e-4 * 100.0 / (224 * 0.001),
                 "n_side": 224},
    "object": {"size": 224, "amp_source": "builtin:scene",
               "phase_source": "builtin:waves",
               "amp_range": [0.0, 1.0],
               "phase_range": [-0.7 * math.pi, 0.7 * math.pi]},
    "probe": {"diameter": 89.6, "lambda_z": 5e-4},
    "scan": {"rows": 8, "cols": 8, "step": 19.2, "max_offset": 10.0},
    "noise": {"photons": 0.0},
    # shuffled visits measurably beat raster here: the per-iteration
    # reshuffle keeps position errors from organizing into a consistent
    # object/probe distortion while the probe is still converging
    "schedule": {"iterations": 300, "position_start": 15, "probe_start": 45,
                 "beta": 0.5, "corrector": "lsq", "visit_order": "shuffle"},
}

# Miniature variant for CI and quick experiments: same pixel pitch and
# probe Fresnel number, quarter-scale frames, minutes become seconds.
_DESK = {
    "seed": 0,
    "geometry": {"wavelength": 6.33e-4, "distance": 50.0,
                 "detector_pitch": 0.49453125, "n_side": 64},
    "object": {"size": 112, "amp_source": "builtin:scene",
               "phase_source": "builtin:waves",
               "amp_range": [0.0, 1.0],
               "phase_range": [-0.7 * math.pi, 0.7 * math.pi]},
    "probe": {"diameter": 44.8, "lambda_z": 1.25e-4},
    "scan": {"rows": 4, "cols": 4, "step": 9.6, "max_offset": 5.0},
    "noise": {"photons": 0.0},
    "schedule": {"iterations": 100, "position_start": 15, "probe_start": 45,
                 "beta": 0.5, "corrector": "lsq", "visit_order": "shuffle"},
}

PRESETS = {
    "reference": _REFERENCE,
    "paper-ref": _REFERENCE,  # accepted alias
    "desk": _DESK,
}

# every key a config may contain, with the type it must parse to
_SCHEMA = {
    "geometry": {"wavelength": float, "distance": float,
                 "detector_pitch": float, "n_side": int},
    "object": {"size": int, "amp_source": str, "phase_source": str,
               "amp_range": list, "phase_range": list},
    "probe": {"diameter": float, "lambda_z": float},
    "scan": {"rows": int, "cols": int, "step": float, "max_offset": float,
             "canvas": int},
    "noise": {"photons": float},
    "schedule": {"iterations": int, "position_start": int, "probe_start": int,
                 "alpha_object": float, "alpha_probe": float, "beta": float,
                 "corrector": str, "visit_order": str, "step_clamp": float},
    "cc": {"upsample": int, "feedback_init": float, "gain_up": float,
           "gain_down": float, "corr_high": float, "corr_low": float,
           "feedback_min": float, "feedback_max": float, "window": int},
    "output": {"directory": str},
}
_TOP_KEYS = {"seed", "preset"} | set(_SCHEMA)


@dataclass
class ExperimentConfig:
    """A fully validated experiment: dataset recipe plus solver schedule."""

    geometry: Geometry
    image_px: int
    amp_source: str
    phase_source: str
    amp_range: tuple
    phase_range: tuple
    probe_diameter: float
    lambda_z: float
    rows: int
    cols: int
    step: float
    max_offset: float
    canvas_px: int | None
    photons: float
    seed: int
    schedule: Schedule
    out_dir: str | None
    mapping: dict


def _merge(base, override):
    out = {k: dict(v) if isinstance(v, dict) else v for k, v in base.items()}
    for key, val in override.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key].update(val)
        else:
            out[key] = val
    return out


def _check_keys(data):
    for key in data:
        if key not in _TOP_KEYS:
            raise ConfigError(f"unknown key {key!r}")
        if key in _SCHEMA:
            if not isinstance(data[key], dict):
                raise ConfigError(f"{key} must be a table")
            for sub in data[key]:
                if sub not in _SCHEMA[key]:
                    raise ConfigError(f"unknown key {key}.{sub!r}")


def _get(data, block, key, default=None, required=False):
    val = data.get(block, {}).get(key, default)
    if val is None:
        if required:
            raise ConfigError(f"missing key {block}.{key}")
        return None
    want = _SCHEMA[block][key]
    if want is float and isinstance(val, int):
        val = float(val)
    if not isinstance(val, want) or isinstance(val, bool):
        raise ConfigError(f"{block}.{key} must be {want.__name__}, "
                          f"got {type(val).__name__}")
    return val


def _get_range(data, block, key):
    val = _get(data, block, key, required=True)
    if len(val) != 2 or not all(isinstance(v, (int, float)) for v in val):
        raise ConfigError(f"{block}.{key} must be a [low, high] pair")
    lo, hi = float(val[0]), float(val[1])
    if not (math.isfinite(lo) and math.isfinite(hi)) or lo > hi:
        raise ConfigError(f"{block}.{key} must be finite with low <= high")
    return (lo, hi)


def config_from_mapping(data):
    """Validate a parsed mapping and build an :class:`ExperimentConfig`."""
    if not isinstance(data, dict):
        raise ConfigError("config root must be a table")
    preset = data.get("preset")
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(
                f"unknown preset {preset!r}; available: "
                + ", ".join(sorted(set(PRESETS))))
        merged = _merge(PRESETS[preset], {k: v for k, v in data.items()
                                          if k != "preset"})
    else:
        merged = data
    _check_keys(merged)

    seed = merged.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        raise ConfigError("seed must be a non-negative integer")

    n_side = _get(merged, "geometry", "n_side", required=True)
    if n_side < 2 or n_side % 2:
        raise ConfigError("geometry.n_side must be even and >= 2")
    lengths = {name: _get(merged, "geometry", name, required=True)
               for name in ("wavelength", "distance", "detector_pitch")}
    for name, val in lengths.items():
        if val <= 0:
            raise ConfigError(f"geometry.{name} must be positive")
    geometry = Geometry(n_side=n_side, **lengths)

    image_px = _get(merged, "object", "size", required=True)
    if image_px < 1:
        raise ConfigError("object.size must be positive")
    diameter = _get(merged, "probe", "diameter", required=True)
    if not 0 < diameter < n_side:
        raise ConfigError("probe.diameter must lie in (0, geometry.n_side)")
    lambda_z = _get(merged, "probe", "lambda_z", required=True)
    if lambda_z <= 0:
        raise ConfigError("probe.lambda_z must be positive")

    rows = _get(merged, "scan", "rows", required=True)
    cols = _get(merged, "scan", "cols", required=True)
    if rows < 1 or cols < 1:
        raise ConfigError("scan.rows and scan.cols must be >= 1")
    step = _get(merged, "scan", "step", required=True)
    if step < 0:
        raise ConfigError("scan.step must be non-negative")
    max_offset = _get(merged, "scan", "max_offset", 0.0)
    if max_offset < 0:
        raise ConfigError("scan.max_offset must be non-negative")
    if diameter + 2 * max_offset > n_side:
        raise ConfigError(
            "probe.diameter + 2*scan.max_offset exceeds the probe frame; "
            "offsets would push the footprint outside the detector window")
    canvas_px = _get(merged, "scan", "canvas")

    photons = _get(merged, "noise", "photons", 0.0)
    if photons < 0:
        raise ConfigError("noise.photons must be non-negative")

    sched_kwargs = {}
    for key, attr in (("iterations", "iterations"),
                      ("position_start", "position_start"),
                      ("probe_start", "probe_start"),
                      ("alpha_object", "alpha_object"),
                      ("alpha_probe", "alpha_probe"),
                      ("beta", "beta"),
                      ("corrector", "corrector"),
                      ("visit_order", "visit_order"),
                      ("step_clamp", "step_clamp")):
        val = _get(merged, "schedule", key)
        if val is not None:
            sched_kwargs[attr] = val
    for key, attr in (("upsample", "cc_upsample"),
                      ("feedback_init", "cc_feedback_init"),
                      ("gain_up", "cc_gain_up"),
                      ("gain_down", "cc_gain_down"),
                      ("corr_high", "cc_corr_high"),
                      ("corr_low", "cc_corr_low"),
                      ("window", "cc_window")):
        val = _get(merged, "cc", key)
        if val is not None:
            sched_kwargs[attr] = val
    fb_min = _get(merged, "cc", "feedback_min")
    fb_max = _get(merged, "cc", "feedback_max")
    if (fb_min is None) != (fb_max is None):
        raise ConfigError("cc.feedback_min and cc.feedback_max must be "
                          "given together")
    if fb_min is not None:
        if not 0 < fb_min <= fb_max:
            raise ConfigError("cc feedback bounds must satisfy "
                              "0 < feedback_min <= feedback_max")
        sched_kwargs["cc_feedback_bounds"] = (fb_min, fb_max)
    if sched_kwargs.get("beta", 1.0) <= 0:
        raise ConfigError("schedule.beta must be positive")
    if sched_kwargs.get("iterations", 0) < 0:
        raise ConfigError("schedule.iterations must be non-negative")
    try:
        schedule = Schedule(**sched_kwargs)
    except ValueError as exc:
        raise ConfigError(f"schedule: {exc}") from exc

    amp_range = _get_range(merged, "object", "amp_range")
    phase_range = _get_range(merged, "object", "phase_range")

    return ExperimentConfig(
        geometry=geometry,
        image_px=image_px,
        amp_source=_get(merged, "object", "amp_source", "builtin:scene"),
        phase_source=_get(merged, "object", "phase_source", "builtin:waves"),
        amp_range=amp_range,
        phase_range=phase_range,
        probe_diameter=diameter,
        lambda_z=lambda_z,
        rows=rows, cols=cols, step=step, max_offset=max_offset,
        canvas_px=canvas_px,
        photons=photons,
        seed=seed,
        schedule=schedule,
        out_dir=_get(merged, "output", "directory"),
        mapping=merged)


def load_config(path):
    """Parse and validate a TOML config file."""
    with open(path, "rb") as f:
        try:
            data = tomllib.load(f)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    return config_from_mapping(data)


def dataset_from_config(cfg, seed=None):
    """Synthesize the dataset an :class:`ExperimentConfig` describes.

    ``seed`` overrides the config seed; sweeps use it to fan one config
    out over many hidden-offset realizations.
    """
    return simulate_dataset(
        cfg.geometry,
        image_px=cfg.image_px,
        amp_source=cfg.amp_source,
        phase_source=cfg.phase_source,
        amp_range=cfg.amp_range,
        phase_range=cfg.phase_range,
        probe_diameter=cfg.probe_diameter,
        lambda_z=cfg.lambda_z,
        grid_shape=(cfg.cols, cfg.rows),
        step=cfg.step,
        max_offset=cfg.max_offset,
        photons=cfg.photons,
        seed=cfg.seed if seed is None else int(seed),
        canvas_px=cfg.canvas_px)


def _toml_value(val):
    if isinstance(val, bool):
        return "true" if val else "false"
    if isinstance(val, (int, np.integer)):
        return str(int(val))
    if isinstance(val, (float, np.floating)):
        return repr(float(val))
    if isinstance(val, str):
        escaped = val.replace("\\", "\\\\").replace('"', '\\"')
        return f'"{escaped}"'
    if isinstance(val, (list, tuple)):
        return "[" + ", ".join(_toml_value(v) for v in val) + "]"
    raise TypeError(f"cannot serialize {type(val).__name__} to TOML")


def dump_toml(mapping):
    """Serialize a two-level mapping back to TOML text.

    Covers exactly the shapes configs use (scalar top-level keys and
    one level of tables); the echo written into run directories goes
    through here so a run can be replayed byte-for-byte.
    """
    top = []
    tables = []
    for key, val in mapping.items():
        if isinstance(val, dict):
            lines = [f"[{key}]"]
            lines += [f"{k} = {_toml_value(v)}" for k, v in val.items()]
            tables.append("\n".join(lines))
        else:
            top.append(f"{key} = {_toml_value(val)}")
    parts = ["\n".join(top)] if top else []
    parts += tables
    return "\n\n".join(parts) + "\n"
