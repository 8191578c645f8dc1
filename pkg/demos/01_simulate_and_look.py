"""Synthesize a small dataset and look at what is in it.

Everything here runs at the desk scale (64 px frames, 4x4 scan) in a
couple of seconds.  The dataset bundles the measured intensities with
the scan plan and, because it is synthetic, the ground truth needed
for scoring later.
"""

import numpy as np

from ptychopos.config import config_from_mapping, dataset_from_config
from ptychopos.containers import write_dataset
from ptychopos.reports import phase_to_gray16, write_pfm, write_pgm16

cfg = config_from_mapping({"preset": "desk"})
ds = dataset_from_config(cfg)

print(f"frames:      {ds.intensities.shape}")
print(f"scan plan:   {ds.plan.grid_shape} grid, step {ds.plan.step} px, "
      f"offsets up to {ds.plan.max_offset} px")
print(f"probe:       {ds.probe_diameter} px diameter on a "
      f"{ds.geometry.n_side} px frame")
print(f"object:      {ds.object_truth.shape} canvas around a "
      f"{ds.image_px} px scene")

# nominal vs true positions: the hidden offsets the solver must find
d = ds.plan.true - ds.plan.nominal
print(f"offsets:     mean {np.hypot(d[:, 0], d[:, 1]).mean():.2f} px, "
      f"max {np.hypot(d[:, 0], d[:, 1]).max():.2f} px")

write_dataset("desk.ptyd", ds)
write_pfm("truth_amplitude.pfm", np.abs(ds.object_truth))
write_pgm16("truth_phase.pgm", phase_to_gray16(np.angle(ds.object_truth)))
print("wrote desk.ptyd, truth_amplitude.pfm, truth_phase.pgm")

try:
    import matplotlib.pyplot as plt
except ImportError:
    plt = None
if plt is not None:
    fig, axes = plt.subplots(1, 3, figsize=(10, 3.2))
    axes[0].imshow(np.abs(ds.object_truth), cmap="gray")
    axes[0].set_title("object amplitude")
    axes[1].imshow(np.angle(ds.object_truth), cmap="twilight")
    axes[1].set_title("object phase")
    axes[2].imshow(ds.intensities[0] ** 0.25, cmap="magma")
    axes[2].set_title("far field (4th root)")
    for ax in axes:
        ax.set_xticks([]), ax.set_yticks([])
    fig.tight_layout()
    fig.savefig("dataset_overview.png", dpi=120)
    print("wrote dataset_overview.png")
