"""Follow the estimated positions while the solver pulls them home.

The run report carries a per-visit trace (iteration, position index,
coordinates, step, solve diagnostics).  This script writes it as CSV
and draws the classic before/after scatter if matplotlib is around.
"""

import numpy as np

from ptychopos.config import config_from_mapping, dataset_from_config
from ptychopos.engine import run_reconstruction
from ptychopos.metrics import position_error
from ptychopos.reports import write_positions_csv, write_trace_csv

cfg = config_from_mapping({"preset": "desk"})
ds = dataset_from_config(cfg)

state, report = run_reconstruction(ds, cfg.schedule)

initial = ds.plan.nominal
print(f"start:  {position_error(ds.plan.true, initial):.4f} px")
print(f"final:  {position_error(ds.plan.true, state.positions):.4f} px")

write_trace_csv("position_trace.csv", report.trace_rows)
write_positions_csv("positions.csv", initial, state.positions, ds.plan.true)
print("wrote position_trace.csv, positions.csv")

try:
    import matplotlib.pyplot as plt
except ImportError:
    plt = None
if plt is not None:
    fig, axes = plt.subplots(1, 2, figsize=(9, 4.2), sharex=True,
                             sharey=True)
    # estimates are only determined up to a common translation, so
    # remove the mean offset before plotting against the truth
    for ax, est, title in ((axes[0], initial, "before"),
                           (axes[1], state.positions, "after")):
        shift = (est - ds.plan.true).mean(axis=0)
        ax.scatter(ds.plan.true[:, 0], ds.plan.true[:, 1], marker="o",
                   s=40, facecolors="none", edgecolors="green",
                   label="true")
        ax.scatter(est[:, 0] - shift[0], est[:, 1] - shift[1], marker="x",
                   s=30, color="red", label="estimate")
        ax.set_title(f"{title}: "
                     f"{position_error(ds.plan.true, est):.3f} px")
        ax.set_aspect("equal")
    axes[0].legend(loc="upper right")
    fig.tight_layout()
    fig.savefig("positions_before_after.png", dpi=120)
    print("wrote positions_before_after.png")
