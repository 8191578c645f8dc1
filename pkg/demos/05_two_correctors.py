"""The two position correctors side by side.

Same dataset, two ways to move the scan positions: the linearized
least-squares solve on the intensity derivatives (2 extra transforms
per visit) and sub-pixel cross-correlation of the object patch before
and after the update (3 extra transforms, adaptive feedback).
"""

import numpy as np

from ptychopos.config import config_from_mapping
from ptychopos.sweeps import aggregate, compare_settings, run_sweep

cfg = config_from_mapping({"preset": "desk"})
results = run_sweep(compare_settings(cfg.mapping), seeds=(0, 1, 2))

rows, traces, failed = aggregate(results)
for label, n, n_failed, mean, std in rows:
    print(f"{label:>4}: mean final error {mean:.4f} px "
          f"(std {std:.4f}, {n} seeds)")

# the cc corrector tends to move faster early, the lsq solve wins
# on the final figure; compare the mean traces at a quarter of the run
quarter = len(traces["lsq"][0]) // 4
for label in ("lsq", "cc"):
    mean_tr = traces[label][0]
    print(f"{label:>4}: error at iteration {quarter}: "
          f"{mean_tr[quarter - 1]:.4f} px")

try:
    import matplotlib.pyplot as plt
except ImportError:
    plt = None
if plt is not None:
    fig, ax = plt.subplots(figsize=(6, 4))
    for label, (mean_tr, std_tr) in traces.items():
        it = np.arange(1, len(mean_tr) + 1)
        ax.semilogy(it, mean_tr, label=label)
        ax.fill_between(it, mean_tr - std_tr, mean_tr + std_tr, alpha=0.25)
    ax.set_xlabel("iteration")
    ax.set_ylabel("position error (px)")
    ax.legend()
    fig.tight_layout()
    fig.savefig("corrector_comparison.png", dpi=120)
    print("wrote corrector_comparison.png")
