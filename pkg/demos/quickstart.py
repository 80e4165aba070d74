"""Estimate shared cycles from three simulated irregularly sampled records.

Run with ``python demos/quickstart.py``.
"""
import numpy as np

from globalspec import SimConfig, run_glosa, synthesize
from globalspec.simulator import reference_intensities, replicate_rng

# Three records share four cycles (100, 41, 23, 19 kyr) but have their own
# amplitudes, phases, sampling times and timing errors.
records, truth, missampling, noise_var = synthesize(SimConfig(), reference_intensities(), 15.0,
                                                    replicate_rng(1, 0))
for r in records:
    print(f"{r.id}: {r.times.size} samples over {r.times[0]:.0f}..{r.times[-1]:.0f} kyr")

estimate = run_glosa(records)
print("zoom levels:", [int(level.active.sum()) for level in estimate.levels], "active bands")
found = np.sort(2 * np.pi / estimate.strongest(4))[::-1]
print("true periods (kyr):     ", np.round(2 * np.pi / truth.omegas, 2))
print("estimated periods (kyr):", np.round(found, 2))
