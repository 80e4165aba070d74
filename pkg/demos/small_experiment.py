"""A short Monte Carlo sweep comparing GLOSA, both periodograms and the bounds.

Run with ``python demos/small_experiment.py``; it takes about a minute.
"""
from globalspec import ExperimentConfig, run_experiment

cfg = ExperimentConfig.from_dict({"snr_list": [0, 10, 20], "n_runs": 10, "seed": 11,
                                  "sim": {"missampling": False}})
res = run_experiment(cfg, progress=lambda done, total: print(f"\rreplicate {done}/{total}", end=""))
print()
print(f"{'SNR dB':>7} {'GLOSA':>10} {'mean LS':>10} {'stacked LS':>10} {'CRB':>10}")
for row in res.rows:
    print(f"{row.snr_db:7.0f} {row.mse_sum('glosa'):10.3e} {row.mse_sum('mean'):10.3e} "
          f"{row.mse_sum('stacked'):10.3e} {row.bound_sum('crb'):10.3e}")
