"""Joint line-spectrum estimation for irregularly and uncertainly sampled records.

The main entry points are :func:`run_glosa` for estimation,
:func:`compute_bounds` for misspecified and classical Cramer-Rao bounds,
:func:`synthesize` for ice-core-like simulations and
:func:`run_experiment` for Monte Carlo sweeps.
"""
from .baselines import (
    PeriodogramEstimate, default_grid, lomb_scargle, mean_periodogram, pick_peaks, stacked_periodogram,
)
from .bounds import BoundReport, compute_bounds, expected_periodogram_peak, kld, pseudo_true
from .core import (
    MissamplingField, Record, RecordSet, SinusoidModel, evaluate_signal, noise_var_for_snr, snr_db,
)
from .dictionary import BandGrid, build_narrowband, build_wideband, refine_grid
from .exceptions import (
    AllBandsPrunedError, BoundComputationError, ConfigError, DataError, ExperimentFailedError,
    NoActiveBandsError, NotEnoughPeaksError, SolverConvergenceError,
)
from .glosa import GlobalEstimate, ZoomConfig, amplitude_readout, gridless_refine, run_glosa
from .harness import ExperimentConfig, ExperimentResult, associate, run_experiment
from .io import read_records_csv, write_records_csv
from .jointsolver import PenaltyConfig, SolverSettings, band_power, solve_joint
from .simulator import IntensityModel, SimConfig, fit_intensity, missampling_std, sample_pattern, synthesize

__version__ = "0.1.0"

__all__ = [
    "AllBandsPrunedError", "BandGrid", "BoundComputationError", "BoundReport", "ConfigError", "DataError",
    "ExperimentConfig", "ExperimentFailedError", "ExperimentResult", "GlobalEstimate", "IntensityModel",
    "MissamplingField", "NoActiveBandsError", "NotEnoughPeaksError", "PenaltyConfig", "PeriodogramEstimate",
    "Record", "RecordSet", "SimConfig", "SinusoidModel", "SolverConvergenceError", "SolverSettings",
    "ZoomConfig", "amplitude_readout", "associate", "band_power", "build_narrowband", "build_wideband",
    "compute_bounds", "default_grid", "evaluate_signal", "expected_periodogram_peak", "fit_intensity",
    "gridless_refine", "kld", "lomb_scargle", "mean_periodogram", "missampling_std", "noise_var_for_snr",
    "pick_peaks", "pseudo_true", "read_records_csv", "refine_grid", "run_experiment", "run_glosa",
    "sample_pattern", "snr_db", "solve_joint", "stacked_periodogram", "synthesize", "write_records_csv",
]
