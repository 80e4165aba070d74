"""Monte Carlo MSE-versus-SNR experiments and the command back-ends.

An experiment is described by a JSON document validated against
:data:`CONFIG_SCHEMA`. Replicate ``j`` draws its sampling patterns,
amplitudes, phases and missampling from a generator keyed on ``(seed, j)``
and its noise from one keyed on ``(seed, j, snr index)``, so every SNR sees
the same structural draws and results do not depend on execution order.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import jsonschema
import numpy as np
from scipy.optimize import linear_sum_assignment

from .baselines import default_grid, mean_periodogram, pick_peaks, stacked_periodogram
from .bounds import compute_bounds
from .core import RecordSet, SinusoidModel, noise_var_for_snr, omega_to_frequency, omega_to_period
from .dictionary import build_wideband, BandGrid
from .exceptions import ConfigError, ExperimentFailedError
from .glosa import ZoomConfig, run_glosa
from .jointsolver import PenaltyConfig, solve_joint, term_magnitudes
from .simulator import (
    SimConfig, intensities_from_records, reference_intensities, replicate_rng, synthesize,
)

logger = logging.getLogger(__name__)

METHODS = ("glosa", "mean", "stacked")
BOUND_KEYS = ("crb", "mcrb", "bias_sq", "lb")

_NUM = {"type": "number"}
CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["snr_list", "n_runs"],
    "properties": {
        "snr_list": {"type": "array", "items": _NUM, "minItems": 1},
        "n_runs": {"type": "integer"},
        "seed": {"type": "integer", "minimum": 0},
        "workers": {"type": "integer", "minimum": 1},
        "max_failure_fraction": {"type": "number", "minimum": 0, "maximum": 1},
        "baselines": {"type": "boolean"},
        "bounds": {"type": "boolean"},
        "zoom": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "zoom_steps": {"type": "integer", "minimum": 1},
                "initial_bands": {"type": "integer", "minimum": 2},
                "subdivisions": {"oneOf": [
                    {"type": "integer", "minimum": 2},
                    {"type": "array", "items": {"type": "integer", "minimum": 2}},
                ]},
                "tau": {"type": "number", "exclusiveMinimum": 0},
                "omega_max": {"type": "number", "exclusiveMinimum": 0},
                "standardize": {"type": "boolean"},
                "fit_offset": {"type": "boolean"},
            },
        },
        "penalties": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "lambda": {"type": "number", "minimum": 0},
                "zeta": {"type": "number", "minimum": 0},
            },
        },
        "sim": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "periods": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 1},
                "amplitudes": {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 1},
                "n_records": {"type": "integer", "minimum": 1},
                "missampling": {"type": "boolean"},
                "amplitude_jitter": {"type": "number", "minimum": 0},
                "phase_max": {"type": "number", "minimum": 0},
                "swap_cap": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 0.5},
                "patterns_csv": {"type": "string"},
            },
        },
    },
}


@dataclass(frozen=True)
class ExperimentConfig:
    sim: SimConfig
    zoom: ZoomConfig
    snr_list: tuple
    n_runs: int
    seed: int = 0
    workers: int = 1
    max_failure_fraction: float = 0.05
    baselines: bool = True
    bounds: bool = True
    patterns_csv: Optional[str] = None
    source: dict = field(default_factory=dict, compare=False)

    @classmethod
    def from_dict(cls, d, base_dir=None):
        """Validate ``d`` against :data:`CONFIG_SCHEMA` and build a config."""
        try:
            jsonschema.validate(d, CONFIG_SCHEMA)
        except jsonschema.ValidationError as exc:
            path = "/".join(str(p) for p in exc.absolute_path) or "<root>"
            raise ConfigError(f"config {path}: {exc.message}") from None
        if d["n_runs"] < 1:
            raise ConfigError("n_runs must be >= 1 (zero replicates requested)")
        s = d.get("sim", {})
        periods = s.get("periods", [100.0, 41.0, 23.0, 19.0])
        amps = s.get("amplitudes", [1.0, 0.8, 0.6, 0.6])
        if len(periods) != len(amps):
            raise ConfigError("sim periods and amplitudes differ in length")
        if len(set(periods)) != len(periods):
            raise ConfigError("sim periods must be distinct")
        sim = SimConfig(
            template=SinusoidModel.from_periods(periods, [amps]),
            amplitude_jitter=s.get("amplitude_jitter", 0.1),
            phase_max=s.get("phase_max", np.pi / 5),
            swap_cap=s.get("swap_cap", 0.01),
            snr_list=tuple(d["snr_list"]),
            n_records=s.get("n_records", 3),
            n_runs=d["n_runs"],
            seed=d.get("seed", 0),
            missampling=s.get("missampling", True),
        )
        z = d.get("zoom", {})
        p = d.get("penalties", {})
        try:
            zoom = ZoomConfig(
                zoom_steps=z.get("zoom_steps", 4),
                initial_bands=z.get("initial_bands", 16),
                subdivisions=z.get("subdivisions", 4),
                tau=z.get("tau", 1e-5),
                omega_max=z.get("omega_max", 2 * np.pi / 8),
                standardize=z.get("standardize", True),
                fit_offset=z.get("fit_offset", True),
                penalties=PenaltyConfig(zeta=p.get("zeta", 10.0), lam=p.get("lambda", 15.0)),
            )
        except ValueError as exc:
            raise ConfigError(f"zoom: {exc}") from None
        pc = s.get("patterns_csv")
        if pc is not None and base_dir is not None and not Path(pc).is_absolute():
            pc = str(Path(base_dir) / pc)
        return cls(
            sim, zoom, tuple(float(x) for x in d["snr_list"]), int(d["n_runs"]), int(d.get("seed", 0)),
            int(d.get("workers", 1)), float(d.get("max_failure_fraction", 0.05)),
            bool(d.get("baselines", True)), bool(d.get("bounds", True)), pc, dict(d),
        )

    @classmethod
    def from_file(cls, path):
        path = Path(path)
        try:
            d = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        return cls.from_dict(d, base_dir=path.parent)


# ------------------------------------------------------------------ scoring


def associate(estimates, truths):
    """Squared error per true frequency under one-to-one nearest matching.

    Truths and estimates are paired by minimum total squared distance with
    at most one estimate per truth. A truth left without a partner (fewer
    estimates than truths) is charged the squared distance to the nearest
    estimate not used by the matching, or to the nearest estimate overall
    if all were used.
    """
    est = np.asarray(estimates, dtype=float).ravel()
    tru = np.asarray(truths, dtype=float).ravel()
    if est.size == 0:
        raise ValueError("no estimates to associate")
    cost = (tru[:, None] - est[None, :]) ** 2
    rows, cols = linear_sum_assignment(cost)
    err = np.full(tru.size, np.nan)
    err[rows] = cost[rows, cols]
    unused = np.setdiff1d(np.arange(est.size), cols)
    pool = unused if unused.size else np.arange(est.size)
    for k in np.flatnonzero(np.isnan(err)):
        err[k] = cost[k, pool].min()
    return err


# ------------------------------------------------------------------ experiment


@dataclass
class SnrResult:
    snr_db: float
    mse: dict
    n_ok: dict
    n_failed: dict
    bounds: dict
    n_bounds: int

    def mse_sum(self, method):
        return float(np.sum(self.mse[method])) if self.mse.get(method) is not None else float("nan")

    def bound_sum(self, key):
        b = self.bounds.get(key)
        return float(np.sum(b)) if b is not None else float("nan")

    def to_dict(self):
        return {
            "snr_db": self.snr_db,
            "mse": {m: (None if v is None else [float(x) for x in v]) for m, v in self.mse.items()},
            "n_ok": dict(self.n_ok),
            "n_failed": dict(self.n_failed),
            "bounds": {k: (None if v is None else [float(x) for x in v]) for k, v in self.bounds.items()},
            "n_bounds": self.n_bounds,
        }

    @classmethod
    def from_dict(cls, d):
        def arr(v):
            return None if v is None else np.asarray(v, dtype=float)

        return cls(float(d["snr_db"]), {m: arr(v) for m, v in d["mse"].items()}, dict(d["n_ok"]),
                   dict(d["n_failed"]), {k: arr(v) for k, v in d["bounds"].items()}, int(d["n_bounds"]))


@dataclass
class ExperimentResult:
    """Per-SNR MSE of every method and averaged bound diagonals.

    ``wall_clock`` is kept out of :meth:`to_dict` so that equal configs
    produce byte-identical result files.
    """

    omegas: np.ndarray
    n_runs: int
    rows: list
    failures: list = field(default_factory=list)
    wall_clock: float = 0.0

    def row(self, snr_db):
        for r in self.rows:
            if r.snr_db == snr_db:
                return r
        raise KeyError(snr_db)

    def to_dict(self):
        return {
            "omegas": [float(w) for w in self.omegas],
            "n_runs": self.n_runs,
            "rows": [r.to_dict() for r in self.rows],
            "failures": list(self.failures),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["omegas"], dtype=float), int(d["n_runs"]),
                   [SnrResult.from_dict(r) for r in d["rows"]], list(d["failures"]))

    def to_json(self):
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))

    def to_csv(self):
        """One row per SNR and method, with the bound sums repeated on each."""
        K = self.omegas.size
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["snr_db", "method", "mse_sum", *[f"mse_{k}" for k in range(K)], "n_ok", "n_failed",
                    "crb_sum", "mcrb_sum", "bias_sq_sum", "lb_sum"])
        for r in self.rows:
            for m, v in r.mse.items():
                per = [repr(float(x)) for x in v] if v is not None else ["nan"] * K
                w.writerow([repr(r.snr_db), m, repr(r.mse_sum(m)), *per, r.n_ok[m], r.n_failed[m],
                            *[repr(r.bound_sum(k)) for k in BOUND_KEYS]])
        return buf.getvalue()

    def write(self, out_dir):
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "result.json").write_text(self.to_json(), encoding="utf-8")
        (out / "result.csv").write_text(self.to_csv(), encoding="utf-8")
        (out / "timing.json").write_text(json.dumps({"wall_clock_s": self.wall_clock}), encoding="utf-8")


def _patterns(cfg: ExperimentConfig):
    if cfg.patterns_csv:
        from .io import read_records_csv

        return intensities_from_records(read_records_csv(cfg.patterns_csv, require_values=False))
    return reference_intensities()


def _method_estimates(records: RecordSet, K, cfg: ExperimentConfig):
    """Frequency estimates per method; a failed method maps to its error text."""
    out = {}
    try:
        est = run_glosa(records, cfg.zoom)
        out["glosa"] = est.strongest(K)
    except Exception as exc:  # any estimator failure is scored as a failed replicate
        out["glosa"] = f"{type(exc).__name__}: {exc}"
    if cfg.baselines:
        grid = default_grid(records, cfg.zoom.omega_max)
        for name, fn in (("mean", mean_periodogram), ("stacked", stacked_periodogram)):
            try:
                out[name] = pick_peaks(fn(records, grid, cfg.zoom.standardize), K)
            except Exception as exc:
                out[name] = f"{type(exc).__name__}: {exc}"
    return out


def _replicate(args):
    cfg, patterns, run = args
    out = []
    for i, snr in enumerate(cfg.snr_list):
        rng = replicate_rng(cfg.seed, run)
        recs, truth, miss, nv = synthesize(cfg.sim, patterns, snr, rng, noise_rng=replicate_rng(cfg.seed, run, i + 1))
        est = _method_estimates(recs, truth.n_components, cfg)
        errs = {m: (v if isinstance(v, str) else associate(v, truth.omegas)) for m, v in est.items()}
        bnd = None
        if cfg.bounds and nv > 0:
            try:
                rep = compute_bounds(recs.times, truth, miss, nv)
                bnd = {"crb": rep.crb_freq, "mcrb": rep.mcrb_freq, "bias_sq": rep.bias_sq_freq, "lb": rep.lb_freq}
            except Exception as exc:
                bnd = f"{type(exc).__name__}: {exc}"
        out.append((errs, bnd))
    return out


def run_experiment(cfg: ExperimentConfig, progress=None) -> ExperimentResult:
    """Run the configured Monte Carlo sweep.

    Raises
    ------
    ExperimentFailedError
        If more than ``max_failure_fraction`` of GLOSA replicates fail at
        some SNR; the partial result is attached.
    """
    start = time.perf_counter()
    patterns = _patterns(cfg)
    jobs = [(cfg, patterns, j) for j in range(cfg.n_runs)]
    if cfg.workers > 1:
        with ProcessPoolExecutor(cfg.workers) as pool:
            results = list(pool.map(_replicate, jobs))
    else:
        results = []
        for j, job in enumerate(jobs):
            results.append(_replicate(job))
            if progress:
                progress(j + 1, cfg.n_runs)

    methods = ["glosa"] + (["mean", "stacked"] if cfg.baselines else [])
    K = cfg.sim.template.n_components
    rows, failures = [], []
    for i, snr in enumerate(cfg.snr_list):
        mse, n_ok, n_failed = {}, {}, {}
        for m in methods:
            ok = []
            for j, rep in enumerate(results):
                e = rep[i][0][m]
                if isinstance(e, str):
                    failures.append({"snr_db": snr, "run": j, "method": m, "error": e})
                else:
                    ok.append(e)
            n_ok[m], n_failed[m] = len(ok), cfg.n_runs - len(ok)
            mse[m] = np.mean(ok, axis=0) if ok else None
        bvals = []
        for j, rep in enumerate(results):
            b = rep[i][1]
            if isinstance(b, str):
                failures.append({"snr_db": snr, "run": j, "method": "bounds", "error": b})
            elif b is not None:
                bvals.append(b)
        bounds = {k: (np.mean([b[k] for b in bvals], axis=0) if bvals else None) for k in BOUND_KEYS}
        rows.append(SnrResult(snr, mse, n_ok, n_failed, bounds, len(bvals)))
    res = ExperimentResult(cfg.sim.template.omegas.copy(), cfg.n_runs, rows, failures,
                           time.perf_counter() - start)
    worst = max(r.n_failed["glosa"] for r in rows) / cfg.n_runs
    if worst > cfg.max_failure_fraction:
        raise ExperimentFailedError(
            f"{worst:.1%} of GLOSA replicates failed (budget {cfg.max_failure_fraction:.1%})", res
        )
    return res


# ------------------------------------------------------------------ commands


def frequency_table(omegas):
    w = np.asarray(omegas, dtype=float)
    return {
        "omega_rad_per_kyr": w.tolist(),
        "frequency_per_kyr": omega_to_frequency(w).tolist(),
        "period_kyr": omega_to_period(w).tolist(),
    }


def baseline_report(records: RecordSet, K, omega_max=2 * np.pi / 8, standardize=True):
    """Peaks and scaled spectra of both periodogram baselines."""
    grid = default_grid(records, omega_max)
    spectra, peaks = {}, {}
    for name, fn in (("mean", mean_periodogram), ("stacked", stacked_periodogram)):
        est = fn(records, grid, standardize)
        spectra[name] = est.scaled().power
        try:
            peaks[name] = frequency_table(pick_peaks(est, K))
        except ValueError as exc:
            peaks[name] = {"error": str(exc)}
    return grid, spectra, peaks


def estimate_command(records: RecordSet, zoom: ZoomConfig = ZoomConfig(), with_baselines=True):
    """GLOSA (plus baselines) on real or simulated records.

    Returns ``(report, spectrum_csv)``: a JSON-ready dict with frequencies in
    rad/kyr, 1/kyr and kyr, amplitudes on the standardized and raw scales,
    and per-level diagnostics; and a plot-ready CSV of the spectral estimates.
    """
    est = run_glosa(records, zoom)
    report = {
        "records": records.ids,
        "glosa": {
            **frequency_table(est.omegas),
            "global_amplitude_standardized": est.amplitudes.global_amplitudes.tolist(),
            "global_amplitude_raw": est.raw_amplitudes.global_amplitudes.tolist(),
            "amplitudes_standardized": est.amplitudes.amplitudes.tolist(),
            "amplitudes_raw": est.raw_amplitudes.amplitudes.tolist(),
            "phases": est.amplitudes.phases.tolist(),
            "regions": [[float(a), float(b)] for a, b in zip(est.regions.starts, est.regions.ends)],
            "levels": [
                {"bands": lv.grid.count, "active": int(lv.active.size), "iterations": lv.iterations,
                 "converged": lv.converged}
                for lv in est.levels
            ],
        },
    }
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    final = est.levels[-1]
    if with_baselines:
        grid, spectra, peaks = baseline_report(records, est.omegas.size, zoom.omega_max, zoom.standardize)
        report["baselines"] = peaks
        # GLOSA band powers spread onto the baseline grid for side-by-side plots
        idx = np.searchsorted(final.grid.ends, grid)
        inside = (idx < final.grid.count)
        idx = np.minimum(idx, final.grid.count - 1)
        inside &= grid >= final.grid.starts[idx]
        glosa_p = np.where(inside, final.powers[idx], 0.0)
        top = glosa_p.max()
        glosa_p = glosa_p / top if top > 0 else glosa_p
        w.writerow(["omega_rad_per_kyr", "period_kyr", "glosa", "mean", "stacked"])
        for g, a, b, c in zip(grid, glosa_p, spectra["mean"], spectra["stacked"]):
            w.writerow([repr(float(g)), repr(float(2 * np.pi / g)), repr(float(a)), repr(float(b)), repr(float(c))])
    else:
        w.writerow(["band_start", "band_end", "glosa_power"])
        for s, e, p in zip(final.grid.starts, final.grid.ends, final.powers):
            w.writerow([repr(float(s)), repr(float(e)), repr(float(p))])
    return report, buf.getvalue()


def bounds_command(times, truth: SinusoidModel, missampling, snr_list):
    """Summed frequency bounds per SNR.

    The noise variance for an SNR uses the mean over records of the
    per-record signal power. Returns rows of
    ``(snr_db, crb_sum, mcrb_sum, bias_sq_sum, lb_sum)``.
    """
    mean_power = SinusoidModel(truth.omegas, [np.sqrt(np.mean(truth.amplitudes**2, axis=0))],
                               [np.zeros(truth.n_components)])
    rows = []
    for snr in snr_list:
        nv = noise_var_for_snr(mean_power, 0, snr)
        rep = compute_bounds(times, truth, missampling, nv)
        rows.append((float(snr), float(rep.crb_freq.sum()), float(rep.mcrb_freq.sum()),
                     float(rep.bias_sq_freq.sum()), float(rep.lb_freq.sum())))
    return rows


def format_bounds_csv(rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["snr_db", "crb_sum", "mcrb_sum", "bias_sq_sum", "lb_sum"])
    for r in rows:
        w.writerow([repr(x) for x in r])
    return buf.getvalue()


def term_balance(records: RecordSet, zoom: ZoomConfig = ZoomConfig()):
    """Objective term magnitudes at a first-level solve, for penalty tuning."""
    recs = records.standardized() if zoom.standardize else records
    grid = BandGrid.uniform(zoom.omega_max, zoom.initial_bands)
    sol = solve_joint(recs, build_wideband(recs, grid, zoom.time_reference), zoom.penalties, zoom.solver)
    terms = term_magnitudes(sol)
    terms["lambda"] = zoom.penalties.lam
    terms["zeta"] = float(np.mean(np.atleast_1d(zoom.penalties.zeta)))
    return terms


def with_overrides(zoom: ZoomConfig, **kw) -> ZoomConfig:
    """Copy of ``zoom`` with non-None keyword overrides (``lam``/``zeta`` go to penalties)."""
    pen = zoom.penalties
    if kw.get("lam") is not None:
        pen = replace(pen, lam=kw["lam"])
    if kw.get("zeta") is not None:
        pen = replace(pen, zeta=kw["zeta"])
    fields = {k: v for k, v in kw.items() if k not in ("lam", "zeta") and v is not None}
    return replace(zoom, penalties=pen, **fields)
