"""Command-line entry point ``globalspec``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 too many
failed replicates or a non-converged computation.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .exceptions import (
    AllBandsPrunedError, BoundComputationError, ConfigError, DataError, ExperimentFailedError,
    SolverConvergenceError,
)
from .glosa import ZoomConfig
from .harness import (
    ExperimentConfig, baseline_report, bounds_command, estimate_command, format_bounds_csv,
    run_experiment, term_balance, with_overrides,
)
from .io import read_records_csv, read_truth_json, write_records_csv, write_truth_json
from .simulator import intensities_from_records, reference_intensities, replicate_rng, synthesize

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_CONVERGENCE = 0, 2, 3, 4


def _on_off(text):
    if text not in ("on", "off"):
        raise argparse.ArgumentTypeError("expected on or off")
    return text == "on"


def _snr_list(text):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad SNR list {text!r}") from None


def _add_common(p):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", type=Path, help="experiment JSON config")
    p.add_argument("--out-dir", type=Path, default=Path("."))
    p.add_argument("--standardize", type=_on_off, default=None, metavar="on|off")
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--zeta", type=float)
    p.add_argument("--tau", type=float)
    p.add_argument("--zooms", type=int)
    p.add_argument("--initial-bands", type=int)
    p.add_argument("--omega-max", type=float)
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser():
    parser = argparse.ArgumentParser(prog="globalspec", description="Joint line-spectrum estimation for irregularly sampled records.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="write a synthetic record CSV and truth JSON")
    _add_common(p)
    p.add_argument("--snr", type=float, default=float("inf"), help="SNR in dB (default: noise-free)")
    p.add_argument("--patterns", type=Path, help="record CSV whose sampling times seed the patterns")
    p.add_argument("--no-missampling", action="store_true")

    p = sub.add_parser("estimate", help="run GLOSA and both baselines on a record CSV")
    _add_common(p)
    p.add_argument("records", type=Path)
    p.add_argument("--no-baselines", action="store_true")

    p = sub.add_parser("baseline", help="mean and stacked periodogram peaks")
    _add_common(p)
    p.add_argument("records", type=Path)
    p.add_argument("-K", "--components", type=int, default=4)

    p = sub.add_parser("bounds", help="CRB / MCRB curves for a simulated truth")
    _add_common(p)
    p.add_argument("truth", type=Path)
    p.add_argument("patterns", type=Path, help="record CSV with the sampling times")
    p.add_argument("--snr-list", type=_snr_list, default=[0.0, 5.0, 10.0, 15.0])

    p = sub.add_parser("experiment", help="Monte Carlo MSE-versus-SNR sweep")
    _add_common(p)
    p.add_argument("--workers", type=int)

    p = sub.add_parser("term-balance", help="objective term magnitudes at a first-level solve")
    _add_common(p)
    p.add_argument("records", type=Path)
    return parser


def _zoom(args, base: ZoomConfig = None):
    return with_overrides(
        base or ZoomConfig(), lam=args.lam, zeta=args.zeta, tau=args.tau, zoom_steps=args.zooms,
        initial_bands=args.initial_bands, omega_max=args.omega_max, standardize=args.standardize,
    )


def _load_config(args):
    if args.config is None:
        return None
    return ExperimentConfig.from_file(args.config)


def _write(path: Path, text):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def cmd_simulate(args):
    cfg = _load_config(args)
    sim = cfg.sim if cfg else ExperimentConfig.from_dict({"snr_list": [0], "n_runs": 1}).sim
    if args.no_missampling:
        sim = replace(sim, missampling=False)
    patterns = intensities_from_records(read_records_csv(args.patterns, require_values=False)) if args.patterns \
        else reference_intensities()
    recs, truth, miss, nv = synthesize(sim, patterns, args.snr, replicate_rng(args.seed, 0),
                                       noise_rng=replicate_rng(args.seed, 0, 1))
    args.out_dir.mkdir(parents=True, exist_ok=True)
    write_records_csv(args.out_dir / "records.csv", recs)
    write_truth_json(args.out_dir / "truth.json", recs, truth, miss, nv)
    print(f"wrote {recs.total_samples} samples in {len(recs)} records to {args.out_dir}")
    return EXIT_OK


def cmd_estimate(args):
    cfg = _load_config(args)
    zoom = _zoom(args, cfg.zoom if cfg else None)
    recs = read_records_csv(args.records)
    report, spectrum = estimate_command(recs, zoom, with_baselines=not args.no_baselines)
    _write(args.out_dir / "estimate.json", json.dumps(report, indent=1))
    _write(args.out_dir / "spectrum.csv", spectrum)
    g = report["glosa"]
    print("GLOSA periods (kyr): " + ", ".join(f"{p:.2f}" for p in g["period_kyr"]))
    for name, peaks in report.get("baselines", {}).items():
        if "period_kyr" in peaks:
            print(f"{name} periodogram periods (kyr): " + ", ".join(f"{p:.2f}" for p in peaks["period_kyr"]))
    return EXIT_OK


def cmd_baseline(args):
    zoom = _zoom(args)
    recs = read_records_csv(args.records)
    grid, spectra, peaks = baseline_report(recs, args.components, zoom.omega_max, zoom.standardize)
    _write(args.out_dir / "baseline.json", json.dumps(peaks, indent=1))
    lines = ["omega_rad_per_kyr,mean,stacked"]
    lines += [f"{g!r},{a!r},{b!r}" for g, a, b in zip(grid.tolist(), spectra["mean"].tolist(), spectra["stacked"].tolist())]
    _write(args.out_dir / "baseline_spectrum.csv", "\n".join(lines) + "\n")
    for name, p in peaks.items():
        print(f"{name}: " + (", ".join(f"{x:.2f}" for x in p["period_kyr"]) if "period_kyr" in p else p["error"]))
    return EXIT_OK


def cmd_bounds(args):
    ids, truth, miss, _ = read_truth_json(args.truth)
    recs = read_records_csv(args.patterns, require_values=False)
    if recs.ids != ids:
        raise DataError(f"pattern record ids {recs.ids} do not match truth ids {ids}")
    miss.check(recs)
    rows = bounds_command(recs.times, truth, miss, args.snr_list)
    _write(args.out_dir / "bounds.csv", format_bounds_csv(rows))
    print(format_bounds_csv(rows), end="")
    return EXIT_OK


def cmd_experiment(args):
    if args.config is None:
        raise ConfigError("experiment needs --config")
    cfg = ExperimentConfig.from_file(args.config)
    cfg = replace(cfg, zoom=_zoom(args, cfg.zoom), seed=args.seed if args.seed else cfg.seed,
                  workers=args.workers or cfg.workers)
    try:
        res = run_experiment(cfg)
    except ExperimentFailedError as exc:
        if exc.result is not None:
            exc.result.write(args.out_dir)
        raise
    res.write(args.out_dir)
    print(res.to_csv(), end="")
    return EXIT_OK


def cmd_term_balance(args):
    zoom = _zoom(args)
    terms = term_balance(read_records_csv(args.records), zoom)
    print(json.dumps(terms, indent=1))
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate, "estimate": cmd_estimate, "baseline": cmd_baseline,
    "bounds": cmd_bounds, "experiment": cmd_experiment, "term-balance": cmd_term_balance,
}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ExperimentFailedError, SolverConvergenceError, BoundComputationError) as exc:
        print(f"convergence failure: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except AllBandsPrunedError as exc:
        print(f"estimation failed: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
