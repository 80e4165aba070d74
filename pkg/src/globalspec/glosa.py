"""Coarse-to-fine global line-spectrum estimation.

:func:`run_glosa` solves the joint program on a uniform band grid,
keeps the bands whose power exceeds ``tau``, splits them, and repeats.
The surviving bands of the last level are merged into contiguous
regions, one frequency is fitted per region by a joint nonlinear least
squares search (:func:`gridless_refine`), and amplitudes are read out by
linear least squares (:func:`amplitude_readout`).
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .core import RecordSet
from .dictionary import BandGrid, build_wideband, narrowband_matrix, refine_grid
from .exceptions import AllBandsPrunedError, SolverConvergenceError
from .jointsolver import PenaltyConfig, SolverSettings, band_power, solve_joint

logger = logging.getLogger(__name__)

GOLDEN = (np.sqrt(5) - 1) / 2


@dataclass(frozen=True)
class ZoomConfig:
    """Zooming parameters.

    ``subdivisions`` is the number of sub-bands per active band at each
    refinement step; an int applies to every step, a sequence gives one
    value per step (length ``zoom_steps - 1``). Surviving bands separated
    by at most ``merge_gap`` rad/kyr are searched as one region; ``None``
    uses the Rayleigh resolution ``2 pi / span`` of the longest record.
    """

    zoom_steps: int = 4
    initial_bands: int = 16
    subdivisions: Union[int, Sequence[int]] = 4
    tau: float = 1e-5
    omega_max: float = 2 * np.pi / 8
    penalties: PenaltyConfig = PenaltyConfig()
    solver: SolverSettings = SolverSettings()
    standardize: bool = True
    fit_offset: bool = True
    time_reference: Union[str, float] = "center"
    merge_gap: Optional[float] = None

    def __post_init__(self):
        if self.zoom_steps < 1:
            raise ValueError("zoom_steps must be >= 1")
        if self.initial_bands < 2:
            raise ValueError("initial_bands must be >= 2")
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if self.omega_max <= 0:
            raise ValueError("omega_max must be positive")
        if self.merge_gap is not None and self.merge_gap < 0:
            raise ValueError("merge_gap must be non-negative")
        if any(c < 2 for c in self.subdivision_schedule()):
            raise ValueError("subdivisions must be >= 2")

    def subdivision_schedule(self):
        n = self.zoom_steps - 1
        if isinstance(self.subdivisions, (int, np.integer)):
            return [int(self.subdivisions)] * n
        sched = [int(c) for c in self.subdivisions]
        if len(sched) != n:
            raise ValueError(f"need {n} subdivision counts, got {len(sched)}")
        return sched

    @property
    def final_band_width(self):
        return self.omega_max / (self.initial_bands * int(np.prod(self.subdivision_schedule() or [1])))


@dataclass
class ZoomLevel:
    grid: BandGrid
    powers: np.ndarray
    active: np.ndarray
    iterations: int
    converged: bool
    objective: float


@dataclass
class GridlessResult:
    omegas: np.ndarray
    objective: float
    projected_gradient: float
    sweeps: int
    rank_deficient: bool


@dataclass
class AmplitudeEstimate:
    """Per-record amplitudes/phases ``(M, K)`` and their cross-record mean."""

    amplitudes: np.ndarray
    phases: np.ndarray
    offsets: Optional[np.ndarray]

    @property
    def global_amplitudes(self):
        return self.amplitudes.mean(axis=0)


@dataclass
class GlobalEstimate:
    omegas: np.ndarray
    amplitudes: AmplitudeEstimate
    raw_amplitudes: AmplitudeEstimate
    regions: BandGrid
    levels: list = field(default_factory=list)
    refine: Optional[GridlessResult] = None

    @property
    def global_amplitudes(self):
        return self.amplitudes.global_amplitudes

    @property
    def periods(self):
        return 2 * np.pi / self.omegas

    def strongest(self, k):
        """Frequencies of the ``k`` components with largest global amplitude, ascending."""
        order = np.argsort(self.global_amplitudes)[::-1][:k]
        return np.sort(self.omegas[order])


# ---------------------------------------------------------------- gridless search


def _basis(times, omegas, fit_offset):
    A = narrowband_matrix(times, omegas) if len(omegas) else np.empty((len(times), 0))
    if fit_offset:
        A = np.hstack([A, np.ones((len(times), 1))])
    return A


def _lstsq(A, y, rcond=1e-10):
    coef, _, rank, _ = np.linalg.lstsq(A, y, rcond=rcond)
    return coef, rank < A.shape[1]


def projection_residual(records, omegas, fit_offset=False):
    """Joint residual ``sum_m ||y_m - P_{A_m(omegas)} y_m||^2`` and a rank flag."""
    total = 0.0
    deficient = False
    for r in records:
        A = _basis(r.times, omegas, fit_offset)
        coef, bad = _lstsq(A, r.values)
        res = r.values - A @ coef
        total += float(res @ res)
        deficient |= bad
    return total, deficient


def _residual_gradient(records, omegas, fit_offset):
    """Gradient of :func:`projection_residual` w.r.t. the frequencies.

    With ``r`` orthogonal to the column space, d/dw ||r||^2 = -2 r^T (dA/dw) coef.
    """
    g = np.zeros(len(omegas))
    for r in records:
        t = r.times
        A = _basis(t, omegas, fit_offset)
        coef, _ = _lstsq(A, r.values)
        res = r.values - A @ coef
        a, b = coef[0 : 2 * len(omegas) : 2], coef[1 : 2 * len(omegas) : 2]
        arg = t[:, None] * omegas[None, :]
        dA_coef = t[:, None] * (-a[None, :] * np.sin(arg) + b[None, :] * np.cos(arg))
        g += -2 * res @ dA_coef
    return g


class _CoordinateScanner:
    """Residual as a function of one frequency with the others held fixed.

    The fixed columns are projected out once per record; the candidate
    cos/sin pair then enters through a 2x2 normal system, which makes a
    vectorized scan over many candidates cheap.
    """

    def __init__(self, records, omegas, k, fit_offset):
        others = np.delete(omegas, k)
        self.parts = []
        for r in records:
            B = _basis(r.times, others, fit_offset)
            if B.shape[1]:
                Q, R = np.linalg.qr(B)
                keep = np.abs(np.diag(R)) > 1e-10 * max(1.0, np.abs(R).max())
                Q = Q[:, keep]
            else:
                Q = np.empty((len(r.times), 0))
            y_perp = r.values - Q @ (Q.T @ r.values)
            self.parts.append((r.times, Q, y_perp))

    def __call__(self, cand):
        cand = np.atleast_1d(np.asarray(cand, dtype=float))
        total = np.zeros(cand.size)
        degenerate = np.zeros(cand.size, dtype=bool)
        for t, Q, yp in self.parts:
            arg = t[:, None] * cand[None, :]
            c, s = np.cos(arg), np.sin(arg)
            if Q.shape[1]:
                c = c - Q @ (Q.T @ c)
                s = s - Q @ (Q.T @ s)
            cc = np.einsum("ij,ij->j", c, c)
            ss = np.einsum("ij,ij->j", s, s)
            cs = np.einsum("ij,ij->j", c, s)
            cy = c.T @ yp
            sy = s.T @ yp
            det = cc * ss - cs**2
            scale = np.maximum(cc * ss, 1e-300)
            ok = det > 1e-10 * scale
            with np.errstate(divide="ignore", invalid="ignore"):
                full = (ss * cy**2 - 2 * cs * cy * sy + cc * sy**2) / det
                # rank-1 fallback: project on the stronger column only
                single = np.where(cc >= ss, cy**2 / np.maximum(cc, 1e-300), sy**2 / np.maximum(ss, 1e-300))
            explained = np.where(ok, full, single)
            degenerate |= ~ok
            total += float(yp @ yp) - explained
        return total, degenerate


def _golden_section(f, lo, hi, tol):
    a, b = lo, hi
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = f(d)
    return (c, fc) if fc <= fd else (d, fd)


def _bounds(bands):
    lo = np.maximum(bands.starts, 1e-9 * bands.ends)
    return lo, bands.ends.copy()


def _projected_gradient(g, w, lo, hi):
    pg = g.copy()
    pg[(w <= lo) & (g > 0)] = 0.0
    pg[(w >= hi) & (g < 0)] = 0.0
    return pg


def gridless_refine(records: RecordSet, bands: BandGrid, fit_offset=False, grid_points=200,
                    max_sweeps=20, move_tol=1e-10, gradient_tol=1e-9, initial=None) -> GridlessResult:
    """One frequency per band minimizing the joint projection residual.

    Coordinate descent: each frequency is located by a ``grid_points`` scan
    of its band followed by golden-section search between the neighbours of
    the best grid point; sweeps stop when no frequency moves more than
    ``move_tol``. A projected Newton polish then drives the box-projected
    gradient, taken with respect to ``omega * t_scale`` (``t_scale`` being
    the largest sampling time), below ``gradient_tol``.
    """
    lo, hi = _bounds(bands)
    K = len(lo)
    w = 0.5 * (lo + hi) if initial is None else np.clip(np.asarray(initial, float), lo, hi)
    t_scale = max(float(np.max(np.abs(r.times))) for r in records)
    first = initial is None
    sweeps = 0
    degenerate = False
    for sweeps in range(1, max_sweeps + 1):
        max_move = 0.0
        for k in range(K):
            scan = _CoordinateScanner(records, w, k, fit_offset)
            cand = np.linspace(lo[k], hi[k], grid_points)
            vals, deg = scan(cand)
            degenerate |= bool(deg.any())
            j = int(np.argmin(vals))
            # keep the current point if the scan offers nothing better
            cur_val = scan(w[k])[0][0] if not first else np.inf
            if vals[j] < cur_val:
                a, b = cand[max(j - 1, 0)], cand[min(j + 1, grid_points - 1)]
            else:
                step = (hi[k] - lo[k]) / (grid_points - 1)
                a, b = max(lo[k], w[k] - step), min(hi[k], w[k] + step)
            new, _ = _golden_section(lambda x: scan(x)[0][0], a, b, tol=1e-13 * max(1.0, hi[k]))
            if scan(new)[0][0] > min(vals[j], cur_val):
                new = cand[j] if vals[j] < cur_val else w[k]
            max_move = max(max_move, abs(new - w[k]))
            w[k] = new
        first = False
        if max_move < move_tol:
            break

    w, pg = _newton_polish(records, w, lo, hi, fit_offset, t_scale, gradient_tol)
    obj, deficient = projection_residual(records, w, fit_offset)
    flag = degenerate or deficient
    if flag:
        warnings.warn("near-coalescing frequencies: regularized pseudoinverse used", RuntimeWarning)
    return GridlessResult(w, obj, pg, sweeps, flag)


def _newton_polish(records, w, lo, hi, fit_offset, t_scale, gradient_tol, max_iter=30):
    """Projected Newton steps in scaled coordinates ``u = w * t_scale``."""
    w = w.copy()
    f = projection_residual(records, w, fit_offset)[0]
    pg_norm = np.inf
    for _ in range(max_iter):
        g = _residual_gradient(records, w, fit_offset) / t_scale
        pg = _projected_gradient(g, w, lo, hi)
        pg_norm = float(np.linalg.norm(pg))
        if pg_norm <= gradient_tol:
            break
        free = pg != 0
        h = 1e-7 / t_scale
        H = np.zeros((len(w), len(w)))
        for k in range(len(w)):
            e = np.zeros(len(w))
            e[k] = h
            H[:, k] = (
                _residual_gradient(records, w + e, fit_offset) - _residual_gradient(records, w - e, fit_offset)
            ) / (2 * h * t_scale)
        H = 0.5 * (H + H.T) / t_scale
        Hf = H[np.ix_(free, free)]
        try:
            step_u = -np.linalg.solve(Hf, g[free])
            if step_u @ g[free] >= 0:
                raise np.linalg.LinAlgError
        except np.linalg.LinAlgError:
            step_u = -g[free] / max(np.abs(np.diag(Hf)).max(), 1e-12)
        step = np.zeros(len(w))
        step[free] = step_u / t_scale
        accepted = False
        for _ in range(40):
            cand = np.clip(w + step, lo, hi)
            fc = projection_residual(records, cand, fit_offset)[0]
            if fc < f:
                accepted = True
                break
            # near the optimum decreases drown in round-off; accept a flat
            # step if it shrinks the gradient
            if fc <= f * (1 + 1e-13):
                gc = _projected_gradient(_residual_gradient(records, cand, fit_offset) / t_scale, cand, lo, hi)
                if np.linalg.norm(gc) < pg_norm:
                    accepted = True
                    break
            step /= 2
        if not accepted:
            break
        w, f = cand, min(f, fc)
    return w, pg_norm


# ---------------------------------------------------------------- amplitudes


def amplitude_readout(records: RecordSet, omegas, fit_offset=False) -> AmplitudeEstimate:
    """Least-squares amplitudes and phases at fixed frequencies.

    With cos/sin coefficients ``(a, b)`` the component is
    ``rho cos(w t + phi)`` where ``rho = hypot(a, b)`` and ``phi = atan2(-b, a)``.
    """
    w = np.asarray(omegas, dtype=float)
    if np.unique(w).size != w.size:
        raise ValueError("frequencies must be distinct")
    K = w.size
    rho = np.empty((len(records), K))
    phi = np.empty((len(records), K))
    offs = np.empty(len(records)) if fit_offset else None
    for m, r in enumerate(records):
        A = _basis(r.times, w, fit_offset)
        if A.shape[1] > len(r):
            raise ValueError(
                f"record {r.id!r}: {A.shape[1]} coefficients but only {len(r)} samples"
            )
        coef, _ = _lstsq(A, r.values)
        a, b = coef[0 : 2 * K : 2], coef[1 : 2 * K : 2]
        rho[m] = np.hypot(a, b)
        phi[m] = np.arctan2(-b, a)
        if fit_offset:
            offs[m] = coef[-1]
    return AmplitudeEstimate(rho, phi, offs)


# ---------------------------------------------------------------- driver


def run_glosa(records: RecordSet, config: ZoomConfig = ZoomConfig()) -> GlobalEstimate:
    """Estimate the shared line spectrum of ``records``.

    Raises
    ------
    AllBandsPrunedError
        If no band exceeds ``config.tau`` at some level.
    """
    recs = records.standardized() if config.standardize else records
    grid = BandGrid.uniform(config.omega_max, config.initial_bands)
    schedule = config.subdivision_schedule()
    levels = []
    active = None
    for z in range(config.zoom_steps):
        dicts = build_wideband(recs, grid, config.time_reference)
        try:
            sol = solve_joint(recs, dicts, config.penalties, config.solver)
        except SolverConvergenceError as exc:
            logger.warning("zoom level %d: %s; using last iterate", z + 1, exc)
            sol = exc.best
        powers = band_power(sol)
        active = np.flatnonzero(powers > config.tau)
        levels.append(ZoomLevel(grid, powers, active, sol.iterations, sol.converged, sol.objective))
        if active.size == 0:
            raise AllBandsPrunedError(z + 1, grid, powers, config.tau)
        if z < config.zoom_steps - 1:
            grid = refine_grid(grid, active, schedule[z])

    gap = config.merge_gap
    if gap is None:
        gap = 2 * np.pi / max(r.span for r in recs)
    regions = grid.subset(active).merged(gap)
    refined = gridless_refine(recs, regions, fit_offset=config.fit_offset)
    amps = amplitude_readout(recs, refined.omegas, config.fit_offset)
    raw = amplitude_readout(records, refined.omegas, config.fit_offset) if config.standardize else amps
    return GlobalEstimate(refined.omegas, amps, raw, regions, levels, refined)
