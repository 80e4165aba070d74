"""Periodogram baselines: Lomb-Scargle, mean and stacked forms, peak picking."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Record, RecordSet
from .exceptions import NotEnoughPeaksError

METHODS = ("lomb_scargle", "mean", "stacked")
MAX_GRID = 100_000
_CHUNK = 2048


@dataclass(frozen=True)
class PeriodogramEstimate:
    """Power on a strictly increasing grid of angular frequencies (rad/kyr)."""

    grid: np.ndarray
    power: np.ndarray
    method: str

    def __post_init__(self):
        g = np.array(self.grid, dtype=float, ndmin=1)
        p = np.array(self.power, dtype=float, ndmin=1)
        if g.shape != p.shape or g.ndim != 1:
            raise ValueError("grid and power must be vectors of equal length")
        if np.any(np.diff(g) <= 0):
            raise ValueError("grid must be strictly increasing")
        if not np.all(np.isfinite(p)) or np.any(p < 0):
            raise ValueError("powers must be finite and non-negative")
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        g.setflags(write=False)
        p.setflags(write=False)
        object.__setattr__(self, "grid", g)
        object.__setattr__(self, "power", p)

    def scaled(self):
        """Copy with peak power 1 (display only)."""
        top = self.power.max()
        return PeriodogramEstimate(self.grid, self.power / top if top > 0 else self.power, self.method)


def _check_grid(grid):
    g = np.array(grid, dtype=float, ndmin=1)
    if g.ndim != 1 or g.size == 0:
        raise ValueError("grid must be a non-empty vector")
    if np.any(g <= 0):
        raise ValueError("Lomb-Scargle grid must be strictly positive (normalization undefined at 0)")
    if np.any(np.diff(g) <= 0):
        raise ValueError("grid must be strictly increasing")
    return g


def _ls_power(t, y, w):
    """Classical Lomb-Scargle with the per-frequency time offset tau."""
    out = np.empty(w.size)
    for i in range(0, w.size, _CHUNK):
        wc = w[i : i + _CHUNK]
        two = 2 * t[:, None] * wc[None, :]
        wtau = 0.5 * np.arctan2(np.sin(two).sum(0), np.cos(two).sum(0))
        arg = t[:, None] * wc[None, :] - wtau[None, :]
        c, s = np.cos(arg), np.sin(arg)
        yc, ys = y @ c, y @ s
        cc, ss = (c * c).sum(0), (s * s).sum(0)
        # a vanishing quadrature sum means the matching y-projection is also 0
        tiny = 1e-12 * t.size
        pc = np.where(cc > tiny, yc**2 / np.where(cc > tiny, cc, 1.0), 0.0)
        ps = np.where(ss > tiny, ys**2 / np.where(ss > tiny, ss, 1.0), 0.0)
        out[i : i + _CHUNK] = 0.5 * (pc + ps)
    return out


def lomb_scargle(record: Record, grid) -> PeriodogramEstimate:
    """Lomb-Scargle power of one record's values (no centering applied here)."""
    g = _check_grid(grid)
    return PeriodogramEstimate(g, _ls_power(record.times, record.values, g), "lomb_scargle")


def mean_periodogram(records: RecordSet, grid, standardize=True) -> PeriodogramEstimate:
    """Pointwise mean of per-record periodograms."""
    g = _check_grid(grid)
    recs = records.standardized() if standardize else records
    p = np.mean([_ls_power(r.times, r.values, g) for r in recs], axis=0)
    return PeriodogramEstimate(g, p, "mean")


def stacked_periodogram(records: RecordSet, grid, standardize=True) -> PeriodogramEstimate:
    """Periodogram of all records merged into one time-sorted series."""
    g = _check_grid(grid)
    recs = records.standardized() if standardize else records
    t = np.concatenate([r.times for r in recs])
    y = np.concatenate([r.values for r in recs])
    order = np.argsort(t, kind="stable")
    return PeriodogramEstimate(g, _ls_power(t[order], y[order], g), "stacked")


def default_grid(records: RecordSet, omega_max=2 * np.pi / 8, oversample=4, max_points=MAX_GRID):
    """Uniform grid with spacing ``2 pi / (oversample * longest span)`` up to ``omega_max``."""
    span = max(r.span for r in records)
    step = 2 * np.pi / (oversample * span)
    n = min(int(np.floor(omega_max / step)), max_points)
    if n < 1:
        raise ValueError("omega_max below one grid step")
    return np.linspace(omega_max / n, omega_max, n) if n == max_points else step * np.arange(1, n + 1)


def local_maxima(power):
    """Indices of strict interior local maxima."""
    p = np.asarray(power)
    return np.flatnonzero((p[1:-1] > p[:-2]) & (p[1:-1] > p[2:])) + 1


def pick_peaks(est: PeriodogramEstimate, K: int):
    """Frequencies of the ``K`` largest strict local maxima, ascending."""
    if K < 1:
        raise ValueError("K must be >= 1")
    idx = local_maxima(est.power)
    if idx.size < K:
        raise NotEnoughPeaksError(K, est.grid[idx])
    top = idx[np.argsort(est.power[idx], kind="stable")[::-1][:K]]
    return np.sort(est.grid[top])
