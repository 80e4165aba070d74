"""Integrated wideband dictionaries and real narrowband design matrices.

Only non-negative frequency bands are materialized. For real data the
atom of the mirrored band is the complex conjugate of the positive one,
so a real reconstruction is ``2 Re(D @ beta)`` over the positive half.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import RecordSet
from .exceptions import NoActiveBandsError


@dataclass(frozen=True)
class BandGrid:
    """Sorted, pairwise disjoint frequency bands ``[starts[c], ends[c]]`` (rad/kyr)."""

    starts: np.ndarray
    ends: np.ndarray

    def __post_init__(self):
        s = np.array(self.starts, dtype=float, ndmin=1)
        e = np.array(self.ends, dtype=float, ndmin=1)
        if s.shape != e.shape or s.ndim != 1:
            raise ValueError("starts and ends must be vectors of equal length")
        if s.size == 0:
            raise ValueError("a BandGrid needs at least one band")
        if np.any(s < 0):
            raise ValueError("band frequencies must be non-negative")
        if np.any(e <= s):
            raise ValueError("every band needs end > start (zero-width bands rejected)")
        if np.any(s[1:] < e[:-1]):
            raise ValueError("bands must be sorted and disjoint")
        s.setflags(write=False)
        e.setflags(write=False)
        object.__setattr__(self, "starts", s)
        object.__setattr__(self, "ends", e)

    @classmethod
    def uniform(cls, omega_max, count, omega_min=0.0):
        edges = np.linspace(omega_min, omega_max, count + 1)
        return cls(edges[:-1], edges[1:])

    def __len__(self):
        return self.starts.size

    @property
    def count(self):
        return self.starts.size

    @property
    def widths(self):
        return self.ends - self.starts

    @property
    def centers(self):
        return 0.5 * (self.starts + self.ends)

    def subset(self, index):
        index = np.asarray(index)
        return BandGrid(self.starts[index], self.ends[index])

    def merged(self, gap=0.0):
        """Merge bands into regions, bridging gaps of at most ``gap``."""
        s, e = [self.starts[0]], [self.ends[0]]
        for a, b in zip(self.starts[1:], self.ends[1:]):
            if a - e[-1] <= gap or np.isclose(a, e[-1], rtol=1e-12, atol=1e-15):
                e[-1] = b
            else:
                s.append(a)
                e.append(b)
        return BandGrid(s, e)

    def contains(self, omega):
        """Index of the band containing ``omega`` or -1."""
        hit = np.flatnonzero((self.starts <= omega) & (omega <= self.ends))
        return int(hit[0]) if hit.size else -1


@dataclass(frozen=True)
class WidebandDictionary:
    """Band-integrated complex atoms for one record, shape ``(N_m, C)``."""

    record_id: str
    grid: BandGrid
    matrix: np.ndarray

    def normalized(self):
        """Atoms divided by band width (band-averaged phasors, modulus <= 1)."""
        return self.matrix / self.grid.widths[None, :]

    def unit_normalized(self):
        """Atoms scaled to unit Euclidean norm (all-zero columns left as is)."""
        norms = np.linalg.norm(self.matrix, axis=0)
        return self.matrix / np.where(norms > 0, norms, 1.0)[None, :]


@dataclass(frozen=True)
class NarrowbandMatrix:
    """Real design matrix ``[cos(w1 t), sin(w1 t), cos(w2 t), ...]`` for one record."""

    record_id: str
    omegas: np.ndarray
    matrix: np.ndarray


def band_integrals(times, starts, ends):
    """Closed-form ``int_{s}^{e} exp(i w t) dw`` for every (t, band) pair."""
    t = np.asarray(times, dtype=float)[:, None]
    s = np.asarray(starts, dtype=float)[None, :]
    e = np.asarray(ends, dtype=float)[None, :]
    width = e - s
    # (e^{iet} - e^{ist}) / (it) = width * e^{i c t} * sinc(width t / 2), with
    # np.sinc handling t = 0 exactly and avoiding cancellation for small t.
    center = 0.5 * (s + e)
    return width * np.exp(1j * center * t) * np.sinc(width * t / (2 * np.pi))


def build_wideband(records: RecordSet, grid: BandGrid, time_reference=0.0):
    """Wideband dictionaries for every record on a common band grid.

    ``time_reference`` is subtracted from the sampling times before
    integration: a number, or ``"center"`` for each record's mid-span. An
    atom's envelope is a sinc pulse centered on the reference, so centering
    spreads it over the whole record.
    """
    out = []
    for r in records:
        if isinstance(time_reference, str):
            if time_reference != "center":
                raise ValueError(f"unknown time reference {time_reference!r}")
            t0 = 0.5 * (r.times[0] + r.times[-1])
        else:
            t0 = float(time_reference)
        out.append(WidebandDictionary(r.id, grid, band_integrals(r.times - t0, grid.starts, grid.ends)))
    return out


def narrowband_matrix(times, omegas):
    t = np.asarray(times, dtype=float)[:, None]
    w = np.asarray(omegas, dtype=float)[None, :]
    arg = t * w
    out = np.empty((t.shape[0], 2 * w.shape[1]))
    out[:, 0::2] = np.cos(arg)
    out[:, 1::2] = np.sin(arg)
    return out


def build_narrowband(records: RecordSet, omegas):
    """Narrowband cos/sin design matrices at candidate frequencies."""
    w = np.atleast_1d(np.asarray(omegas, dtype=float))
    if np.any(w <= 0):
        raise ValueError("narrowband frequencies must be strictly positive")
    if np.unique(w).size != w.size:
        raise ValueError("duplicate narrowband frequencies")
    return [NarrowbandMatrix(r.id, w.copy(), narrowband_matrix(r.times, w)) for r in records]


def refine_grid(parent: BandGrid, active, subbands_per_band: int) -> BandGrid:
    """Split each active band into ``subbands_per_band`` equal contiguous pieces."""
    active = np.unique(np.asarray(active, dtype=int).ravel())
    if active.size == 0:
        raise NoActiveBandsError("no active bands")
    if subbands_per_band < 2:
        raise ValueError("subbands_per_band must be >= 2")
    s = parent.starts[active][:, None]
    w = parent.widths[active][:, None]
    k = np.arange(subbands_per_band)[None, :]
    starts = s + k * w / subbands_per_band
    ends = s + (k + 1) * w / subbands_per_band
    # keep the parent's exact outer edges
    ends[:, -1] = parent.ends[active]
    return BandGrid(starts.ravel(), ends.ravel())
