"""Shared domain types and elementary signal evaluation.

Times are in kyr and angular frequencies in rad/kyr throughout the
package. Conversion to cyclic frequency or period only happens at the
reporting boundary (see :func:`omega_to_period`).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .exceptions import DataError


def _frozen(a, dtype=float):
    out = np.array(a, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


def wrap_phase(phi):
    """Wrap angles to the half-open interval (-pi, pi]."""
    phi = np.asarray(phi, dtype=float)
    return np.pi - np.mod(np.pi - phi, 2 * np.pi)


def omega_to_frequency(omega):
    return np.asarray(omega, dtype=float) / (2 * np.pi)


def omega_to_period(omega):
    return 2 * np.pi / np.asarray(omega, dtype=float)


@dataclass(frozen=True)
class Record:
    """One irregularly sampled series (e.g. one ice core).

    Parameters
    ----------
    id : str
        Record identifier, unique within a :class:`RecordSet`.
    times : array_like
        Nominal sampling instants in kyr, strictly increasing, finite, >= 0.
    values : array_like
        Measurements, same length as ``times``.
    """

    id: str
    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        t = _frozen(self.times)
        y = _frozen(self.values)
        if t.ndim != 1 or y.ndim != 1:
            raise DataError(f"record {self.id!r}: times and values must be 1-D")
        if t.size != y.size:
            raise DataError(
                f"record {self.id!r}: {t.size} times but {y.size} values"
            )
        if t.size < 2:
            raise DataError(f"record {self.id!r}: need at least 2 samples")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(y))):
            raise DataError(f"record {self.id!r}: non-finite entries")
        if np.any(t < 0):
            raise DataError(f"record {self.id!r}: negative sampling time")
        if np.any(np.diff(t) <= 0):
            raise DataError(f"record {self.id!r}: times not strictly increasing")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", y)

    def __len__(self):
        return self.times.size

    @property
    def span(self):
        return float(self.times[-1] - self.times[0])

    def standardized(self):
        """Zero-mean, unit-variance copy. A constant record is only centered."""
        y = self.values - self.values.mean()
        sd = y.std()
        if sd > 0:
            y = y / sd
        return Record(self.id, self.times, y)

    def with_values(self, values):
        return Record(self.id, self.times, values)


@dataclass(frozen=True)
class RecordSet:
    """An ordered collection of records sharing one underlying spectrum."""

    records: tuple

    def __post_init__(self):
        recs = tuple(self.records)
        if not recs:
            raise DataError("a RecordSet needs at least one record")
        ids = [r.id for r in recs]
        if len(set(ids)) != len(ids):
            raise DataError(f"duplicate record ids: {ids}")
        object.__setattr__(self, "records", recs)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __getitem__(self, i):
        return self.records[i]

    @property
    def ids(self):
        return [r.id for r in self.records]

    @property
    def total_samples(self):
        return sum(len(r) for r in self.records)

    @property
    def times(self):
        return [r.times for r in self.records]

    @property
    def values(self):
        return [r.values for r in self.records]

    def standardized(self):
        return RecordSet(tuple(r.standardized() for r in self.records))


@dataclass(frozen=True)
class SinusoidModel:
    """K shared angular frequencies with per-record amplitudes and phases.

    ``amplitudes`` and ``phases`` are ``(M, K)`` arrays. Phases are wrapped
    to (-pi, pi] on construction.
    """

    omegas: np.ndarray
    amplitudes: np.ndarray
    phases: np.ndarray

    def __post_init__(self):
        w = _frozen(np.atleast_1d(self.omegas))
        rho = np.atleast_2d(np.asarray(self.amplitudes, dtype=float))
        phi = np.atleast_2d(np.asarray(self.phases, dtype=float))
        if w.ndim != 1 or w.size == 0:
            raise ValueError("omegas must be a non-empty vector")
        if rho.shape != phi.shape or rho.shape[1] != w.size:
            raise ValueError(
                f"amplitudes {rho.shape} / phases {phi.shape} do not match K={w.size}"
            )
        if np.any(w <= 0) or np.any(np.diff(w) <= 0):
            raise ValueError("omegas must be positive and strictly increasing")
        if np.any(rho < 0):
            raise ValueError("amplitudes must be non-negative")
        object.__setattr__(self, "omegas", w)
        object.__setattr__(self, "amplitudes", _frozen(rho))
        object.__setattr__(self, "phases", _frozen(wrap_phase(phi)))

    @property
    def n_components(self):
        return self.omegas.size

    @property
    def n_records(self):
        return self.amplitudes.shape[0]

    @classmethod
    def from_periods(cls, periods, amplitudes, phases=None):
        """Build from periods in kyr; components are reordered by frequency."""
        periods = np.asarray(periods, dtype=float)
        omegas = 2 * np.pi / periods
        order = np.argsort(omegas)
        rho = np.atleast_2d(np.asarray(amplitudes, dtype=float))[:, order]
        if phases is None:
            phi = np.zeros_like(rho)
        else:
            phi = np.atleast_2d(np.asarray(phases, dtype=float))[:, order]
        return cls(omegas[order], rho, phi)

    def to_dict(self):
        return {
            "omegas": self.omegas.tolist(),
            "amplitudes": self.amplitudes.tolist(),
            "phases": self.phases.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(d["omegas"], d["amplitudes"], d["phases"])


@dataclass(frozen=True)
class MissamplingField:
    """Per-record sampling-time errors aligned with the record times."""

    offsets: tuple = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "offsets", tuple(_frozen(o) for o in self.offsets))

    @classmethod
    def zeros(cls, records: RecordSet):
        return cls(tuple(np.zeros(len(r)) for r in records))

    def check(self, records: RecordSet):
        if len(self.offsets) != len(records):
            raise ValueError("missampling field does not match the number of records")
        for o, r in zip(self.offsets, records):
            if o.shape != r.times.shape:
                raise ValueError(f"missampling shape mismatch for record {r.id!r}")

    @property
    def is_zero(self):
        return all(not np.any(o) for o in self.offsets)


def evaluate_signal(
    model: SinusoidModel,
    record_index: int,
    times,
    missampling: Optional[Sequence[float]] = None,
) -> np.ndarray:
    """Evaluate the sum of sinusoids of one record.

    Parameters
    ----------
    model : SinusoidModel
    record_index : int
        Row of ``model.amplitudes`` / ``model.phases`` to use.
    times : array_like
        Nominal sampling instants.
    missampling : array_like, optional
        Sampling-time errors added to ``times``. When omitted the model is
        evaluated at the nominal instants.
    """
    if not 0 <= record_index < model.n_records:
        raise ValueError(f"record_index {record_index} out of range")
    t = np.asarray(times, dtype=float)
    if missampling is not None:
        d = np.asarray(missampling, dtype=float)
        if d.shape != t.shape:
            raise ValueError(f"missampling shape {d.shape} != times shape {t.shape}")
        t = t + d
    rho = model.amplitudes[record_index]
    phi = model.phases[record_index]
    arg = t[:, None] * model.omegas[None, :] + phi[None, :]
    return np.cos(arg) @ rho


def snr_db(model: SinusoidModel, record_index: int, noise_var: float) -> float:
    """Per-record SNR in dB: 10 log10(sum_k rho_k^2 / (2 noise_var))."""
    if not noise_var > 0:
        raise ValueError("noise_var must be positive")
    power = float(np.sum(model.amplitudes[record_index] ** 2))
    return 10 * np.log10(power / (2 * noise_var))


def noise_var_for_snr(model: SinusoidModel, record_index: int, snr: float) -> float:
    """Noise variance giving the requested per-record SNR (dB)."""
    power = float(np.sum(model.amplitudes[record_index] ** 2))
    if power <= 0:
        raise ValueError("model has no component with positive amplitude")
    return power / (2 * 10 ** (snr / 10))
