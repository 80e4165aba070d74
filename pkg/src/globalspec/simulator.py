"""Ice-core-like sampling patterns, missampling and noisy multi-record data.

A sampling pattern is modelled as a homogeneous Poisson process up to a
change point ``T_c`` followed by a nonhomogeneous process whose rate is
a binned empirical estimate. All randomness is driven by explicit
``numpy.random.Generator`` objects; :func:`replicate_rng` derives
order-independent generators for Monte Carlo replicates.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.stats import f as fdist
from scipy.stats import norm

from .core import MissamplingField, Record, RecordSet, SinusoidModel, evaluate_signal, noise_var_for_snr

SWAP_CAP = 0.01
TAIL_BINS = 20


@dataclass(frozen=True)
class IntensityModel:
    """Homogeneous head followed by a piecewise-constant tail rate.

    ``change_index`` is the number of samples ``c`` in the head, which
    spans ``(t_first, t_change]``. ``tail_edges`` has one more entry than
    ``tail_rates``; both are empty when no change point was found.
    """

    change_index: int
    t_first: float
    t_change: float
    rate: float
    tail_edges: np.ndarray = field(default_factory=lambda: np.empty(0))
    tail_rates: np.ndarray = field(default_factory=lambda: np.empty(0))
    has_change_point: bool = True
    source: str = ""

    def __post_init__(self):
        if not self.rate > 0:
            raise ValueError("homogeneous rate must be positive")
        if self.change_index < 2:
            raise ValueError("need at least 2 samples in the head")
        if self.t_change <= self.t_first:
            raise ValueError("change point must follow the first sample")
        e = np.asarray(self.tail_edges, dtype=float)
        r = np.asarray(self.tail_rates, dtype=float)
        if e.size and (e.size != r.size + 1 or np.any(np.diff(e) <= 0) or np.any(r < 0)):
            raise ValueError("inconsistent tail rate bins")
        if e.size and not np.isclose(e[0], self.t_change):
            raise ValueError("tail must start at the change point")
        object.__setattr__(self, "tail_edges", e)
        object.__setattr__(self, "tail_rates", r)

    @property
    def t_end(self):
        return float(self.tail_edges[-1]) if self.tail_edges.size else self.t_change

    @property
    def expected_count(self):
        tail = float(np.sum(self.tail_rates * np.diff(self.tail_edges))) if self.tail_edges.size else 0.0
        return self.change_index + tail


def _homogeneous_loglik(gaps_count, duration):
    return gaps_count * np.log(gaps_count / duration) - gaps_count


def _tail_bins(tail, t_change, bins):
    """Equal-count bins over ``(t_change, tail[-1]]``; rate = count / width."""
    n = tail.size
    nb = max(1, min(bins, n))
    cuts = np.round(np.arange(1, nb + 1) * n / nb).astype(int)
    edges = np.concatenate([[t_change], tail[cuts - 1]])
    counts = np.diff(np.concatenate([[0], cuts]))
    keep = np.diff(edges) > 0
    # merge zero-width bins into their successor
    while not np.all(keep):
        j = int(np.flatnonzero(~keep)[0])
        if j + 1 < counts.size:
            counts[j + 1] += counts[j]
        edges = np.delete(edges, j + 1 if j + 1 < edges.size - 1 else j)
        counts = np.delete(counts, j)
        keep = np.diff(edges) > 0
    return edges, counts / np.diff(edges)


def fit_intensity(times, alpha=1e-3, window=10, min_head=10, bins=TAIL_BINS, source="") -> IntensityModel:
    """Fit the change-point sampling model to an observed pattern.

    Scanning ``c`` forward, the mean of the next ``window`` gaps is compared
    with the head's mean gap ``(T_c - T_1) / (c - 1)``. Under a constant
    rate their ratio is F-distributed with ``(2 window, 2 (c - 1))`` degrees
    of freedom; the first two-sided exceedance at level ``alpha`` triggers
    a change. The split is then placed at the likelihood-maximizing index
    near the trigger, the head rate is ``(c - 1) / (T_c - T_1)``, and the
    remaining samples get a binned empirical rate.
    """
    t = np.asarray(times, dtype=float)
    n = t.size
    if n < 10:
        raise ValueError("need at least 10 sampling instants")
    if np.any(np.diff(t) <= 0):
        raise ValueError("times must be strictly increasing")
    trigger = None
    for c in range(min_head, n - window + 1):
        head_gap = (t[c - 1] - t[0]) / (c - 1)
        win_gap = (t[c - 1 + window] - t[c - 1]) / window
        ratio = win_gap / head_gap
        lo, hi = fdist.ppf([alpha / 2, 1 - alpha / 2], 2 * window, 2 * (c - 1))
        if ratio < lo or ratio > hi:
            trigger = c
            break
    if trigger is None:
        return IntensityModel(n, t[0], t[-1], (n - 1) / (t[-1] - t[0]), has_change_point=False, source=source)

    # two-segment likelihood over the whole pattern, split near the trigger
    stop = n - 1
    best, best_ll = trigger, -np.inf
    for j in range(min_head, min(trigger + window, stop)):
        ll = _homogeneous_loglik(j - 1, t[j - 1] - t[0]) + _homogeneous_loglik(stop - j + 1, t[stop] - t[j - 1])
        if ll > best_ll:
            best, best_ll = j, ll
    c = best
    edges, rates = _tail_bins(t[c:], t[c - 1], bins)
    return IntensityModel(c, t[0], t[c - 1], (c - 1) / (t[c - 1] - t[0]), edges, rates, True, source)


def sample_pattern(model: IntensityModel, rng: np.random.Generator):
    """Draw a strictly increasing sampling pattern from ``model``."""
    head = np.sort(rng.uniform(model.t_first, model.t_change, model.change_index))
    parts = [head]
    if model.tail_edges.size:
        lo, hi = model.tail_edges[0], model.tail_edges[-1]
        rmax = model.tail_rates.max()
        if rmax > 0:
            cand = np.sort(rng.uniform(lo, hi, rng.poisson(rmax * (hi - lo))))
            b = np.clip(np.searchsorted(model.tail_edges, cand, side="right") - 1, 0, model.tail_rates.size - 1)
            keep = rng.uniform(size=cand.size) * rmax < model.tail_rates[b]
            parts.append(cand[keep])
    t = np.concatenate(parts)
    t.sort()
    while np.any(np.diff(t) <= 0):
        dup = np.flatnonzero(np.diff(t) <= 0) + 1
        t[dup] += 1e-9
        t.sort()
    return t


def missampling_std(times, swap_cap=SWAP_CAP):
    """Per-sample missampling standard deviation.

    ``d_i`` is the smaller of the two gaps next to sample ``i``; with
    ``sigma_i = d_i / (sqrt(2) z)`` and ``z`` the ``1 - swap_cap`` normal
    quantile, two neighbours trade places with probability below ``swap_cap``.
    """
    if not 0 < swap_cap < 0.5:
        raise ValueError("swap_cap must lie in (0, 0.5)")
    t = np.asarray(times, dtype=float)
    if t.size < 2:
        raise ValueError("need at least 2 samples")
    gaps = np.diff(t)
    if np.any(gaps <= 0):
        raise ValueError("times must be strictly increasing")
    d = np.minimum(np.concatenate([[np.inf], gaps]), np.concatenate([gaps, [np.inf]]))
    return d / (np.sqrt(2) * norm.ppf(1 - swap_cap))


# ------------------------------------------------------------------ data synthesis

BASE_PERIODS = (100.0, 41.0, 23.0, 19.0)
BASE_AMPLITUDES = (1.0, 0.8, 0.6, 0.6)


def default_template():
    return SinusoidModel.from_periods(BASE_PERIODS, [BASE_AMPLITUDES])


@dataclass(frozen=True)
class SimConfig:
    """Simulation settings.

    ``template`` holds the base frequencies and a single row of base
    amplitudes. The noise variance is set from the base amplitudes, so it
    is common to all records of a draw.
    """

    template: SinusoidModel = field(default_factory=default_template)
    amplitude_jitter: float = 0.1
    phase_max: float = np.pi / 5
    swap_cap: float = SWAP_CAP
    snr_list: tuple = (0.0, 5.0, 10.0, 15.0)
    n_records: int = 3
    n_runs: int = 100
    seed: int = 0
    missampling: bool = True

    def __post_init__(self):
        if not 0 < self.swap_cap < 0.5:
            raise ValueError("swap_cap must lie in (0, 0.5)")
        if self.n_runs < 1:
            raise ValueError("n_runs must be >= 1")
        if self.n_records < 1:
            raise ValueError("n_records must be >= 1")
        if self.amplitude_jitter < 0 or self.phase_max < 0:
            raise ValueError("jitter and phase range must be non-negative")
        if self.template.n_records != 1:
            raise ValueError("template must hold one row of base amplitudes")


def replicate_rng(seed, *counters) -> np.random.Generator:
    """Generator for one replicate, independent of the order replicates run in."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(int(c) for c in counters)))


def synthesize(config: SimConfig, patterns: Sequence[IntensityModel], snr_db, rng: np.random.Generator,
               times: Optional[Sequence[np.ndarray]] = None, noise_rng: Optional[np.random.Generator] = None):
    """Draw one multi-record data set.

    Returns ``(records, truth, missampling, noise_var)``. ``snr_db=inf``
    gives noise-free data. Fixed ``times`` replace the pattern draws. With
    ``noise_rng`` the additive noise comes from a separate stream, so one
    ``rng`` state yields the same patterns, amplitudes, phases and
    missampling at every SNR.
    """
    if not patterns and times is None:
        raise ValueError("need at least one sampling pattern")
    M = config.n_records
    base = config.template.amplitudes[0]
    K = base.size
    ts, rho, phi, offs = [], np.empty((M, K)), np.empty((M, K)), []
    for m in range(M):
        t = np.asarray(times[m], dtype=float) if times is not None else sample_pattern(patterns[m % len(patterns)], rng)
        rho[m] = np.maximum(base + rng.normal(size=K) * config.amplitude_jitter * base, 0.0)
        phi[m] = rng.uniform(0.0, config.phase_max, K)
        if config.missampling:
            offs.append(rng.normal(size=t.size) * missampling_std(t, config.swap_cap))
        else:
            offs.append(np.zeros(t.size))
        ts.append(t)
    truth = SinusoidModel(config.template.omegas, rho, phi)
    noise_var = 0.0 if np.isinf(snr_db) and snr_db > 0 else noise_var_for_snr(config.template, 0, snr_db)
    recs = []
    for m, t in enumerate(ts):
        y = evaluate_signal(truth, m, t, offs[m])
        if noise_var > 0:
            y = y + (noise_rng or rng).normal(scale=np.sqrt(noise_var), size=t.size)
        recs.append(Record(f"sim{m + 1}", t, y))
    return RecordSet(tuple(recs)), truth, MissamplingField(tuple(offs)), noise_var


# ------------------------------------------------------------------ reference patterns


def _reference_pattern(seed, head_end, head_rate, t_end, tail_rate_start, tail_rate_end):
    """Deterministic ice-core-like pattern: dense uniform head, thinning tail."""
    rng = np.random.default_rng(seed)
    head = np.sort(rng.uniform(0.2, head_end, int(round(head_rate * head_end))))
    lmax = max(tail_rate_start, tail_rate_end)
    cand = np.sort(rng.uniform(head_end, t_end, rng.poisson(lmax * (t_end - head_end))))
    rate = tail_rate_start + (tail_rate_end - tail_rate_start) * (cand - head_end) / (t_end - head_end)
    tail = cand[rng.uniform(size=cand.size) * lmax < rate]
    return np.concatenate([head, tail])


REFERENCE_SPECS = {
    "vostok_like": dict(seed=11, head_end=110.0, head_rate=1.6, t_end=420.0, tail_rate_start=0.6, tail_rate_end=0.25),
    "dome_like": dict(seed=12, head_end=90.0, head_rate=1.3, t_end=400.0, tail_rate_start=0.7, tail_rate_end=0.3),
    "coastal_like": dict(seed=13, head_end=130.0, head_rate=1.0, t_end=410.0, tail_rate_start=0.8, tail_rate_end=0.35),
}


def reference_pattern(name):
    """Built-in synthetic sampling pattern (times in kyr)."""
    try:
        return _reference_pattern(**REFERENCE_SPECS[name])
    except KeyError:
        raise ValueError(f"unknown reference pattern {name!r}; choose from {sorted(REFERENCE_SPECS)}") from None


def reference_intensities():
    """Intensity models fitted to the built-in patterns."""
    return [fit_intensity(reference_pattern(n), source=n) for n in REFERENCE_SPECS]


def intensities_from_records(records: RecordSet):
    return [fit_intensity(r.times, source=r.id) for r in records]


__all__ = [
    "IntensityModel", "SimConfig", "fit_intensity", "sample_pattern", "missampling_std",
    "synthesize", "replicate_rng", "reference_pattern", "reference_intensities",
    "intensities_from_records", "default_template",
]
