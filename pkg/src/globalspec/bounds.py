"""Misspecified and classical Cramer-Rao bounds for the sum-of-sinusoids model.

The fitted model evaluates ``mu_t = sum_k rho_k cos(w_k t + phi_k)`` at the
nominal times while the data were generated at ``t + Delta_t``. The
parameter vector is packed as ``[w (K) | rho^(1) .. rho^(M) | phi^(1) .. phi^(M)]``.

Typical use::

    report = compute_bounds(times, truth, missampling, noise_var)
    report.lb_freq.sum()
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import MissamplingField, SinusoidModel, evaluate_signal, wrap_phase
from .exceptions import BoundComputationError

# ------------------------------------------------------------------ packing


def pack(model: SinusoidModel) -> np.ndarray:
    return np.concatenate([model.omegas, model.amplitudes.ravel(), model.phases.ravel()])


def _split(theta, K, M):
    theta = np.asarray(theta, dtype=float)
    if theta.size != K + 2 * K * M:
        raise ValueError(f"theta has {theta.size} entries, expected {K + 2 * K * M}")
    w = theta[:K]
    rho = theta[K : K + K * M].reshape(M, K)
    phi = theta[K + K * M :].reshape(M, K)
    return w, rho, phi


def unpack(theta, K, M) -> SinusoidModel:
    """Inverse of :func:`pack`; negative amplitudes are flipped into the phase."""
    w, rho, phi = _split(theta, K, M)
    neg = rho < 0
    rho = np.abs(rho)
    phi = np.where(neg, phi + np.pi, phi)
    order = np.argsort(w)
    return SinusoidModel(w[order], rho[:, order], phi[:, order])


def parameter_names(K, M):
    names = [f"omega[{k}]" for k in range(K)]
    names += [f"rho[{m}][{k}]" for m in range(M) for k in range(K)]
    names += [f"phi[{m}][{k}]" for m in range(M) for k in range(K)]
    return names


def _index(K, M):
    """Columns of omega_k, rho_k^(m), phi_k^(m) in the packed vector."""
    iw = np.arange(K)
    irho = K + np.arange(M * K).reshape(M, K)
    iphi = K + M * K + np.arange(M * K).reshape(M, K)
    return iw, irho, iphi


# ------------------------------------------------------------------ model and derivatives


def model_mean(theta, times: Sequence[np.ndarray], K, M):
    """Per-record mean vectors ``mu^(m)`` at the nominal times."""
    w, rho, phi = _split(theta, K, M)
    return [np.cos(np.outer(t, w) + phi[m]) @ rho[m] for m, t in enumerate(times)]


def mean_gradient(theta, times, K, M):
    """Stacked Jacobian ``d mu / d theta`` of shape ``(N, P)``."""
    w, rho, phi = _split(theta, K, M)
    iw, irho, iphi = _index(K, M)
    P = theta.size if hasattr(theta, "size") else len(theta)
    blocks = []
    for m, t in enumerate(times):
        arg = np.outer(t, w) + phi[m]
        c, s = np.cos(arg), np.sin(arg)
        J = np.zeros((t.size, P))
        J[:, iw] = -rho[m] * t[:, None] * s
        J[:, irho[m]] = c
        J[:, iphi[m]] = -rho[m] * s
        blocks.append(J)
    return np.vstack(blocks)


def mean_hessian(theta, times, K, M):
    """Per-sample Hessians ``d^2 mu_t / d theta^2`` of shape ``(N, P, P)``."""
    w, rho, phi = _split(theta, K, M)
    iw, irho, iphi = _index(K, M)
    P = len(np.asarray(theta))
    out = []
    for m, t in enumerate(times):
        arg = np.outer(t, w) + phi[m]
        c, s = np.cos(arg), np.sin(arg)
        H = np.zeros((t.size, P, P))
        for k in range(K):
            a, r, p = iw[k], irho[m, k], iphi[m, k]
            H[:, a, a] = -rho[m, k] * t**2 * c[:, k]
            H[:, a, r] = H[:, r, a] = -t * s[:, k]
            H[:, a, p] = H[:, p, a] = -rho[m, k] * t * c[:, k]
            H[:, r, p] = H[:, p, r] = -s[:, k]
            H[:, p, p] = -rho[m, k] * c[:, k]
        out.append(H)
    return np.concatenate(out)


def weighted_hessian_sum(theta, times, weights, K, M):
    """``sum_t weights_t * d^2 mu_t`` without forming the per-sample stack."""
    w, rho, phi = _split(theta, K, M)
    iw, irho, iphi = _index(K, M)
    P = len(np.asarray(theta))
    S = np.zeros((P, P))
    for m, (t, q) in enumerate(zip(times, weights)):
        arg = np.outer(t, w) + phi[m]
        c, s = np.cos(arg), np.sin(arg)
        for k in range(K):
            a, r, p = iw[k], irho[m, k], iphi[m, k]
            S[a, a] += -rho[m, k] * np.sum(q * t**2 * c[:, k])
            v = -np.sum(q * t * s[:, k])
            S[a, r] += v
            S[r, a] += v
            v = -rho[m, k] * np.sum(q * t * c[:, k])
            S[a, p] += v
            S[p, a] += v
            v = -np.sum(q * s[:, k])
            S[r, p] += v
            S[p, r] += v
            S[p, p] += -rho[m, k] * np.sum(q * c[:, k])
    return S


# ------------------------------------------------------------------ divergence


def true_signal(times, truth: SinusoidModel, missampling: MissamplingField):
    """Noise-free data ``s^(m)`` at the perturbed instants."""
    return [evaluate_signal(truth, m, t, missampling.offsets[m]) for m, t in enumerate(times)]


def sigma_eps_sq(waveform_error_ss, N, noise_var):
    """Pseudo-true noise variance: ``noise_var + waveform_error_ss / N``."""
    if waveform_error_ss < 0 or noise_var < 0:
        raise ValueError("inputs must be non-negative")
    if N <= 0:
        raise ValueError("N must be positive")
    return noise_var + waveform_error_ss / N


def kld(times, truth: SinusoidModel, missampling: MissamplingField, noise_var,
        candidate: SinusoidModel, candidate_var) -> float:
    """Divergence from the true Gaussian data law to the fitted one."""
    if noise_var <= 0 or candidate_var <= 0:
        raise ValueError("variances must be positive")
    s = true_signal(times, truth, missampling)
    mu = [evaluate_signal(candidate, m, t) for m, t in enumerate(times)]
    ss = float(sum(np.sum((a - b) ** 2) for a, b in zip(s, mu)))
    N = sum(t.size for t in times)
    r = noise_var / candidate_var
    return 0.5 * (N * np.log(candidate_var / noise_var) + N * (r - 1) + ss / candidate_var)


# ------------------------------------------------------------------ pseudo-true fit


@dataclass
class PseudoTrueFit:
    model: SinusoidModel
    theta: np.ndarray
    objective: float
    gradient_norm: float
    iterations: int


def pseudo_true(times, truth: SinusoidModel, missampling: MissamplingField,
                grad_tol=1e-10, max_iter=200) -> PseudoTrueFit:
    """Least-squares fit of the nominal-time model to the missampled signal.

    Levenberg-Marquardt with analytic Jacobian, started at the true
    parameters; damping is multiplied by 10 on a rejected step. Stops once
    the gradient of ``sum (s - mu)^2`` has norm ``<= grad_tol * N``.
    """
    times = [np.asarray(t, dtype=float) for t in times]
    K, M = truth.n_components, truth.n_records
    if len(times) != M:
        raise ValueError(f"{len(times)} time vectors for a model with {M} records")
    N = sum(t.size for t in times)
    s = np.concatenate(true_signal(times, truth, missampling))
    theta = pack(truth)

    def resid(th):
        return s - np.concatenate(model_mean(th, times, K, M))

    r = resid(theta)
    f = float(r @ r)
    if f == 0.0:
        return PseudoTrueFit(truth, theta, 0.0, 0.0, 0)
    lam = 1e-3
    it = 0
    for it in range(1, max_iter + 1):
        J = mean_gradient(theta, times, K, M)
        g = J.T @ r
        gnorm = 2 * float(np.linalg.norm(g))
        if gnorm <= grad_tol * N:
            break
        JtJ = J.T @ J
        d = np.diag(JtJ).copy()
        d[d == 0] = 1.0
        improved = False
        for _ in range(30):
            try:
                step = np.linalg.solve(JtJ + lam * np.diag(d), g)
            except np.linalg.LinAlgError:
                lam *= 10
                continue
            cand = theta + step
            rc = resid(cand)
            fc = float(rc @ rc)
            accept = fc < f
            if not accept and fc <= f * (1 + 1e-12):
                # decreases below round-off: accept if the gradient shrinks
                gc = mean_gradient(cand, times, K, M).T @ rc
                accept = 2 * float(np.linalg.norm(gc)) < gnorm
            if accept:
                theta, r, f = cand, rc, min(f, fc)
                lam = max(lam / 10, 1e-12)
                improved = True
                break
            lam *= 10
        if not improved:
            break
    J = mean_gradient(theta, times, K, M)
    gnorm = 2 * float(np.linalg.norm(J.T @ r))
    if gnorm > grad_tol * N:
        best = PseudoTrueFit(unpack(theta, K, M), theta, f, gnorm, it)
        raise BoundComputationError(
            f"pseudo-true fit stalled with gradient norm {gnorm:.3g} > {grad_tol * N:.3g}", best
        )
    return PseudoTrueFit(unpack(theta, K, M), theta, f, gnorm, it)


# ------------------------------------------------------------------ information matrices


def _check_nondegenerate(M_, K, M, what):
    names = parameter_names(K, M)
    d = np.abs(np.diag(M_))
    scale = d.max() if d.size else 0.0
    if scale == 0:
        raise BoundComputationError(f"{what} is identically zero")
    bad = np.flatnonzero(d <= 1e-13 * scale)
    if bad.size:
        raise BoundComputationError(f"{what} is singular: parameter {names[bad[0]]} has no information")
    cond = np.linalg.cond(M_)
    if not np.isfinite(cond) or cond > 1e14:
        ev, V = np.linalg.eigh(0.5 * (M_ + M_.T))
        j = int(np.argmin(np.abs(ev)))
        raise BoundComputationError(
            f"{what} is singular along parameter {names[int(np.argmax(np.abs(V[:, j])))]}"
        )


def fim_a(theta0, times, signal, sigma_eps2, K, M):
    """``(1/s2) sum_t [kappa_t d2mu_t - dmu_t dmu_t^T]`` with ``kappa = s - mu``."""
    theta0 = np.asarray(theta0, dtype=float)
    mu = model_mean(theta0, times, K, M)
    kappa = [s - m for s, m in zip(signal, mu)]
    J = mean_gradient(theta0, times, K, M)
    A = (weighted_hessian_sum(theta0, times, kappa, K, M) - J.T @ J) / sigma_eps2
    A = 0.5 * (A + A.T)
    _check_nondegenerate(A, K, M, "A")
    return A


def fim_b(theta0, times, noise_var, sigma_eps2, K, M):
    """``(noise_var / s2^2) sum_t dmu_t dmu_t^T``."""
    J = mean_gradient(np.asarray(theta0, dtype=float), times, K, M)
    return noise_var / sigma_eps2**2 * (J.T @ J)


# ------------------------------------------------------------------ report


@dataclass
class BoundReport:
    pseudo_true: SinusoidModel
    sigma_eps_sq: float
    matrix_a: np.ndarray
    matrix_b: np.ndarray
    mcrb_core: np.ndarray
    bias_sq: np.ndarray
    lb: np.ndarray
    crb: np.ndarray

    @property
    def n_components(self):
        return self.pseudo_true.n_components

    def _freq(self, mat):
        K = self.n_components
        return np.diag(mat)[:K].copy()

    @property
    def crb_freq(self):
        return self._freq(self.crb)

    @property
    def mcrb_freq(self):
        return self._freq(self.mcrb_core)

    @property
    def bias_sq_freq(self):
        return self._freq(self.bias_sq)

    @property
    def lb_freq(self):
        return self._freq(self.lb)

    def to_dict(self):
        return {
            "pseudo_true": self.pseudo_true.to_dict(),
            "sigma_eps_sq": self.sigma_eps_sq,
            "matrix_a": self.matrix_a.tolist(),
            "matrix_b": self.matrix_b.tolist(),
            "mcrb_core": self.mcrb_core.tolist(),
            "bias_sq": self.bias_sq.tolist(),
            "lb": self.lb.tolist(),
            "crb": self.crb.tolist(),
        }

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d):
        arr = {k: np.asarray(d[k], dtype=float) for k in
               ("matrix_a", "matrix_b", "mcrb_core", "bias_sq", "lb", "crb")}
        return cls(SinusoidModel.from_dict(d["pseudo_true"]), float(d["sigma_eps_sq"]), **arr)


def sandwich(A, B):
    """``A^{-1} B A^{-1}`` via two solves, symmetrized."""
    X = np.linalg.solve(A, B)
    C = np.linalg.solve(A, X.T).T
    return 0.5 * (C + C.T)


def parameter_error(truth: SinusoidModel, theta0) -> np.ndarray:
    """``theta_true - theta0`` with phase differences wrapped."""
    K, M = truth.n_components, truth.n_records
    d = pack(truth) - np.asarray(theta0, dtype=float)
    d[K + K * M :] = wrap_phase(d[K + K * M :])
    return d


def lower_bound(truth: SinusoidModel, theta0, A, B, crb) -> BoundReport:
    """Assemble ``A^-1 B A^-1 + (theta~ - theta0)(theta~ - theta0)^T``."""
    K, M = truth.n_components, truth.n_records
    core = sandwich(A, B)
    e = parameter_error(truth, theta0)
    bias = np.outer(e, e)
    return BoundReport(unpack(theta0, K, M), float("nan"), A, B, core, bias, core + bias, crb)


def _chain(times, truth, missampling, noise_var):
    K, M = truth.n_components, truth.n_records
    fit = pseudo_true(times, truth, missampling)
    s = true_signal(times, truth, missampling)
    N = sum(t.size for t in times)
    s2 = sigma_eps_sq(fit.objective, N, noise_var)
    A = fim_a(fit.theta, times, s, s2, K, M)
    B = fim_b(fit.theta, times, noise_var, s2, K, M)
    return fit, s2, A, B


def compute_bounds(times, truth: SinusoidModel, missampling: MissamplingField, noise_var) -> BoundReport:
    """Full bound report for one missampling realization.

    The CRB entry re-runs the same chain with the missampling set to zero.
    """
    times = [np.asarray(t, dtype=float) for t in times]
    if noise_var <= 0:
        raise ValueError("noise_var must be positive")
    fit, s2, A, B = _chain(times, truth, missampling, noise_var)
    zero = MissamplingField(tuple(np.zeros(t.size) for t in times))
    _, _, A0, B0 = _chain(times, truth, zero, noise_var)
    rep = lower_bound(truth, fit.theta, A, B, sandwich(A0, B0))
    rep.sigma_eps_sq = s2
    return rep


# ------------------------------------------------------------------ periodogram attenuation


def expected_periodogram_peak(rho, omega1, sigma_delta_sq, noise_var, N):
    """Mean periodogram value at the true frequency under Gaussian missampling."""
    if N < 1:
        raise ValueError("N must be >= 1")
    return (N * (rho**2 + noise_var) + rho**2 * N * (N - 1) * np.exp(-(omega1**2) * sigma_delta_sq)) / N


def simulate_periodogram_peak(rho, omega1, sigma_delta_sq, noise_var, N, draws, rng,
                              times=None, chunk=20_000):
    """Monte Carlo mean and standard error of the peak periodogram value.

    Data are ``rho exp(i w1 (t + Delta_t)) + e_t`` with ``Delta_t ~ N(0, sigma_delta_sq)``
    and circular complex noise of variance ``noise_var``; the periodogram is
    ``|sum_t y_t exp(-i w1 t)|^2 / N``.
    """
    t = np.arange(N, dtype=float) if times is None else np.asarray(times, dtype=float)
    total = 0.0
    total_sq = 0.0
    done = 0
    while done < draws:
        n = min(chunk, draws - done)
        delta = rng.normal(scale=np.sqrt(sigma_delta_sq), size=(n, t.size))
        noise = rng.normal(scale=np.sqrt(noise_var / 2), size=(n, t.size, 2))
        y = rho * np.exp(1j * omega1 * (t + delta)) + noise[..., 0] + 1j * noise[..., 1]
        p = np.abs((y * np.exp(-1j * omega1 * t)).sum(axis=1)) ** 2 / t.size
        total += p.sum()
        total_sq += (p**2).sum()
        done += n
    mean = total / draws
    var = max(total_sq / draws - mean**2, 0.0)
    return mean, np.sqrt(var / draws)
